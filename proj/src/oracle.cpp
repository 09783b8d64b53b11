#include "metaoth/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "metaoth/datagen.hpp"
#include "metaoth/parallel.hpp"
#include "metaoth/rng.hpp"

namespace metaoth {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double entropy_nats(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double sequence_log_likelihood(const GameSpec& spec, std::span<const Token> tokens) {
  GameState state(spec);
  double ll = 0.0;
  for (Token t : tokens) {
    if (t >= kBoardTiles) {
      // Skip acknowledges a forced pass (probability 1); pad carries no move.
      if (!state.play_token(t)) return kNegInf;
      continue;
    }
    const std::uint64_t moves = state.next_placements();
    if (moves == 0 || !state.play_token(t)) return kNegInf;
    ll -= std::log(static_cast<double>(std::popcount(moves)));
  }
  return ll;
}

MixtureTracker::MixtureTracker(std::span<const GameSpec> specs, std::span<const double> priors) {
  if (specs.size() != priors.size() || specs.empty()) {
    throw std::invalid_argument("need one prior per game");
  }
  double total = 0.0;
  for (double p : priors) total += p;
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("priors must sum to 1");
  for (std::size_t g = 0; g < specs.size(); ++g) {
    states_.emplace_back(specs[g]);
    log_prior_.push_back(priors[g] > 0.0 ? std::log(priors[g]) : kNegInf);
    log_lik_.push_back(0.0);
    alive_.push_back(priors[g] > 0.0);
  }
}

bool MixtureTracker::step(Token token) {
  for (std::size_t g = 0; g < states_.size(); ++g) {
    if (!alive_[g]) continue;
    if (token >= kBoardTiles) {
      if (!states_[g].play_token(token)) {
        alive_[g] = false;
        log_lik_[g] = kNegInf;
      }
      continue;
    }
    const std::uint64_t moves = states_[g].next_placements();
    if (moves == 0 || !states_[g].play_token(token)) {
      alive_[g] = false;
      log_lik_[g] = kNegInf;
      continue;
    }
    log_lik_[g] -= std::log(static_cast<double>(std::popcount(moves)));
  }
  if (token < kBoardTiles) ++length_;
  return any_consistent();
}

bool MixtureTracker::any_consistent() const {
  return std::find(alive_.begin(), alive_.end(), true) != alive_.end();
}

std::vector<double> mixture_posterior(std::span<const double> priors, std::span<const double> log_likelihoods) {
  if (priors.size() != log_likelihoods.size()) throw std::invalid_argument("need one likelihood per prior");
  std::vector<double> joint(priors.size());
  for (std::size_t g = 0; g < priors.size(); ++g) {
    joint[g] = priors[g] > 0.0 ? log_likelihoods[g] + std::log(priors[g]) : kNegInf;
  }
  const double z = log_sum_exp(joint);
  if (z == kNegInf) throw AllGamesIllegal("sequence is illegal under every game");
  std::vector<double> post(priors.size());
  for (std::size_t g = 0; g < priors.size(); ++g) post[g] = joint[g] == kNegInf ? 0.0 : std::exp(joint[g] - z);
  return post;
}

std::vector<double> MixtureTracker::posterior() const {
  std::vector<double> joint(states_.size());
  for (std::size_t g = 0; g < states_.size(); ++g) {
    joint[g] = alive_[g] ? log_lik_[g] + log_prior_[g] : kNegInf;
  }
  const double z = log_sum_exp(joint);
  if (z == kNegInf) throw AllGamesIllegal("sequence is illegal under every game");
  std::vector<double> post(states_.size());
  for (std::size_t g = 0; g < states_.size(); ++g) post[g] = alive_[g] ? std::exp(joint[g] - z) : 0.0;
  return post;
}

std::optional<GroundTruthDistribution> MixtureTracker::next_distribution() const {
  auto post = posterior();
  double mass = 0.0;
  for (std::size_t g = 0; g < states_.size(); ++g) {
    if (states_[g].next_placements() == 0) post[g] = 0.0;
    mass += post[g];
  }
  if (mass <= 0.0) return std::nullopt;
  GroundTruthDistribution gt;
  for (std::size_t g = 0; g < states_.size(); ++g) {
    if (post[g] <= 0.0) continue;
    const std::uint64_t moves = states_[g].next_placements();
    const double w = post[g] / mass / static_cast<double>(std::popcount(moves));
    const auto& syntax = states_[g].spec().syntax;
    for (std::uint64_t m = moves; m; m &= m - 1) gt.probs[syntax.to_token(std::countr_zero(m))] += w;
  }
  gt.entropy = entropy_nats(gt.probs);
  return gt;
}

PosteriorTrace game_posterior(std::span<const GameSpec> specs, std::span<const double> priors,
                              std::span<const Token> tokens) {
  MixtureTracker tracker(specs, priors);
  PosteriorTrace trace;
  for (const auto& s : specs) trace.games.push_back(s.id);
  auto record = [&] {
    trace.posterior.push_back(tracker.posterior());
    trace.entropy.push_back(entropy_nats(trace.posterior.back()));
  };
  record();
  for (Token t : tokens) {
    tracker.step(t);
    record();
  }
  return trace;
}

GroundTruthDistribution ground_truth_next(std::span<const GameSpec> specs,
                                          std::span<const double> priors,
                                          std::span<const Token> tokens) {
  MixtureTracker tracker(specs, priors);
  for (Token t : tokens) tracker.step(t);
  auto gt = tracker.next_distribution();
  if (!gt) throw AllGamesIllegal("no game continues after this sequence");
  return *gt;
}

std::vector<std::optional<GroundTruthDistribution>> ground_truth_trace(
    std::span<const GameSpec> specs, std::span<const double> priors, std::span<const Token> tokens) {
  MixtureTracker tracker(specs, priors);
  std::vector<std::optional<GroundTruthDistribution>> out;
  out.reserve(tokens.size() + 1);
  out.push_back(tracker.next_distribution());
  for (Token t : tokens) {
    if (!tracker.step(t)) throw AllGamesIllegal("sequence is illegal under every game");
    out.push_back(tracker.next_distribution());
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    const double qi = i < q.size() ? q[i] : 0.0;
    if (qi <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * (std::log(p[i]) - std::log(qi));
  }
  return kl;
}

double alpha_score(const GroundTruthDistribution& gt, std::span<const double> model_probs) {
  const int n_moves = gt.has_pass() ? kMoveSpace : kBoardTiles;
  if (static_cast<int>(model_probs.size()) < n_moves) {
    throw std::invalid_argument("model distribution does not cover the move set");
  }
  // KL(P || U) = log|M| - H(P), restricted to P's support.
  double kl_uniform = 0.0;
  for (int i = 0; i < n_moves; ++i) {
    const double p = gt.probs[i];
    if (p > 0.0) kl_uniform += p * (std::log(p) + std::log(static_cast<double>(n_moves)));
  }
  if (kl_uniform <= 1e-15) throw DegenerateGroundTruth("ground truth equals the uniform baseline");
  const double kl_model = kl_divergence(std::span<const double>(gt.probs.data(), n_moves),
                                        model_probs.subspan(0, n_moves));
  if (std::isinf(kl_model)) return kNegInf;
  return 1.0 - kl_model / kl_uniform;
}

MeanCI mean_ci(std::span<const double> values, std::optional<double> floor) {
  MeanCI r;
  r.n = values.size();
  if (values.empty()) {
    r.mean = std::numeric_limits<double>::quiet_NaN();
    r.ci95 = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double sum = 0.0;
  for (double v : values) {
    if (v == kNegInf) ++r.n_neg_inf;
    sum += floor ? std::max(v, *floor) : v;
  }
  r.mean = sum / static_cast<double>(r.n);
  if (!std::isfinite(r.mean)) {
    r.ci95 = std::numeric_limits<double>::infinity();
    return r;
  }
  double ss = 0.0;
  for (double v : values) {
    const double x = floor ? std::max(v, *floor) : v;
    ss += (x - r.mean) * (x - r.mean);
  }
  const double var = r.n > 1 ? ss / static_cast<double>(r.n - 1) : 0.0;
  r.ci95 = 1.96 * std::sqrt(var / static_cast<double>(r.n));
  return r;
}

namespace {

template <typename Pred>
MeanCI collect(const std::vector<AlphaSample>& samples, Pred&& keep, std::optional<double> floor) {
  std::vector<double> v;
  for (const auto& s : samples) {
    if (keep(s)) v.push_back(s.alpha);
  }
  return mean_ci(v, floor);
}

}  // namespace

MeanCI AlphaReport::overall(std::optional<double> floor) const {
  return collect(samples_, [](const AlphaSample&) { return true; }, floor);
}

MeanCI AlphaReport::for_game(GameId game, std::optional<double> floor) const {
  return collect(samples_, [&](const AlphaSample& s) { return s.game == game; }, floor);
}

MeanCI AlphaReport::for_move(GameId game, int move_number, std::optional<double> floor) const {
  return collect(
      samples_, [&](const AlphaSample& s) { return s.game == game && s.move_number == move_number; }, floor);
}

std::vector<GameId> AlphaReport::games() const {
  std::vector<GameId> out;
  for (const auto& s : samples_) {
    if (std::find(out.begin(), out.end(), s.game) == out.end()) out.push_back(s.game);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int AlphaReport::max_move() const {
  int m = 0;
  for (const auto& s : samples_) m = std::max(m, s.move_number);
  return m;
}

void AlphaReport::write_by_move_csv(std::ostream& out) const {
  std::map<std::pair<GameId, int>, std::vector<double>> groups;
  for (const auto& s : samples_) groups[{s.game, s.move_number}].push_back(s.alpha);
  out << "game,move_number,mean_alpha,ci95,n\n";
  for (const auto& [key, vals] : groups) {
    const auto r = mean_ci(vals);
    out << game_name(key.first) << ',' << key.second << ',' << r.mean << ',' << r.ci95 << ',' << r.n << '\n';
  }
}

AmbiguityReport is_ambiguous(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens) {
  AmbiguityReport r;
  GameState sa(a);
  GameState sb(b);
  r.legal_a = true;
  r.legal_b = true;
  for (Token t : tokens) {
    r.legal_a = r.legal_a && sa.play_token(t);
    r.legal_b = r.legal_b && sb.play_token(t);
  }
  if (!r.legal_a || !r.legal_b) return r;
  for (int i = 0; i < kBoardTiles; ++i) {
    if (sa.board().at(i) != sb.board().at(i)) r.differing_tiles.push_back(i);
  }
  std::array<bool, kBoardTiles> in_a{};
  std::array<bool, kBoardTiles> in_b{};
  for (std::uint64_t m = sa.next_placements(); m; m &= m - 1) in_a[a.syntax.to_token(std::countr_zero(m))] = true;
  for (std::uint64_t m = sb.next_placements(); m; m &= m - 1) in_b[b.syntax.to_token(std::countr_zero(m))] = true;
  for (int t = 0; t < kBoardTiles; ++t) {
    if (in_a[t] != in_b[t]) r.differing_tokens.push_back(t);
  }
  r.ambiguous = !r.differing_tiles.empty() || !r.differing_tokens.empty() ||
                sa.board().to_move() != sb.board().to_move();
  return r;
}

namespace {

bool next_sets_differ(const GameState& sa, const GameState& sb) {
  const auto& ma = sa.spec().syntax;
  const auto& mb = sb.spec().syntax;
  if (ma == mb) return sa.next_placements() != sb.next_placements();
  std::uint64_t ta = 0;
  std::uint64_t tb = 0;
  for (std::uint64_t m = sa.next_placements(); m; m &= m - 1) ta |= 1ULL << ma.to_token(std::countr_zero(m));
  for (std::uint64_t m = sb.next_placements(); m; m &= m - 1) tb |= 1ULL << mb.to_token(std::countr_zero(m));
  return ta != tb;
}

}  // namespace

TileDivergence tile_divergence_probability(const GameSpec& a, const GameSpec& b,
                                           std::uint64_t n_samples, std::uint64_t seed, int threads) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
  constexpr std::uint64_t kChunk = 1024;
  const std::uint64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  struct Partial {
    std::vector<std::array<std::uint64_t, kBoardTiles>> diff;
    std::vector<std::uint64_t> n;
  };
  std::vector<Partial> partials(n_chunks);
  const std::array<GameSpec, 2> specs{a, b};

  for_each_chunk(n_samples, kChunk, threads, [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
    Partial& p = partials[c];
    p.diff.assign(kMaxPlacements + 1, {});
    p.n.assign(kMaxPlacements + 1, 0);
    for (std::uint64_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      const GameSpec& source = specs[rng.uniform() < 0.5 ? 0 : 1];
      const auto rec = sample_sequence(source, rng);
      GameState sa(specs[0]);
      GameState sb(specs[1]);
      for (int t = 0; t < rec.length(); ++t) {
        if (!sa.play_token(rec.tokens[t]) || !sb.play_token(rec.tokens[t])) break;
        bool differ = next_sets_differ(sa, sb);
        std::array<bool, kBoardTiles> d{};
        for (int k = 0; k < kBoardTiles; ++k) {
          d[k] = sa.board().at(k) != sb.board().at(k);
          differ = differ || d[k];
        }
        if (!differ) continue;
        const int len = t + 1;
        ++p.n[len];
        for (int k = 0; k < kBoardTiles; ++k) p.diff[len][k] += d[k] ? 1 : 0;
      }
    }
  });

  TileDivergence out;
  out.n_sequences = n_samples;
  out.by_move.assign(kMaxPlacements + 1, {});
  out.n_by_move.assign(kMaxPlacements + 1, 0);
  std::array<std::uint64_t, kBoardTiles> total{};
  std::vector<std::array<std::uint64_t, kBoardTiles>> per_move(kMaxPlacements + 1);
  for (const auto& p : partials) {
    for (int t = 0; t <= kMaxPlacements; ++t) {
      out.n_by_move[t] += p.n[t];
      for (int k = 0; k < kBoardTiles; ++k) {
        per_move[t][k] += p.diff[t][k];
        total[k] += p.diff[t][k];
      }
    }
  }
  for (int t = 0; t <= kMaxPlacements; ++t) out.n_ambiguous += out.n_by_move[t];
  for (int k = 0; k < kBoardTiles; ++k) {
    out.probability[k] = out.n_ambiguous ? static_cast<double>(total[k]) / static_cast<double>(out.n_ambiguous) : 0.0;
  }
  for (int t = 0; t <= kMaxPlacements; ++t) {
    for (int k = 0; k < kBoardTiles; ++k) {
      out.by_move[t][k] =
          out.n_by_move[t] ? static_cast<double>(per_move[t][k]) / static_cast<double>(out.n_by_move[t]) : 0.0;
    }
  }
  return out;
}

EntropyCurve posterior_entropy_curve(std::span<const GameSpec> specs, std::span<const double> priors,
                                     std::uint64_t n_samples, std::uint64_t seed, int threads) {
  constexpr std::uint64_t kChunk = 1024;
  const std::uint64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> sums(n_chunks, std::vector<double>(kMaxPlacements + 1, 0.0));
  std::vector<std::vector<std::uint64_t>> counts(n_chunks, std::vector<std::uint64_t>(kMaxPlacements + 1, 0));

  for_each_chunk(n_samples, kChunk, threads, [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      const double u = rng.uniform();
      std::size_t g = 0;
      double acc = 0.0;
      for (g = 0; g + 1 < specs.size(); ++g) {
        acc += priors[g];
        if (u < acc) break;
      }
      const auto rec = sample_sequence(specs[g], rng);
      MixtureTracker tracker(specs, priors);
      sums[c][0] += entropy_nats(tracker.posterior());
      ++counts[c][0];
      for (int t = 0; t < rec.length(); ++t) {
        tracker.step(rec.tokens[t]);
        sums[c][t + 1] += entropy_nats(tracker.posterior());
        ++counts[c][t + 1];
      }
    }
  });

  EntropyCurve out;
  out.mean_entropy.assign(kMaxPlacements + 1, 0.0);
  out.n.assign(kMaxPlacements + 1, 0);
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    for (int t = 0; t <= kMaxPlacements; ++t) {
      out.mean_entropy[t] += sums[c][t];
      out.n[t] += counts[c][t];
    }
  }
  for (int t = 0; t <= kMaxPlacements; ++t) {
    if (out.n[t]) out.mean_entropy[t] /= static_cast<double>(out.n[t]);
  }
  return out;
}

AmbiguityCurve ambiguity_counts(const GameSpec& sampled, const GameSpec& other, std::uint64_t n_samples,
                                std::uint64_t seed, int threads) {
  constexpr std::uint64_t kChunk = 1024;
  const std::uint64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<std::vector<std::uint64_t>> counts(n_chunks), reached(n_chunks);
  for_each_chunk(n_samples, kChunk, threads, [&](std::uint64_t c, std::uint64_t begin, std::uint64_t end) {
    counts[c].assign(kMaxPlacements + 1, 0);
    reached[c].assign(kMaxPlacements + 1, 0);
    for (std::uint64_t i = begin; i < end; ++i) {
      const auto rec = sample_sequence(sampled, derive_seed(seed, i));
      for (int t = 0; t <= rec.length(); ++t) ++reached[c][t];
      GameState st(other);
      ++counts[c][0];
      for (int t = 0; t < rec.length(); ++t) {
        if (!st.play_token(rec.tokens[t])) break;
        ++counts[c][t + 1];
      }
    }
  });
  AmbiguityCurve out;
  out.n_sequences = n_samples;
  out.counts.assign(kMaxPlacements + 1, 0);
  out.reached.assign(kMaxPlacements + 1, 0);
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    for (int t = 0; t <= kMaxPlacements; ++t) {
      out.counts[t] += counts[c][t];
      out.reached[t] += reached[c][t];
    }
  }
  return out;
}

}  // namespace metaoth
