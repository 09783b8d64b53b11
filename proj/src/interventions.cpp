#include "metaoth/interventions.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "metaoth/rng.hpp"

namespace metaoth::interventions {
namespace {

using nn::Mat;
using nn::TokenBatch;

Tile tile_for(TileClass c, Color mover) {
  switch (c) {
    case TileClass::Mine:
      return tile_of(mover);
    case TileClass::Yours:
      return tile_of(opponent(mover));
    case TileClass::Empty:
      break;
  }
  return Tile::Empty;
}

GameState play_prefix(const GameSpec& spec, std::span<const Token> prefix) {
  GameState st(spec);
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (!st.play_token(prefix[k])) {
      throw probes::IllegalSequence("prefix token " + std::to_string(prefix[k]) + " at position " +
                                    std::to_string(k) + " is illegal under " + std::string(game_name(spec.id)));
    }
  }
  return st;
}

double class_probability(const probes::ProbeWeights& probe, const Eigen::VectorXd& h, int tile, TileClass c) {
  double z[probes::kClasses];
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < probes::kClasses; ++k) {
    z[k] = probe.observed[tile][k] ? probe.weights.row(tile * probes::kClasses + k).dot(h) +
                                         probe.biases[tile * probes::kClasses + k]
                                   : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, z[k]);
  }
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  return z[static_cast<int>(c)] / sum;
}

TokenBatch single(std::span<const Token> tokens) {
  TokenBatch b(1, static_cast<int>(tokens.size()));
  std::copy(tokens.begin(), tokens.end(), b.tokens.begin());
  return b;
}

// Batch of truncated records; lengths[b] is the number of real tokens.
TokenBatch make_batch(std::span<const std::vector<Token>> seqs, std::vector<int>& lengths) {
  int len = 1;
  for (const auto& s : seqs) len = std::max(len, static_cast<int>(s.size()));
  TokenBatch batch(static_cast<int>(seqs.size()), len);
  lengths.clear();
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::copy(seqs[b].begin(), seqs[b].end(), batch.tokens.begin() + static_cast<std::ptrdiff_t>(b * len));
    lengths.push_back(static_cast<int>(seqs[b].size()));
  }
  return batch;
}

std::vector<double> row_probs(const Mat<float>& logits, Eigen::Index row) {
  return nn::softmax_row(std::span<const float>(logits.row(row).data(), static_cast<std::size_t>(logits.cols())));
}

std::optional<double> safe_alpha(const std::optional<GroundTruthDistribution>& gt, std::span<const double> probs) {
  if (!gt) return std::nullopt;
  try {
    return alpha_score(*gt, probs);
  } catch (const DegenerateGroundTruth&) {
    return std::nullopt;
  }
}

}  // namespace

BoardEditResult board_intervene(const nn::Transformer<float>& model, const LayerProbes& probes,
                                const GameSpec& spec, std::span<const Token> prefix, const BoardEdit& edit,
                                EditScope scope, bool unit_directions) {
  if (edit.tile < 0 || edit.tile >= kBoardTiles) throw std::invalid_argument("edit tile out of range");
  if (!std::isfinite(edit.gamma)) throw std::invalid_argument("gamma must be finite");
  if (prefix.empty()) throw std::invalid_argument("board_intervene needs a non-empty prefix");
  const auto& cfg = model.config();
  if (static_cast<int>(prefix.size()) > cfg.context_len) throw std::invalid_argument("prefix exceeds context");
  if (probes.empty()) throw LayerMismatch("no probes supplied");
  for (const auto& [l, p] : probes) {
    if (l < 1 || l > cfg.n_layers || p.layer != l || p.d_model() != cfg.d_model) {
      throw LayerMismatch("probe for layer " + std::to_string(l) + " does not match the model");
    }
  }

  BoardEditResult res;
  const GameState st = play_prefix(spec, prefix);
  const Board& board = st.board();
  const Color mover = board.to_move();
  const TileClass current = probes::relabel(board, mover)[edit.tile];
  res.valid = edit.target != current;
  if (!res.valid) return res;

  Board edited = board;
  edited.set(edit.tile, tile_for(edit.target, mover));
  const std::uint64_t valid = placement_mask(spec, edited, mover);
  res.k = std::popcount(valid);
  if (res.k == 0) return res;
  res.evaluated = true;

  const int len = static_cast<int>(prefix.size());
  const TokenBatch batch = single(prefix);
  nn::ResidualHook<float> hook;
  if (edit.gamma != 0.0) {
    hook = [&](int layer, Eigen::Ref<Mat<float>> h, int, int) {
      const auto it = probes.find(layer);
      if (it == probes.end()) return;
      Eigen::RowVectorXd w = it->second.row(edit.tile, edit.target);
      if (unit_directions) w.normalize();
      const Eigen::RowVectorXf delta = (edit.gamma * w).cast<float>();
      if (scope == EditScope::FinalPosition) {
        h.row(len - 1) += delta;
      } else {
        h.rowwise() += delta;
      }
    };
  }
  nn::ActivationCache<float> cache;
  const Mat<float> logits = model.forward(batch, &cache, hook);
  const auto probs = row_probs(logits, len - 1);

  std::vector<int> order(kBoardTiles);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  std::uint64_t predicted = 0;
  for (int i = 0; i < res.k; ++i) predicted |= 1ULL << spec.syntax.to_board(order[i]);
  res.false_positives = std::popcount(predicted & ~valid);
  res.false_negatives = std::popcount(valid & ~predicted);

  if (const auto it = probes.find(cfg.n_layers); it != probes.end()) {
    res.probe_after = class_probability(it->second, cache.row(cfg.n_layers, 0, len - 1).cast<double>().transpose(),
                                        edit.tile, edit.target);
    if (edit.gamma == 0.0) {
      res.probe_before = res.probe_after;
    } else {
      nn::ActivationCache<float> base;
      model.forward(batch, &base);
      res.probe_before = class_probability(
          it->second, base.row(cfg.n_layers, 0, len - 1).cast<double>().transpose(), edit.tile, edit.target);
    }
  }
  return res;
}

InterventionReport summarize(std::string condition, std::vector<BoardEditResult> results) {
  InterventionReport rep;
  rep.condition = std::move(condition);
  std::vector<double> errs, rates;
  double fp = 0.0, fn = 0.0;
  for (const auto& r : results) {
    if (!r.valid) ++rep.n_invalid;
    if (!r.evaluated) continue;
    errs.push_back(r.errors());
    rates.push_back(static_cast<double>(r.errors()) / (2.0 * r.k));
    fp += r.false_positives;
    fn += r.false_negatives;
  }
  rep.errors = mean_ci(errs);
  rep.error_rate = mean_ci(rates);
  if (!errs.empty()) {
    rep.mean_fp = fp / static_cast<double>(errs.size());
    rep.mean_fn = fn / static_cast<double>(errs.size());
  }
  rep.results = std::move(results);
  return rep;
}

std::vector<EditCase> sample_edit_cases(std::span<const SequenceRecord> records, const GameSpec& spec, int n,
                                        double gamma, std::uint64_t seed) {
  std::vector<EditCase> out;
  if (records.empty()) return out;
  Rng rng(derive_seed(seed, 0xed17));
  while (static_cast<int>(out.size()) < n) {
    EditCase c;
    c.sequence = rng.below(records.size());
    const auto& toks = records[c.sequence].tokens;
    if (toks.size() < 2) continue;
    c.prefix_len = 1 + static_cast<int>(rng.below(std::min<std::size_t>(toks.size() - 1, kMaxPlacements - 1)));
    const GameState st = play_prefix(spec, std::span(toks).first(static_cast<std::size_t>(c.prefix_len)));
    c.edit.tile = static_cast<int>(rng.below(kBoardTiles));
    const auto current = probes::relabel(st.board(), st.board().to_move())[c.edit.tile];
    const int shift = 1 + static_cast<int>(rng.below(2));
    c.edit.target = static_cast<TileClass>((static_cast<int>(current) + shift) % probes::kClasses);
    c.edit.gamma = gamma;
    out.push_back(c);
  }
  return out;
}

int ambiguous_prefix_length(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens) {
  GameState sa(a), sb(b);
  int n = 0;
  for (Token t : tokens) {
    if (!sa.play_token(t) || !sb.play_token(t)) break;
    ++n;
  }
  return n;
}

std::vector<Token> remap_tokens(const GameSpec& from, const GameSpec& to, std::span<const Token> tokens) {
  std::vector<Token> out(tokens.begin(), tokens.end());
  for (auto& t : out) {
    if (t < kBoardTiles) t = static_cast<Token>(to.syntax.to_token(from.syntax.to_board(t)));
  }
  return out;
}

std::vector<LayerSteering> game_steer(const nn::Transformer<float>& model, const SteeringSpec& steering,
                                      std::span<const SequenceRecord> sequences, const GameSpec& source,
                                      const GameSpec& target, const DownstreamProbe& downstream) {
  const auto& cfg = model.config();
  for (int l : steering.layers) {
    if (l < 1 || l > cfg.n_layers) throw LayerMismatch("steering layer " + std::to_string(l) + " out of range");
    const auto it = steering.vectors.find(l);
    if (it == steering.vectors.end() || it->second.size() != cfg.d_model) {
      throw LayerMismatch("no steering vector of width d_model for layer " + std::to_string(l));
    }
  }
  if (downstream.probe && downstream.divergence_tiles_only && !downstream.other) {
    throw std::invalid_argument("divergence-tile scoring needs the other game");
  }

  std::vector<std::vector<Token>> seqs;
  for (const auto& r : sequences) {
    const int n = std::min(ambiguous_prefix_length(source, target, r.tokens), cfg.context_len);
    if (n == 0) throw NotAmbiguous("sequence is not legal under both games");
    seqs.emplace_back(r.tokens.begin(), r.tokens.begin() + n);
  }

  const GameSpec target_only[] = {target};
  const double one[] = {1.0};
  struct Sums {
    double null_sum = 0.0, steer_sum = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::map<int, Sums>> sums(steering.layers.size());
  std::vector<probes::AccuracyTally> acc_null(steering.layers.size()), acc_steer(steering.layers.size());

  constexpr std::size_t kBatch = 64;
  std::vector<int> lengths;
  for (std::size_t begin = 0; begin < seqs.size(); begin += kBatch) {
    const std::size_t end = std::min(seqs.size(), begin + kBatch);
    const auto group = std::span(seqs).subspan(begin, end - begin);
    const TokenBatch batch = make_batch(group, lengths);
    const int len = batch.len;

    std::vector<std::vector<std::optional<GroundTruthDistribution>>> gts;
    std::vector<std::vector<probes::TileLabels>> labels;
    std::vector<std::vector<std::uint64_t>> masks;
    for (const auto& s : group) {
      gts.push_back(ground_truth_trace(target_only, one, s));
      if (downstream.probe) {
        labels.push_back(probes::make_labels(target, s).labels);
        if (downstream.divergence_tiles_only) masks.push_back(probes::divergence_masks(target, *downstream.other, s));
      }
    }
    auto positions = [&](int b) {
      std::pair<int, int> r{steering.all_positions ? 0 : lengths[b] - 1, lengths[b]};
      return r;
    };
    auto tally_probe = [&](const nn::ActivationCache<float>& cache, probes::AccuracyTally& tally) {
      const auto& probe = *downstream.probe;
      for (std::size_t b = 0; b < group.size(); ++b) {
        const auto [t0, t1] = positions(static_cast<int>(b));
        for (int t = t0; t < t1; ++t) {
          probes::Matrix h = cache.row(probe.layer, static_cast<int>(b), t).cast<double>();
          const auto pred = probes::probe_board(probe, h, probe.layer);
          const auto& truth = labels[b][static_cast<std::size_t>(t) + 1];
          const std::uint64_t m = downstream.divergence_tiles_only ? masks[b][static_cast<std::size_t>(t) + 1] : ~0ULL;
          for (int i = 0; i < kBoardTiles; ++i) {
            if (!(m >> i & 1)) continue;
            ++tally.total;
            if (pred.classes[0][i] == truth[i]) ++tally.correct;
          }
        }
      }
    };

    nn::ActivationCache<float> null_cache;
    const Mat<float> null_logits = model.forward(batch, downstream.probe ? &null_cache : nullptr);

    for (std::size_t li = 0; li < steering.layers.size(); ++li) {
      const int layer = steering.layers[li];
      const Eigen::RowVectorXf delta =
          (steering.lambda * steering.vectors.at(layer).transpose()).cast<float>();
      nn::ResidualHook<float> hook = [&](int l, Eigen::Ref<Mat<float>> h, int nb, int) {
        if (l != layer) return;
        for (int b = 0; b < nb; ++b) {
          const auto [t0, t1] = positions(b);
          for (int t = t0; t < t1; ++t) h.row(static_cast<Eigen::Index>(b) * len + t) += delta;
        }
      };
      nn::ActivationCache<float> cache;
      const Mat<float> logits = model.forward(batch, downstream.probe ? &cache : nullptr, hook);
      for (std::size_t b = 0; b < group.size(); ++b) {
        const auto [t0, t1] = positions(static_cast<int>(b));
        for (int t = t0; t < t1; ++t) {
          const Eigen::Index row = static_cast<Eigen::Index>(b) * len + t;
          const auto& gt = gts[b][static_cast<std::size_t>(t) + 1];
          const auto a_null = safe_alpha(gt, row_probs(null_logits, row));
          const auto a_steer = safe_alpha(gt, row_probs(logits, row));
          if (!a_null || !a_steer || !std::isfinite(*a_null) || !std::isfinite(*a_steer)) continue;
          auto& s = sums[li][t + 1];
          s.null_sum += *a_null;
          s.steer_sum += *a_steer;
          ++s.n;
        }
      }
      if (downstream.probe) {
        tally_probe(cache, acc_steer[li]);
        tally_probe(null_cache, acc_null[li]);
      }
    }
  }

  auto cell = [](double null_sum, double steer_sum, std::size_t n) {
    SteerCell c;
    c.n = n;
    if (n == 0) return c;
    c.alpha_null = null_sum / static_cast<double>(n);
    c.alpha_steered = steer_sum / static_cast<double>(n);
    const double headroom = 1.0 - c.alpha_null;
    c.normalized = headroom > 0.0 ? (c.alpha_steered - c.alpha_null) / headroom : 0.0;
    return c;
  };

  std::vector<LayerSteering> out;
  for (std::size_t li = 0; li < steering.layers.size(); ++li) {
    LayerSteering ls;
    ls.layer = steering.layers[li];
    double tn = 0.0, ts = 0.0;
    std::size_t n = 0;
    for (const auto& [move, s] : sums[li]) {
      ls.by_move[move] = cell(s.null_sum, s.steer_sum, s.n);
      tn += s.null_sum;
      ts += s.steer_sum;
      n += s.n;
    }
    ls.overall = cell(tn, ts, n);
    if (downstream.probe) {
      ls.probe_accuracy_null = acc_null[li].accuracy();
      ls.probe_accuracy_steered = acc_steer[li].accuracy();
    }
    out.push_back(std::move(ls));
  }
  return out;
}

AlphaReport rotation_intervene(const nn::Transformer<float>& model, const geometry::Matrix& omega,
                               std::span<const SequenceRecord> classic, const GameSpec& classic_spec,
                               const GameSpec& target_spec, int layer, int batch_size) {
  const auto& cfg = model.config();
  if (layer < 0 || layer > cfg.n_layers) throw LayerMismatch("rotation layer out of range");
  if (layer > 0) {
    if (omega.rows() != cfg.d_model || omega.cols() != cfg.d_model) throw LayerMismatch("omega has the wrong size");
    if (!geometry::is_orthogonal(omega, 1e-6)) throw NotOrthogonal("omega is not orthogonal");
  }
  const Mat<float> omega_f = omega.cast<float>();
  const GameSpec target_only[] = {target_spec};
  const double one[] = {1.0};

  AlphaReport report;
  std::vector<std::vector<Token>> seqs;
  for (const auto& r : classic) {
    const auto n = std::min<std::size_t>(r.tokens.size(), static_cast<std::size_t>(cfg.context_len) + 1);
    seqs.emplace_back(r.tokens.begin(), r.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  }
  nn::ResidualHook<float> hook;
  if (layer > 0) {
    hook = [&](int l, Eigen::Ref<Mat<float>> h, int, int) {
      if (l == layer) h = (h * omega_f).eval();
    };
  }
  std::vector<int> lengths;
  for (std::size_t begin = 0; begin < seqs.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(seqs.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<Token>> inputs;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = seqs[i];
      inputs.emplace_back(s.begin(), s.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(s.size()),
                                                                           cfg.context_len));
    }
    const TokenBatch batch = make_batch(inputs, lengths);
    const Mat<float> logits = model.forward(batch, nullptr, hook);
    for (std::size_t b = 0; b < inputs.size(); ++b) {
      const auto& full = seqs[begin + b];
      const auto mapped = remap_tokens(classic_spec, target_spec, full);
      const auto gts = ground_truth_trace(target_only, one, mapped);
      for (int t = 0; t < lengths[b] && t + 1 < static_cast<int>(full.size()); ++t) {
        const auto a = safe_alpha(gts[static_cast<std::size_t>(t) + 1],
                                  row_probs(logits, static_cast<Eigen::Index>(b) * batch.len + t));
        if (a) report.add(target_spec.id, t + 1, *a);
      }
    }
  }
  return report;
}

RotationPairs collect_rotation_pairs(const nn::Transformer<float>& model, std::span<const SequenceRecord> classic,
                                     const GameSpec& classic_spec, const GameSpec& target_spec,
                                     std::span<const int> layers, std::size_t budget, std::uint64_t seed) {
  const auto& cfg = model.config();
  for (int l : layers) {
    if (l < 1 || l > cfg.n_layers) throw LayerMismatch("layer " + std::to_string(l) + " out of range");
  }
  std::vector<std::vector<Token>> src, dst;
  std::size_t total = 0;
  for (const auto& r : classic) {
    const auto n = std::min<std::size_t>(r.tokens.size(), static_cast<std::size_t>(cfg.context_len));
    src.emplace_back(r.tokens.begin(), r.tokens.begin() + static_cast<std::ptrdiff_t>(n));
    dst.push_back(remap_tokens(classic_spec, target_spec, src.back()));
    total += n * layers.size();
  }
  const auto keep = geometry::subsample_rows(total, budget, seed);
  RotationPairs out;
  out.source.resize(static_cast<Eigen::Index>(keep.size()), cfg.d_model);
  out.target.resize(static_cast<Eigen::Index>(keep.size()), cfg.d_model);

  std::size_t linear = 0, next = 0;
  std::vector<int> lengths;
  constexpr std::size_t kBatch = 64;
  for (std::size_t begin = 0; begin < src.size() && next < keep.size(); begin += kBatch) {
    const std::size_t end = std::min(src.size(), begin + kBatch);
    const TokenBatch bs = make_batch(std::span(src).subspan(begin, end - begin), lengths);
    const TokenBatch bt = make_batch(std::span(dst).subspan(begin, end - begin), lengths);
    nn::ActivationCache<float> cs, ct;
    model.forward(bs, &cs);
    model.forward(bt, &ct);
    for (std::size_t b = 0; b < end - begin; ++b) {
      for (int l : layers) {
        for (int t = 0; t < lengths[b]; ++t, ++linear) {
          if (next >= keep.size() || keep[next] != linear) continue;
          out.source.row(static_cast<Eigen::Index>(next)) = cs.row(l, static_cast<int>(b), t).cast<double>();
          out.target.row(static_cast<Eigen::Index>(next)) = ct.row(l, static_cast<int>(b), t).cast<double>();
          ++next;
        }
      }
    }
  }
  return out;
}

CollapseResult probe_collapse_test(const nn::Transformer<float>& model,
                                   const std::map<int, probes::GameIdProbe>& game_probes,
                                   std::span<const GameSpec> specs, std::span<const double> priors,
                                   std::span<const Token> prefix, Token move) {
  if (prefix.empty()) throw std::invalid_argument("collapse test needs a non-empty prefix");
  if (game_probes.empty()) throw LayerMismatch("no game probes supplied");
  const auto& cfg = model.config();
  if (static_cast<int>(prefix.size()) + 1 > cfg.context_len) throw std::invalid_argument("prefix exceeds context");
  std::vector<Token> extended(prefix.begin(), prefix.end());
  extended.push_back(move);
  const auto trace = game_posterior(specs, priors, extended);
  const auto& after = trace.posterior.back();
  if (std::count_if(after.begin(), after.end(), [](double p) { return p > 0.0; }) > 1) {
    throw StillAmbiguous("the move leaves more than one game consistent");
  }
  const GameId target = game_probes.begin()->second.target;
  const auto g = static_cast<std::size_t>(std::find(trace.games.begin(), trace.games.end(), target) -
                                          trace.games.begin());
  if (g >= trace.games.size()) throw std::invalid_argument("probe target is not in the mixture");

  CollapseResult res;
  res.prefix_len = static_cast<int>(prefix.size());
  res.oracle_before = trace.posterior[prefix.size()][g];
  res.oracle_after = after[g];
  nn::ActivationCache<float> cache;
  model.forward(single(extended), &cache);
  const int n = static_cast<int>(prefix.size());
  for (const auto& [l, probe] : game_probes) {
    if (l < 1 || l > cfg.n_layers || probe.weights.size() != cfg.d_model) {
      throw LayerMismatch("game probe for layer " + std::to_string(l) + " does not match the model");
    }
    res.probed_before[l] = probe.predict(cache.row(l, 0, n - 1).cast<double>().transpose());
    res.probed_after[l] = probe.predict(cache.row(l, 0, n).cast<double>().transpose());
  }
  return res;
}

}  // namespace metaoth::interventions
