#include "metaoth/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "metaoth/oracle.hpp"
#include "metaoth/rng.hpp"
#include "metaoth/tensor_io.hpp"

namespace metaoth::probes {
namespace {

const GameSpec& spec_for(std::span<const GameSpec> specs, GameId id) {
  for (const auto& s : specs) {
    if (s.id == id) return s;
  }
  throw std::invalid_argument("no spec for game " + std::string(game_name(id)));
}

// Adam with the textbook defaults, over a flat parameter block.
struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<double> m, v;

  Adam(double lr_, std::size_t n) : lr(lr_), m(n, 0.0), v(n, 0.0) {}

  void tick() { ++t; }
  void update(double* p, const double* g, std::size_t offset, std::size_t n) {
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
      double& mi = m[offset + i];
      double& vi = v[offset + i];
      mi = b1 * mi + (1.0 - b1) * g[i];
      vi = b2 * vi + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
    }
  }
};

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Masked per-tile softmax of one row of logits, in place.
void tile_softmax(double* z, const std::array<std::array<bool, kClasses>, kBoardTiles>& observed) {
  for (int i = 0; i < kBoardTiles; ++i) {
    double* zi = z + i * kClasses;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kClasses; ++c) {
      if (observed[i][c]) mx = std::max(mx, zi[c]);
    }
    double sum = 0.0;
    for (int c = 0; c < kClasses; ++c) {
      zi[c] = observed[i][c] ? std::exp(zi[c] - mx) : 0.0;
      sum += zi[c];
    }
    for (int c = 0; c < kClasses; ++c) zi[c] /= sum;
  }
}

std::array<std::array<bool, kClasses>, kBoardTiles> all_observed() {
  std::array<std::array<bool, kClasses>, kBoardTiles> o{};
  for (auto& t : o) t.fill(true);
  return o;
}

}  // namespace

TileLabels relabel(const Board& board, Color mover) {
  TileLabels out{};
  const Tile mine = tile_of(mover);
  for (int i = 0; i < kBoardTiles; ++i) {
    const Tile t = board.at(i);
    out[i] = t == Tile::Empty ? TileClass::Empty : (t == mine ? TileClass::Mine : TileClass::Yours);
  }
  return out;
}

BoardLabels make_labels(const GameSpec& spec, std::span<const Token> tokens) {
  BoardLabels out;
  out.labels.reserve(tokens.size() + 1);
  GameState state(spec);
  out.labels.push_back(relabel(state.board(), state.board().to_move()));
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k] == kPadToken) break;
    if (!state.play_token(tokens[k])) {
      throw IllegalSequence("token " + std::to_string(tokens[k]) + " at position " + std::to_string(k) +
                            " is illegal under " + std::string(game_name(spec.id)));
    }
    out.labels.push_back(relabel(state.board(), state.board().to_move()));
  }
  return out;
}

std::vector<std::uint64_t> divergence_masks(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens) {
  std::vector<std::uint64_t> masks(tokens.size() + 1, 0);
  GameState sa(a), sb(b);
  auto diff = [&] {
    const auto la = relabel(sa.board(), sa.board().to_move());
    const auto lb = relabel(sb.board(), sb.board().to_move());
    std::uint64_t m = 0;
    for (int i = 0; i < kBoardTiles; ++i) {
      if (la[i] != lb[i]) m |= 1ULL << i;
    }
    return m;
  };
  masks[0] = diff();
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (!sa.play_token(tokens[k]) || !sb.play_token(tokens[k])) break;
    masks[k + 1] = diff();
  }
  return masks;
}

const Matrix& ActivationSet::layer(int l) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] == l) return per_layer[i];
  }
  throw LayerMismatch("layer " + std::to_string(l) + " was not collected");
}

ActivationSet collect_activations(const nn::Transformer<float>& model, std::span<const SequenceRecord> records,
                                  std::span<const int> layers, int batch_size) {
  const auto& cfg = model.config();
  for (int l : layers) {
    if (l < 1 || l > cfg.n_layers) throw LayerMismatch("layer " + std::to_string(l) + " out of range");
  }
  ActivationSet out;
  out.layers.assign(layers.begin(), layers.end());
  std::size_t n_rows = 0;
  for (const auto& r : records) n_rows += static_cast<std::size_t>(std::min(r.length(), cfg.context_len));
  out.per_layer.assign(layers.size(), Matrix(static_cast<Eigen::Index>(n_rows), cfg.d_model));
  out.rows.reserve(n_rows);

  std::size_t row = 0;
  for (std::size_t begin = 0; begin < records.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), begin + static_cast<std::size_t>(batch_size));
    int len = 1;
    for (std::size_t i = begin; i < end; ++i) len = std::max(len, std::min(records[i].length(), cfg.context_len));
    nn::TokenBatch batch(static_cast<int>(end - begin), len);
    for (std::size_t i = begin; i < end; ++i) {
      const int n = std::min(records[i].length(), len);
      for (int t = 0; t < n; ++t) batch.at(static_cast<int>(i - begin), t) = records[i].tokens[t];
    }
    nn::ActivationCache<float> cache;
    model.forward(batch, &cache);
    for (std::size_t i = begin; i < end; ++i) {
      const int b = static_cast<int>(i - begin);
      const int n = std::min(records[i].length(), len);
      for (int t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < layers.size(); ++k) {
          out.per_layer[k].row(static_cast<Eigen::Index>(row)) = cache.row(layers[k], b, t).cast<double>();
        }
        out.rows.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint16_t>(t)});
        ++row;
      }
    }
  }
  return out;
}

std::vector<TileLabels> row_labels(std::span<const SequenceRecord> records, std::span<const GameSpec> specs,
                                   std::span<const RowRef> rows) {
  std::vector<TileLabels> out(rows.size());
  std::uint32_t cached = std::numeric_limits<std::uint32_t>::max();
  BoardLabels labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].sequence != cached) {
      cached = rows[i].sequence;
      const auto& rec = records[cached];
      labels = make_labels(spec_for(specs, rec.game), rec.tokens);
    }
    out[i] = labels.labels.at(static_cast<std::size_t>(rows[i].position) + 1);
  }
  return out;
}

std::vector<std::vector<double>> row_posteriors(std::span<const SequenceRecord> records,
                                                std::span<const GameSpec> specs, std::span<const double> priors,
                                                std::span<const RowRef> rows) {
  std::vector<std::vector<double>> out(rows.size());
  std::uint32_t cached = std::numeric_limits<std::uint32_t>::max();
  PosteriorTrace trace;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].sequence != cached) {
      cached = rows[i].sequence;
      trace = game_posterior(specs, priors, records[cached].tokens);
    }
    out[i] = trace.posterior.at(static_cast<std::size_t>(rows[i].position) + 1);
  }
  return out;
}

Split split_by_sequence(std::span<const RowRef> rows, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw std::invalid_argument("val_fraction must be in [0, 1)");
  std::vector<std::size_t> seqs;
  for (const auto& r : rows) seqs.push_back(r.sequence);
  std::sort(seqs.begin(), seqs.end());
  seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
  Rng rng(derive_seed(seed, 0x5b11));
  shuffle(seqs, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(seqs.size())));
  std::vector<bool> is_val(seqs.empty() ? 0 : *std::max_element(seqs.begin(), seqs.end()) + 1, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[seqs[i]] = true;
  Split split;
  for (std::size_t i = 0; i < rows.size(); ++i) (is_val[rows[i].sequence] ? split.val : split.train).push_back(i);
  return split;
}

ProbeWeights train_board_probe(const Matrix& activations, std::span<const TileLabels> labels,
                               std::span<const RowRef> rows, int layer, const ProbeTrainConfig& config) {
  if (labels.size() != static_cast<std::size_t>(activations.rows()) || rows.size() != labels.size()) {
    throw std::invalid_argument("activations, labels and rows must have the same length");
  }
  const Eigen::Index d = activations.cols();
  ProbeWeights probe;
  probe.layer = layer;
  probe.weights = Matrix::Zero(kProbeRows, d);
  probe.biases = Vector::Zero(kProbeRows);

  const Split split = split_by_sequence(rows, config.val_fraction, config.seed);
  if (split.train.empty()) throw std::invalid_argument("no training rows");
  for (auto& t : probe.observed) t.fill(false);
  for (std::size_t r : split.train) {
    for (int i = 0; i < kBoardTiles; ++i) probe.observed[i][static_cast<int>(labels[r][i])] = true;
  }
  for (int i = 0; i < kBoardTiles; ++i) {
    if (std::count(probe.observed[i].begin(), probe.observed[i].end(), true) < kClasses) {
      if (config.strict) throw DegenerateTile("tile " + square_name(i) + " lacks a class in training data");
      probe.degenerate_tiles.push_back(i);
    }
  }

  // Zero weights and log-prior biases: the starting point is the per-tile
  // majority-class predictor, which early stopping keeps when nothing better
  // is learned.
  std::vector<std::array<double, kClasses>> freq(kBoardTiles);
  for (std::size_t r : split.train) {
    for (int i = 0; i < kBoardTiles; ++i) freq[i][static_cast<int>(labels[r][i])] += 1.0;
  }
  for (int i = 0; i < kBoardTiles; ++i) {
    for (int c = 0; c < kClasses; ++c) {
      if (probe.observed[i][c]) probe.biases[i * kClasses + c] = std::log(freq[i][c] / split.train.size());
    }
  }

  const std::size_t n_w = static_cast<std::size_t>(kProbeRows * d);
  Adam adam(config.lr, n_w + kProbeRows);
  Rng rng(derive_seed(config.seed, 0xb0a4d));
  std::vector<std::size_t> order = split.train;

  Matrix best_w = probe.weights;
  Vector best_b = probe.biases;
  std::array<double, kBoardTiles> best_acc;
  best_acc.fill(-1.0);
  std::array<int, kBoardTiles> wait{};
  std::array<bool, kBoardTiles> stopped{};

  auto validate = [&](std::array<double, kBoardTiles>& acc) {
    std::array<std::uint64_t, kBoardTiles> hits{};
    const auto& val = split.val;
    for (std::size_t begin = 0; begin < val.size(); begin += 4096) {
      const std::size_t end = std::min(val.size(), begin + 4096);
      std::vector<std::size_t> idx(val.begin() + static_cast<std::ptrdiff_t>(begin),
                                   val.begin() + static_cast<std::ptrdiff_t>(end));
      Matrix z = activations(idx, Eigen::all) * probe.weights.transpose();
      z.rowwise() += probe.biases.transpose();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (int i = 0; i < kBoardTiles; ++i) {
          int arg = -1;
          for (int c = 0; c < kClasses; ++c) {
            if (probe.observed[i][c] && (arg < 0 || z(r, i * kClasses + c) > z(r, i * kClasses + arg))) arg = c;
          }
          if (arg == static_cast<int>(labels[idx[r]][i])) ++hits[i];
        }
      }
    }
    for (int i = 0; i < kBoardTiles; ++i) acc[i] = val.empty() ? 0.0 : static_cast<double>(hits[i]) / val.size();
  };

  if (!split.val.empty()) validate(best_acc);

  Matrix grad_w(kProbeRows, d);
  Vector grad_b(kProbeRows);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix xb = activations(idx, Eigen::all);
      Matrix z = xb * probe.weights.transpose();
      z.rowwise() += probe.biases.transpose();
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        tile_softmax(z.row(r).data(), probe.observed);
        for (int i = 0; i < kBoardTiles; ++i) z(r, i * kClasses + static_cast<int>(labels[idx[r]][i])) -= 1.0;
      }
      z /= static_cast<double>(idx.size());
      grad_w.noalias() = z.transpose() * xb;
      grad_b = z.colwise().sum().transpose();
      adam.tick();
      for (int i = 0; i < kBoardTiles; ++i) {
        if (stopped[i]) continue;
        for (int c = 0; c < kClasses; ++c) {
          const int r = i * kClasses + c;
          if (!probe.observed[i][c]) continue;
          adam.update(probe.weights.row(r).data(), grad_w.row(r).data(), static_cast<std::size_t>(r * d),
                      static_cast<std::size_t>(d));
          adam.update(&probe.biases[r], &grad_b[r], n_w + r, 1);
        }
      }
    }
    if (split.val.empty()) continue;
    std::array<double, kBoardTiles> acc{};
    validate(acc);
    for (int i = 0; i < kBoardTiles; ++i) {
      if (stopped[i]) continue;
      if (acc[i] > best_acc[i]) {
        best_acc[i] = acc[i];
        wait[i] = 0;
        best_w.middleRows(i * kClasses, kClasses) = probe.weights.middleRows(i * kClasses, kClasses);
        best_b.segment(i * kClasses, kClasses) = probe.biases.segment(i * kClasses, kClasses);
      } else if (++wait[i] >= config.patience) {
        stopped[i] = true;
      }
    }
    if (std::all_of(stopped.begin(), stopped.end(), [](bool s) { return s; })) break;
  }
  if (!split.val.empty()) {
    probe.weights = best_w;
    probe.biases = best_b;
    probe.val_accuracy = best_acc;
  } else {
    probe.val_accuracy.fill(std::numeric_limits<double>::quiet_NaN());
  }
  return probe;
}

BoardPrediction probe_board(const ProbeWeights& probe, const Matrix& activations, int layer) {
  if (layer != probe.layer) {
    throw LayerMismatch("probe is for layer " + std::to_string(probe.layer) + ", activations are from layer " +
                        std::to_string(layer));
  }
  if (activations.cols() != probe.weights.cols()) throw LayerMismatch("activation width differs from probe width");
  BoardPrediction out;
  out.classes.resize(static_cast<std::size_t>(activations.rows()));
  out.confidence.resize(out.classes.size());
  for (Eigen::Index begin = 0; begin < activations.rows(); begin += 4096) {
    const Eigen::Index n = std::min<Eigen::Index>(4096, activations.rows() - begin);
    Matrix z = activations.middleRows(begin, n) * probe.weights.transpose();
    z.rowwise() += probe.biases.transpose();
    for (Eigen::Index r = 0; r < n; ++r) {
      tile_softmax(z.row(r).data(), probe.observed);
      auto& cls = out.classes[static_cast<std::size_t>(begin + r)];
      auto& conf = out.confidence[static_cast<std::size_t>(begin + r)];
      for (int i = 0; i < kBoardTiles; ++i) {
        int arg = 0;
        for (int c = 1; c < kClasses; ++c) {
          if (z(r, i * kClasses + c) > z(r, i * kClasses + arg)) arg = c;
        }
        cls[i] = static_cast<TileClass>(arg);
        conf[i] = static_cast<float>(z(r, i * kClasses + arg));
      }
    }
  }
  return out;
}

AccuracyTally board_accuracy(const BoardPrediction& pred, std::span<const TileLabels> labels,
                             std::span<const std::uint64_t> masks) {
  AccuracyTally tally;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const std::uint64_t m = masks.empty() ? ~0ULL : masks[r];
    for (int i = 0; i < kBoardTiles; ++i) {
      if (!(m >> i & 1)) continue;
      ++tally.total;
      if (pred.classes[r][i] == labels[r][i]) ++tally.correct;
    }
  }
  return tally;
}

std::map<int, AccuracyTally> board_accuracy_by_move(const BoardPrediction& pred, std::span<const TileLabels> labels,
                                                    std::span<const RowRef> rows,
                                                    std::span<const std::uint64_t> masks) {
  std::map<int, AccuracyTally> out;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    auto& tally = out[rows[r].position + 1];
    const std::uint64_t m = masks.empty() ? ~0ULL : masks[r];
    for (int i = 0; i < kBoardTiles; ++i) {
      if (!(m >> i & 1)) continue;
      ++tally.total;
      if (pred.classes[r][i] == labels[r][i]) ++tally.correct;
    }
  }
  return out;
}

double GameIdProbe::predict(const Eigen::Ref<const Vector>& h) const { return sigmoid(weights.dot(h) + bias); }

GameIdProbe train_game_probe(const Matrix& activations, std::span<const std::vector<double>> posteriors,
                             std::span<const GameId> games, GameId target, int layer, const GameProbeConfig& config) {
  if (posteriors.size() != static_cast<std::size_t>(activations.rows())) {
    throw std::invalid_argument("posteriors and activations differ in length");
  }
  const auto target_it = std::find(games.begin(), games.end(), target);
  if (target_it == games.end()) throw std::invalid_argument("target game not in mixture");
  const auto tcol = static_cast<std::size_t>(target_it - games.begin());

  const Eigen::Index d = activations.cols();
  GameIdProbe probe;
  probe.layer = layer;
  probe.target = target;
  probe.weights = Vector::Zero(d);

  Vector y(activations.rows());
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const double p = posteriors[static_cast<std::size_t>(r)][tcol];
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("posterior targets must lie in [0, 1]");
    y[r] = p;
  }

  Adam adam(config.lr, static_cast<std::size_t>(d) + 1);
  Rng rng(derive_seed(config.seed, 0x6a3e));
  std::vector<std::size_t> order(static_cast<std::size_t>(activations.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector gw(d);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix xb = activations(idx, Eigen::all);
      Vector z = xb * probe.weights;
      for (Eigen::Index r = 0; r < z.size(); ++r) z[r] = sigmoid(z[r] + probe.bias) - y[static_cast<Eigen::Index>(idx[r])];
      z /= static_cast<double>(idx.size());
      gw.noalias() = xb.transpose() * z;
      const double gb = z.sum();
      adam.tick();
      adam.update(probe.weights.data(), gw.data(), 0, static_cast<std::size_t>(d));
      adam.update(&probe.bias, &gb, static_cast<std::size_t>(d), 1);
    }
  }

  for (std::size_t g = 0; g < games.size(); ++g) {
    Vector sum = Vector::Zero(d);
    std::size_t n = 0;
    for (Eigen::Index r = 0; r < activations.rows(); ++r) {
      if (posteriors[static_cast<std::size_t>(r)][g] >= config.mean_threshold) {
        sum += activations.row(r).transpose();
        ++n;
      }
    }
    probe.class_counts[games[g]] = n;
    probe.class_means[games[g]] = n ? Vector(sum / static_cast<double>(n)) : Vector::Zero(d);
  }
  return probe;
}

double BaselineGameProbe::predict(std::span<const Token> prefix) const {
  double z = bias;
  for (std::size_t k = 0; k < prefix.size() && k < static_cast<std::size_t>(kPositions); ++k) {
    if (prefix[k] < kBoardTiles) z += weights[prefix[k] * kPositions + k];
  }
  return sigmoid(z);
}

BaselineGameProbe train_baseline_probe(std::span<const SequenceRecord> records, std::span<const RowRef> rows,
                                       std::span<const double> targets, GameId target,
                                       const GameProbeConfig& config) {
  if (targets.size() != rows.size()) throw std::invalid_argument("targets and rows differ in length");
  BaselineGameProbe probe;
  probe.target = target;
  const std::size_t n_w = static_cast<std::size_t>(kBoardTiles) * BaselineGameProbe::kPositions;
  probe.weights.assign(n_w, 0.0);
  Adam adam(config.lr, n_w + 1);
  Rng rng(derive_seed(config.seed, 0xba5e));
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> gw(n_w);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& ref = rows[order[k]];
        const auto prefix = std::span(records[ref.sequence].tokens).first(ref.position + 1u);
        const double err = (probe.predict(prefix) - targets[order[k]]) * scale;
        gb += err;
        for (std::size_t p = 0; p < prefix.size() && p < static_cast<std::size_t>(BaselineGameProbe::kPositions);
             ++p) {
          if (prefix[p] < kBoardTiles) gw[prefix[p] * BaselineGameProbe::kPositions + p] += err;
        }
      }
      adam.tick();
      adam.update(probe.weights.data(), gw.data(), 0, n_w);
      adam.update(&probe.bias, &gb, n_w, 1);
    }
  }
  return probe;
}

std::map<int, double> probe_fidelity(std::span<const double> outputs, std::span<const double> targets,
                                     std::span<const int> move_numbers) {
  if (outputs.size() != targets.size() || outputs.size() != move_numbers.size()) {
    throw std::invalid_argument("fidelity inputs differ in length");
  }
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto& [sum, n] = acc[move_numbers[i]];
    sum += std::clamp(1.0 - std::abs(outputs[i] - targets[i]), 0.0, 1.0);
    ++n;
  }
  std::map<int, double> out;
  for (const auto& [m, v] : acc) out[m] = v.first / static_cast<double>(v.second);
  return out;
}

void save_board_probe(const std::filesystem::path& path, const ProbeWeights& probe) {
  TensorFile file;
  file.manifest["version"] = kTensorFileVersion;
  file.manifest["kind"] = "board_probe";
  file.manifest["layer"] = probe.layer;
  file.manifest["game"] = probe.game;
  file.manifest["model_hash"] = probe.model_hash;
  file.manifest["row_order"] = "tile*3+class";
  file.manifest["classes"] = {"mine", "yours", "empty"};
  file.manifest["val_accuracy"] = probe.val_accuracy;
  file.manifest["degenerate_tiles"] = probe.degenerate_tiles;
  nlohmann::json observed = nlohmann::json::array();
  for (const auto& t : probe.observed) observed.push_back({t[0], t[1], t[2]});
  file.manifest["observed"] = observed;
  const auto d = static_cast<std::uint64_t>(probe.weights.cols());
  file.tensors.push_back(NamedTensor::f64("weights", {kProbeRows, d},
                                          std::span<const double>(probe.weights.data(), probe.weights.size())));
  file.tensors.push_back(NamedTensor::f64("biases", {kProbeRows},
                                          std::span<const double>(probe.biases.data(), probe.biases.size())));
  write_tensor_file(path, file);
}

ProbeWeights load_board_probe(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  if (file.manifest.value("kind", "") != "board_probe") throw CorruptFile(path.string() + " is not a board probe");
  ProbeWeights probe;
  probe.layer = file.manifest.at("layer").get<int>();
  probe.game = file.manifest.value("game", "");
  probe.model_hash = file.manifest.value("model_hash", "");
  probe.degenerate_tiles = file.manifest.value("degenerate_tiles", std::vector<int>{});
  const auto& w = file.get("weights");
  const auto& b = file.get("biases");
  if (w.shape.size() != 2 || w.shape[0] != kProbeRows || b.numel() != kProbeRows) {
    throw CorruptFile("board probe tensors have the wrong shape");
  }
  const auto wv = w.as_double();
  probe.weights = Eigen::Map<const Matrix>(wv.data(), kProbeRows, static_cast<Eigen::Index>(w.shape[1]));
  const auto bv = b.as_double();
  probe.biases = Eigen::Map<const Vector>(bv.data(), kProbeRows);
  probe.observed = all_observed();
  if (file.manifest.contains("observed")) {
    for (int i = 0; i < kBoardTiles; ++i) {
      for (int c = 0; c < kClasses; ++c) probe.observed[i][c] = file.manifest["observed"][i][c].get<bool>();
    }
  }
  if (file.manifest.contains("val_accuracy")) {
    for (int i = 0; i < kBoardTiles; ++i) {
      const auto& v = file.manifest["val_accuracy"][i];
      probe.val_accuracy[i] = v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return probe;
}

void save_game_probe(const std::filesystem::path& path, const GameIdProbe& probe) {
  TensorFile file;
  file.manifest["version"] = kTensorFileVersion;
  file.manifest["kind"] = "game_probe";
  file.manifest["layer"] = probe.layer;
  file.manifest["target"] = std::string(game_name(probe.target));
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [g, n] : probe.class_counts) counts[std::string(game_name(g))] = n;
  file.manifest["class_counts"] = counts;
  const auto d = static_cast<std::uint64_t>(probe.weights.size());
  file.tensors.push_back(NamedTensor::f64("weights", {d}, std::span<const double>(probe.weights.data(), d)));
  const double b = probe.bias;
  file.tensors.push_back(NamedTensor::f64("bias", {1}, std::span<const double>(&b, 1)));
  for (const auto& [g, mu] : probe.class_means) {
    file.tensors.push_back(NamedTensor::f64("mean." + std::string(game_name(g)), {d},
                                            std::span<const double>(mu.data(), d)));
  }
  write_tensor_file(path, file);
}

GameIdProbe load_game_probe(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  if (file.manifest.value("kind", "") != "game_probe") throw CorruptFile(path.string() + " is not a game probe");
  GameIdProbe probe;
  probe.layer = file.manifest.at("layer").get<int>();
  probe.target = parse_game(file.manifest.at("target").get<std::string>());
  const auto w = file.get("weights").as_double();
  probe.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  probe.bias = file.get("bias").as_double().at(0);
  const auto counts = file.manifest.value("class_counts", nlohmann::json::object());
  for (const auto& [name, n] : counts.items()) {
    const GameId g = parse_game(name);
    probe.class_counts[g] = n.get<std::size_t>();
    const auto mu = file.get("mean." + name).as_double();
    probe.class_means[g] = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  }
  return probe;
}

}  // namespace metaoth::probes
