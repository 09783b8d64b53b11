#pragma once

// Linear probes on cached residual-stream activations.
//
// Board probes: 64 independent 3-way softmax classifiers stored as one
// [192 x d_model] matrix. Row i*3 + c addresses tile i (a1 = 0, row-major)
// and class c in {Mine = 0, Yours = 1, Empty = 2}.
//
// Alignment: the activation at sequence position t has read tokens[0..t], so
// it pairs with the label of prefix length t + 1.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaoth/datagen.hpp"
#include "metaoth/game.hpp"
#include "metaoth/transformer.hpp"

namespace metaoth::probes {

class IllegalSequence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DegenerateTile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class LayerMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TileClass : std::uint8_t { Mine = 0, Yours = 1, Empty = 2 };
inline constexpr int kClasses = 3;
inline constexpr int kProbeRows = kBoardTiles * kClasses;

using TileLabels = std::array<TileClass, kBoardTiles>;

// Mover-relative labels of a single board.
TileLabels relabel(const Board& board, Color mover);

// labels[k] describes the board after k placements, relative to the player
// about to move; k = 0..n.
struct BoardLabels {
  std::vector<TileLabels> labels;
};

// Throws IllegalSequence.
BoardLabels make_labels(const GameSpec& spec, std::span<const Token> tokens);

// Bit i set when tile i carries a different mover-relative label under the
// two games, per prefix length k = 0..n. Prefixes illegal under either game
// get an empty mask.
std::vector<std::uint64_t> divergence_masks(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Where an activation row came from.
struct RowRef {
  std::uint32_t sequence = 0;
  std::uint16_t position = 0;  // sequence position t; the prefix has t + 1 tokens
};

// Activations of chosen layers at every non-pad position of a set of records.
struct ActivationSet {
  std::vector<int> layers;
  std::vector<Matrix> per_layer;  // same order as layers, rows aligned with rows
  std::vector<RowRef> rows;

  const Matrix& layer(int l) const;
};

// Runs the model in inference mode and gathers h_l for the requested layers.
ActivationSet collect_activations(const nn::Transformer<float>& model, std::span<const SequenceRecord> records,
                                  std::span<const int> layers, int batch_size = 64);

struct ProbeTrainConfig {
  double lr = 3e-5;
  int epochs = 10;
  int patience = 5;
  int batch_size = 256;
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  bool strict = false;  // throw DegenerateTile instead of flagging
};

struct ProbeWeights {
  int layer = 0;
  std::string game;
  std::string model_hash;
  Matrix weights;  // [192 x d_model]
  Vector biases;   // [192]
  // observed[i][c]: class c occurred for tile i in training data.
  std::array<std::array<bool, kClasses>, kBoardTiles> observed{};
  std::array<double, kBoardTiles> val_accuracy{};
  std::vector<int> degenerate_tiles;

  int d_model() const { return static_cast<int>(weights.cols()); }
  auto row(int tile, TileClass c) const { return weights.row(tile * kClasses + static_cast<int>(c)); }
};

// Sequence-level split: rows of one sequence never straddle train and val.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_by_sequence(std::span<const RowRef> rows, double val_fraction, std::uint64_t seed);

// Throws DegenerateTile when config.strict and a tile lacks a class.
ProbeWeights train_board_probe(const Matrix& activations, std::span<const TileLabels> labels,
                               std::span<const RowRef> rows, int layer, const ProbeTrainConfig& config = {});

struct BoardPrediction {
  std::vector<TileLabels> classes;
  std::vector<std::array<float, kBoardTiles>> confidence;  // softmax prob of the argmax class
};

// Throws LayerMismatch when layer differs from probe.layer.
BoardPrediction probe_board(const ProbeWeights& probe, const Matrix& activations, int layer);

// Fraction of correct tile predictions, optionally restricted to the tiles
// set in masks[row].
struct AccuracyTally {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

AccuracyTally board_accuracy(const BoardPrediction& pred, std::span<const TileLabels> labels,
                             std::span<const std::uint64_t> masks = {});

// Same, grouped by move number (prefix length).
std::map<int, AccuracyTally> board_accuracy_by_move(const BoardPrediction& pred, std::span<const TileLabels> labels,
                                                    std::span<const RowRef> rows,
                                                    std::span<const std::uint64_t> masks = {});

// Labels for every row of an activation set.
std::vector<TileLabels> row_labels(std::span<const SequenceRecord> records, std::span<const GameSpec> specs,
                                   std::span<const RowRef> rows);

// Logistic probe for P(target game | prefix) plus class-conditional means.
struct GameIdProbe {
  int layer = 0;
  GameId target = GameId::Classic;
  Vector weights;
  double bias = 0.0;
  std::map<GameId, Vector> class_means;  // mean h over rows with posterior >= threshold
  std::map<GameId, std::size_t> class_counts;

  double predict(const Eigen::Ref<const Vector>& h) const;
};

struct GameProbeConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 256;
  double mean_threshold = 0.99;
  std::uint64_t seed = 42;
};

// posteriors[row][g] is P(games[g] | prefix of the row). Targets are the
// column of `target`.
GameIdProbe train_game_probe(const Matrix& activations, std::span<const std::vector<double>> posteriors,
                             std::span<const GameId> games, GameId target, int layer,
                             const GameProbeConfig& config = {});

// Surface-statistics baseline: multi-hot (token x position) features of the
// prefix, 64 * 60 inputs, fitted to the same targets.
struct BaselineGameProbe {
  static constexpr int kPositions = kMaxPlacements;
  GameId target = GameId::Classic;
  std::vector<double> weights;  // [64 * 60], index token * 60 + position
  double bias = 0.0;

  double predict(std::span<const Token> prefix) const;
};

BaselineGameProbe train_baseline_probe(std::span<const SequenceRecord> records, std::span<const RowRef> rows,
                                       std::span<const double> targets, GameId target,
                                       const GameProbeConfig& config = {});

// Mean of 1 - |p - p_gt| per move number.
std::map<int, double> probe_fidelity(std::span<const double> outputs, std::span<const double> targets,
                                     std::span<const int> move_numbers);

// Per-row posterior of the mixture, aligned with rows (prefix length t + 1).
std::vector<std::vector<double>> row_posteriors(std::span<const SequenceRecord> records,
                                                std::span<const GameSpec> specs, std::span<const double> priors,
                                                std::span<const RowRef> rows);

void save_board_probe(const std::filesystem::path& path, const ProbeWeights& probe);
ProbeWeights load_board_probe(const std::filesystem::path& path);
void save_game_probe(const std::filesystem::path& path, const GameIdProbe& probe);
GameIdProbe load_game_probe(const std::filesystem::path& path);

}  // namespace metaoth::probes
