#pragma once

// Causal experiments on a fixed checkpoint: probe-direction board edits,
// game-identity steering, the pooled-rotation intervention and the probe
// collapse test.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaoth/geometry.hpp"
#include "metaoth/oracle.hpp"
#include "metaoth/probes.hpp"
#include "metaoth/transformer.hpp"

namespace metaoth::interventions {

using probes::LayerMismatch;
using probes::TileClass;
using Vector = Eigen::VectorXd;

class NotAmbiguous : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class StillAmbiguous : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NotOrthogonal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BoardEdit {
  int tile = 0;
  TileClass target = TileClass::Empty;
  double gamma = 5.0;
};

enum class EditScope { FinalPosition, AllPositions };

// One probe per layer; layer l uses probes.at(l).
using LayerProbes = std::map<int, probes::ProbeWeights>;

struct BoardEditResult {
  bool valid = false;      // false when the edit requests the tile's true class
  bool evaluated = false;  // false when B' leaves the mover without placements
  int k = 0;               // |V(B')|
  int false_positives = 0;
  int false_negatives = 0;
  // Final-layer probe probability of the requested class, before and after.
  double probe_before = 0.0;
  double probe_after = 0.0;

  int errors() const { return false_positives + false_negatives; }
};

// Adds gamma * w^l_{tile,class} to h_l at every layer l covered by the
// probes, then compares the top-k next tokens at the final prefix position
// against the valid moves of the edited board under `spec`. gamma = 0 gives
// the null condition for the same k.
BoardEditResult board_intervene(const nn::Transformer<float>& model, const LayerProbes& probes,
                                const GameSpec& spec, std::span<const Token> prefix, const BoardEdit& edit,
                                EditScope scope = EditScope::FinalPosition, bool unit_directions = false);

struct InterventionReport {
  std::string condition;  // null, matched-probe or cross-probe
  std::vector<BoardEditResult> results;
  MeanCI errors;      // FP + FN per evaluated example
  MeanCI error_rate;  // errors / (2k)
  double mean_fp = 0.0;
  double mean_fn = 0.0;
  std::size_t n_invalid = 0;
};

InterventionReport summarize(std::string condition, std::vector<BoardEditResult> results);

// Random valid edits: a random prefix length, tile and differing class.
struct EditCase {
  std::size_t sequence = 0;
  int prefix_len = 0;
  BoardEdit edit;
};
std::vector<EditCase> sample_edit_cases(std::span<const SequenceRecord> records, const GameSpec& spec, int n,
                                        double gamma, std::uint64_t seed);

struct SteeringSpec {
  std::map<int, Vector> vectors;  // delta mu per layer
  double lambda = 1.0;
  std::vector<int> layers;        // injection layers, one at a time
  bool all_positions = true;
};

struct SteerCell {
  double alpha_null = 0.0;
  double alpha_steered = 0.0;
  double normalized = 0.0;  // (steered - null) / (1 - null)
  std::size_t n = 0;
};

struct LayerSteering {
  int layer = 0;
  std::map<int, SteerCell> by_move;
  SteerCell overall;
  // Downstream probe accuracy on the target game's board, if a probe was given.
  std::optional<double> probe_accuracy_null;
  std::optional<double> probe_accuracy_steered;
};

struct DownstreamProbe {
  const probes::ProbeWeights* probe = nullptr;
  bool divergence_tiles_only = false;
  const GameSpec* other = nullptr;  // game the divergence mask is taken against
};

// Injects lambda * delta_mu at each layer in turn and scores the final
// distribution at every prefix legal in both games against the target
// game's uniform-over-valid ground truth. Throws NotAmbiguous when a
// sequence's first token is not legal in both games.
std::vector<LayerSteering> game_steer(const nn::Transformer<float>& model, const SteeringSpec& steering,
                                      std::span<const SequenceRecord> sequences, const GameSpec& source,
                                      const GameSpec& target, const DownstreamProbe& downstream = {});

// Longest prefix legal under both games.
int ambiguous_prefix_length(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens);

// Classic tokens re-expressed in another game's syntax (same board squares).
std::vector<Token> remap_tokens(const GameSpec& from, const GameSpec& to, std::span<const Token> tokens);

// Runs Classic tokens, replaces h_layer by h_layer * omega at every position
// (layer 0 = no intervention) and scores against the target game's ground
// truth on the remapped sequence. Throws NotOrthogonal.
AlphaReport rotation_intervene(const nn::Transformer<float>& model, const geometry::Matrix& omega,
                               std::span<const SequenceRecord> classic, const GameSpec& classic_spec,
                               const GameSpec& target_spec, int layer, int batch_size = 64);

// Paired rows (h(s), h(phi(s))) pooled over layers and positions, subsampled
// to `budget` rows.
struct RotationPairs {
  geometry::Matrix source;
  geometry::Matrix target;
};
RotationPairs collect_rotation_pairs(const nn::Transformer<float>& model, std::span<const SequenceRecord> classic,
                                     const GameSpec& classic_spec, const GameSpec& target_spec,
                                     std::span<const int> layers, std::size_t budget, std::uint64_t seed);

struct CollapseResult {
  int prefix_len = 0;
  double oracle_before = 0.0;  // P(target game) before the move
  double oracle_after = 0.0;
  std::map<int, double> probed_before;  // per layer
  std::map<int, double> probed_after;

  double oracle_drop() const { return oracle_before - oracle_after; }
};

// Appends `move` to an ambiguous prefix. Throws StillAmbiguous when the
// extended prefix remains legal under more than one game.
CollapseResult probe_collapse_test(const nn::Transformer<float>& model,
                                   const std::map<int, probes::GameIdProbe>& game_probes,
                                   std::span<const GameSpec> specs, std::span<const double> priors,
                                   std::span<const Token> prefix, Token move);

}  // namespace metaoth::interventions
