#pragma once

// Exact Bayesian ground truth for mixed-game sequences.
//
// A game g that samples uniformly among its legal moves assigns a prefix the
// likelihood prod_k 1/|V(s_<k, g)|, or zero once a move is illegal. Everything
// here is evaluated in natural-log space and normalized with log-sum-exp.
// Next-token distributions are indexed by token id (0..63) with index 64
// reserved for the skip/pass move.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "metaoth/game.hpp"

namespace metaoth {

class AllGamesIllegal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateGroundTruth : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sum of -log|V| over the sequence; -infinity at the first illegal token.
double sequence_log_likelihood(const GameSpec& spec, std::span<const Token> tokens);

struct PosteriorTrace {
  std::vector<GameId> games;
  // posterior[t][g] = P(g | s_<t) for prefix lengths t = 0..n.
  std::vector<std::vector<double>> posterior;
  std::vector<double> entropy;  // nats
};

struct GroundTruthDistribution {
  std::array<double, kMoveSpace> probs{};
  double entropy = 0.0;

  bool has_pass() const { return probs[kPassMove] > 0.0; }
};

// Tracks every game of a mixture along one token sequence.
class MixtureTracker {
 public:
  MixtureTracker(std::span<const GameSpec> specs, std::span<const double> priors);

  // Advances all games that are still consistent with the sequence. Returns
  // false once no game can have produced the sequence.
  bool step(Token token);

  std::size_t size() const { return states_.size(); }
  int length() const { return length_; }
  bool consistent(std::size_t g) const { return alive_[g]; }
  bool any_consistent() const;
  double log_likelihood(std::size_t g) const { return log_lik_[g]; }
  const GameState& state(std::size_t g) const { return states_[g]; }

  // Throws AllGamesIllegal when no game is consistent.
  std::vector<double> posterior() const;
  // Posterior-weighted mixture of uniform next moves, conditioned on the
  // sequence continuing. nullopt when every consistent game has ended.
  std::optional<GroundTruthDistribution> next_distribution() const;

 private:
  std::vector<GameState> states_;
  std::vector<double> log_prior_;
  std::vector<double> log_lik_;
  std::vector<bool> alive_;
  int length_ = 0;
};

double entropy_nats(std::span<const double> p);

// P(g | s) from priors and log P(s | g). Throws AllGamesIllegal when every
// joint term is zero.
std::vector<double> mixture_posterior(std::span<const double> priors, std::span<const double> log_likelihoods);

PosteriorTrace game_posterior(std::span<const GameSpec> specs, std::span<const double> priors,
                              std::span<const Token> tokens);

// Throws AllGamesIllegal if no game admits the sequence (or none continues).
GroundTruthDistribution ground_truth_next(std::span<const GameSpec> specs,
                                          std::span<const double> priors,
                                          std::span<const Token> tokens);

// Entry t is the next-token distribution after the first t tokens, t = 0..n.
std::vector<std::optional<GroundTruthDistribution>> ground_truth_trace(
    std::span<const GameSpec> specs, std::span<const double> priors, std::span<const Token> tokens);

// D_KL(p || q) in nats; +infinity when q is zero somewhere on p's support.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// 1 - KL(P_GT || Q) / KL(P_GT || U). U spans the 64 placements, plus pass when
// pass carries ground-truth mass. model_probs is indexed by token id and must
// cover index 64 when pass is in the support. Returns -infinity when Q misses
// part of the support. Throws DegenerateGroundTruth when P_GT equals U.
double alpha_score(const GroundTruthDistribution& gt, std::span<const double> model_probs);

struct MeanCI {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, normal approximation
  std::size_t n = 0;
  std::size_t n_neg_inf = 0;
};

// Non-finite values propagate into the mean; pass `floor` to clamp them first
// (for plotting only).
MeanCI mean_ci(std::span<const double> values, std::optional<double> floor = std::nullopt);

struct AlphaSample {
  GameId game;
  int move_number;  // number of tokens already seen
  double alpha;
};

class AlphaReport {
 public:
  void add(GameId game, int move_number, double alpha) { samples_.push_back({game, move_number, alpha}); }
  const std::vector<AlphaSample>& samples() const { return samples_; }

  MeanCI overall(std::optional<double> floor = std::nullopt) const;
  MeanCI for_game(GameId game, std::optional<double> floor = std::nullopt) const;
  MeanCI for_move(GameId game, int move_number, std::optional<double> floor = std::nullopt) const;
  std::vector<GameId> games() const;
  int max_move() const;

  // Rows: game,move_number,mean_alpha,ci95,n
  void write_by_move_csv(std::ostream& out) const;

 private:
  std::vector<AlphaSample> samples_;
};

struct AmbiguityReport {
  bool legal_a = false;
  bool legal_b = false;
  bool ambiguous = false;
  std::vector<int> differing_tiles;   // board indices
  std::vector<int> differing_tokens;  // next tokens valid in exactly one game
};

// Legal in both games and the two replays disagree on the board or on the
// next-token sets.
AmbiguityReport is_ambiguous(const GameSpec& a, const GameSpec& b, std::span<const Token> tokens);

struct TileDivergence {
  std::array<double, kBoardTiles> probability{};
  std::uint64_t n_ambiguous = 0;  // ambiguous prefixes observed
  std::uint64_t n_sequences = 0;
  // by_move[t][tile], n_by_move[t]: same estimate restricted to prefix length t.
  std::vector<std::array<double, kBoardTiles>> by_move;
  std::vector<std::uint64_t> n_by_move;
};

// Monte-Carlo estimate of P(tile differs between the two replays) over
// ambiguous prefixes of sequences sampled from the 50/50 mixture of a and b.
TileDivergence tile_divergence_probability(const GameSpec& a, const GameSpec& b,
                                           std::uint64_t n_samples, std::uint64_t seed,
                                           int threads = 1);

// counts[t]: sampled sequences from `sampled` whose first t tokens are also
// legal under `other`; reached[t]: sequences with at least t tokens.
struct AmbiguityCurve {
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> reached;
  std::uint64_t n_sequences = 0;
};

AmbiguityCurve ambiguity_counts(const GameSpec& sampled, const GameSpec& other, std::uint64_t n_samples,
                                std::uint64_t seed, int threads = 1);

struct EntropyCurve {
  std::vector<double> mean_entropy;  // E[H(g | s_<t)] for t = 0..60
  std::vector<std::uint64_t> n;
};

EntropyCurve posterior_entropy_curve(std::span<const GameSpec> specs, std::span<const double> priors,
                                     std::uint64_t n_samples, std::uint64_t seed, int threads = 1);

}  // namespace metaoth
