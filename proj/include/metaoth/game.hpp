#pragma once

// Othello rule variants on a shared 8x8 board.
//
// Board indexing is row-major with a1 = 0, b1 = 1, ..., h8 = 63, i.e.
// index = 8 * (rank - 1) + (file - 'a'). Probes, figures and dataset tokens
// all use this layout.

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metaoth {

using Token = std::uint8_t;

inline constexpr int kBoardTiles = 64;
inline constexpr int kMaxPlacements = 60;
inline constexpr Token kSkipToken = 64;
inline constexpr Token kPadToken = 65;
inline constexpr int kVocabSize = 66;
// Move space: 64 placements plus pass.
inline constexpr int kMoveSpace = 65;
inline constexpr int kPassMove = 64;

enum class Tile : std::uint8_t { Empty = 0, Black = 1, White = 2 };
enum class Color : std::uint8_t { Black = 0, White = 1 };

constexpr Color opponent(Color c) { return c == Color::Black ? Color::White : Color::Black; }
constexpr Tile tile_of(Color c) { return c == Color::Black ? Tile::Black : Tile::White; }

// "d3" -> 19. Throws std::invalid_argument on malformed names.
int square_index(std::string_view name);
std::string square_name(int index);

class IllegalMove : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownToken : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Move {
 public:
  static constexpr Move pass() { return Move(-1); }
  static constexpr Move place(int index) { return Move(index); }

  constexpr bool is_pass() const { return index_ < 0; }
  constexpr int index() const { return index_; }
  constexpr bool operator==(const Move&) const = default;

 private:
  constexpr explicit Move(int index) : index_(index) {}
  int index_;
};

class Board {
 public:
  Board() = default;
  static Board from_tiles(std::span<const Tile, kBoardTiles> tiles, Color to_move);

  Tile at(int index) const {
    const std::uint64_t bit = 1ULL << index;
    if (black_ & bit) return Tile::Black;
    if (white_ & bit) return Tile::White;
    return Tile::Empty;
  }
  void set(int index, Tile tile);

  Color to_move() const { return to_move_; }
  void set_to_move(Color c) { to_move_ = c; }

  std::uint64_t pieces(Color c) const { return c == Color::Black ? black_ : white_; }
  std::uint64_t occupied() const { return black_ | white_; }
  std::uint64_t empty() const { return ~occupied(); }
  int occupied_count() const { return std::popcount(occupied()); }

  std::array<Tile, kBoardTiles> tiles() const;

  bool operator==(const Board&) const = default;

 private:
  std::uint64_t black_ = 0;
  std::uint64_t white_ = 0;
  Color to_move_ = Color::Black;
};

// Set of legal moves: a placement bitmask, or the lone Pass move.
class MoveSet {
 public:
  MoveSet() = default;
  static MoveSet of_placements(std::uint64_t mask) { return MoveSet(mask, false); }
  static MoveSet only_pass() { return MoveSet(0, true); }

  std::uint64_t placements() const { return placements_; }
  bool has_pass() const { return pass_; }
  bool empty() const { return placements_ == 0 && !pass_; }
  int size() const { return std::popcount(placements_) + (pass_ ? 1 : 0); }
  bool contains(Move m) const {
    return m.is_pass() ? pass_ : ((placements_ >> m.index()) & 1ULL) != 0;
  }
  std::vector<Move> to_vector() const;

  bool operator==(const MoveSet&) const = default;

 private:
  MoveSet(std::uint64_t mask, bool pass) : placements_(mask), pass_(pass) {}
  std::uint64_t placements_ = 0;
  bool pass_ = false;
};

enum class GameId : std::uint8_t { Classic = 0, NoMidFlip = 1, DelFlank = 2, Iago = 3 };
inline constexpr int kNumGames = 4;

std::string_view game_name(GameId id);
// Accepts the lowercase names used on the command line and in files.
GameId parse_game(std::string_view name);

enum class ValidationRule : std::uint8_t { Flanking, Neighbor };
enum class UpdateRule : std::uint8_t { FlipAll, FlipEndpoints, Delete };
enum class Adjacency : std::uint8_t { Moore, VonNeumann };

// Token id -> board index bijection.
class SyntaxMap {
 public:
  SyntaxMap();  // identity
  static SyntaxMap identity() { return SyntaxMap(); }
  // Seeded uniformly random permutation of the 64 board tokens with no fixed points.
  static SyntaxMap derangement(std::uint64_t seed);
  static SyntaxMap from_permutation(std::span<const int, kBoardTiles> token_to_board,
                                    std::uint64_t seed = 0);

  int to_board(int token) const { return token_to_board_[token]; }
  int to_token(int board_index) const { return board_to_token_[board_index]; }
  std::uint64_t seed() const { return seed_; }
  bool is_identity() const;

  bool operator==(const SyntaxMap&) const = default;

 private:
  std::array<std::uint8_t, kBoardTiles> token_to_board_{};
  std::array<std::uint8_t, kBoardTiles> board_to_token_{};
  std::uint64_t seed_ = 0;
};

struct SpecOptions {
  std::uint64_t iago_seed = 42;
  // Open-spread DelFlank start: Black c3/f6, White f3/c6.
  std::vector<int> delflank_black{18, 45};
  std::vector<int> delflank_white{21, 42};
  Adjacency delflank_adjacency = Adjacency::Moore;
};

struct GameSpec {
  GameId id = GameId::Classic;
  Board initial;
  ValidationRule validation = ValidationRule::Flanking;
  UpdateRule update = UpdateRule::FlipAll;
  Adjacency adjacency = Adjacency::Moore;
  SyntaxMap syntax;
};

GameSpec make_spec(GameId id, const SpecOptions& options = {});

Board initial_board(const GameSpec& spec);

// Placements available to `color` on `board` under the spec's validation rule.
std::uint64_t placement_mask(const GameSpec& spec, const Board& board, Color color);

// Legal moves for the player to move. {Pass} when the mover is stuck but the
// opponent is not; {} when neither side can place.
MoveSet valid_moves(const GameSpec& spec, const Board& board);

// Throws IllegalMove unless move is in valid_moves(spec, board).
Board apply_move(const GameSpec& spec, const Board& board, Move move);

// Opponent tiles bracketed by a placement at `index` for the player to move,
// one entry per direction, each ordered outward from the placed piece.
std::vector<std::vector<int>> flanked_runs(const Board& board, int index);

// Pad tokens are dropped, the skip token maps to Pass. Throws UnknownToken.
std::vector<Move> tokens_to_moves(const GameSpec& spec, std::span<const Token> tokens);

bool is_terminal(const GameSpec& spec, const Board& board, int move_count);

// Incremental replay. Forced passes are implicit: when the player to move has
// no placement but the opponent does, the turn passes automatically, so a
// recorded sequence only contains placements.
class GameState {
 public:
  explicit GameState(const GameSpec& spec);

  const GameSpec& spec() const { return *spec_; }
  const Board& board() const { return board_; }
  int placements() const { return placements_; }

  // Moves available for the next token (placements only; empty when over).
  std::uint64_t next_placements() const { return next_; }
  bool terminal() const { return next_ == 0; }

  // Plays a token; returns false and leaves the state untouched when illegal.
  bool play_token(int token);
  bool play(Move move);

 private:
  void settle();

  const GameSpec* spec_;
  Board board_;
  int placements_ = 0;
  std::uint64_t next_ = 0;
  bool pending_pass_ = false;
};

// Board after the sequence, or nullopt at the first illegal token.
std::optional<Board> replay(const GameSpec& spec, std::span<const Token> tokens);

}  // namespace metaoth
