#include "metaoth/game.hpp"

#include <algorithm>
#include <numeric>

#include "metaoth/rng.hpp"

namespace metaoth {
namespace {

constexpr std::uint64_t kFileA = 0x0101010101010101ULL;
constexpr std::uint64_t kFileH = 0x8080808080808080ULL;

// Direction steps as (row delta, column delta); index = 8 * row + column.
constexpr std::array<std::array<int, 2>, 8> kDirections{{
    {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1},
}};

constexpr std::uint64_t shift(std::uint64_t b, int dir) {
  switch (dir) {
    case 0: return b << 8;
    case 1: return b >> 8;
    case 2: return (b << 1) & ~kFileA;
    case 3: return (b >> 1) & ~kFileH;
    case 4: return (b << 9) & ~kFileA;
    case 5: return (b << 7) & ~kFileH;
    case 6: return (b >> 7) & ~kFileA;
    default: return (b >> 9) & ~kFileH;
  }
}

std::uint64_t flanking_moves(std::uint64_t own, std::uint64_t opp) {
  const std::uint64_t empty = ~(own | opp);
  std::uint64_t moves = 0;
  for (int dir = 0; dir < 8; ++dir) {
    std::uint64_t x = shift(own, dir) & opp;
    for (int i = 0; i < 5; ++i) x |= shift(x, dir) & opp;
    moves |= shift(x, dir) & empty;
  }
  return moves;
}

std::uint64_t neighbor_moves(std::uint64_t own, std::uint64_t opp, Adjacency adjacency) {
  const std::uint64_t empty = ~(own | opp);
  const int n_dirs = adjacency == Adjacency::Moore ? 8 : 4;
  std::uint64_t halo = 0;
  for (int dir = 0; dir < n_dirs; ++dir) halo |= shift(own, dir);
  return halo & empty;
}

// Per-direction flanked runs for a placement at `bit`, as bitmasks.
template <typename Fn>
void for_each_run(std::uint64_t bit, std::uint64_t own, std::uint64_t opp, Fn&& fn) {
  for (int dir = 0; dir < 8; ++dir) {
    std::uint64_t run = 0;
    std::uint64_t first = 0;
    std::uint64_t last = 0;
    std::uint64_t p = shift(bit, dir);
    while (p & opp) {
      if (!first) first = p;
      last = p;
      run |= p;
      p = shift(p, dir);
    }
    if (run && (p & own)) fn(run, first, last);
  }
}

}  // namespace

int square_index(std::string_view name) {
  if (name.size() != 2) throw std::invalid_argument("bad square name: " + std::string(name));
  const char file = static_cast<char>(name[0] | 0x20);
  const char rank = name[1];
  if (file < 'a' || file > 'h' || rank < '1' || rank > '8') {
    throw std::invalid_argument("bad square name: " + std::string(name));
  }
  return 8 * (rank - '1') + (file - 'a');
}

std::string square_name(int index) {
  std::string s(2, ' ');
  s[0] = static_cast<char>('a' + index % 8);
  s[1] = static_cast<char>('1' + index / 8);
  return s;
}

Board Board::from_tiles(std::span<const Tile, kBoardTiles> tiles, Color to_move) {
  Board b;
  for (int i = 0; i < kBoardTiles; ++i) b.set(i, tiles[i]);
  b.to_move_ = to_move;
  return b;
}

void Board::set(int index, Tile tile) {
  const std::uint64_t bit = 1ULL << index;
  black_ &= ~bit;
  white_ &= ~bit;
  if (tile == Tile::Black) black_ |= bit;
  if (tile == Tile::White) white_ |= bit;
}

std::array<Tile, kBoardTiles> Board::tiles() const {
  std::array<Tile, kBoardTiles> out{};
  for (int i = 0; i < kBoardTiles; ++i) out[i] = at(i);
  return out;
}

std::vector<Move> MoveSet::to_vector() const {
  std::vector<Move> out;
  if (pass_) out.push_back(Move::pass());
  for (std::uint64_t m = placements_; m; m &= m - 1) out.push_back(Move::place(std::countr_zero(m)));
  return out;
}

std::string_view game_name(GameId id) {
  switch (id) {
    case GameId::Classic: return "classic";
    case GameId::NoMidFlip: return "nomidflip";
    case GameId::DelFlank: return "delflank";
    case GameId::Iago: return "iago";
  }
  return "unknown";
}

GameId parse_game(std::string_view name) {
  for (int i = 0; i < kNumGames; ++i) {
    const auto id = static_cast<GameId>(i);
    if (game_name(id) == name) return id;
  }
  throw std::invalid_argument("unknown game: " + std::string(name));
}

SyntaxMap::SyntaxMap() {
  std::iota(token_to_board_.begin(), token_to_board_.end(), std::uint8_t{0});
  board_to_token_ = token_to_board_;
}

SyntaxMap SyntaxMap::from_permutation(std::span<const int, kBoardTiles> token_to_board,
                                      std::uint64_t seed) {
  SyntaxMap m;
  std::array<bool, kBoardTiles> seen{};
  for (int t = 0; t < kBoardTiles; ++t) {
    const int b = token_to_board[t];
    if (b < 0 || b >= kBoardTiles || seen[b]) {
      throw std::invalid_argument("syntax map is not a permutation of 0..63");
    }
    seen[b] = true;
    m.token_to_board_[t] = static_cast<std::uint8_t>(b);
    m.board_to_token_[b] = static_cast<std::uint8_t>(t);
  }
  m.seed_ = seed;
  return m;
}

SyntaxMap SyntaxMap::derangement(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1a60));
  std::array<int, kBoardTiles> perm{};
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = kBoardTiles - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(perm[i], perm[j]);
    }
    bool fixed_point = false;
    for (int i = 0; i < kBoardTiles; ++i) fixed_point |= perm[i] == i;
    if (!fixed_point) break;
  }
  return from_permutation(perm, seed);
}

bool SyntaxMap::is_identity() const {
  for (int i = 0; i < kBoardTiles; ++i) {
    if (token_to_board_[i] != i) return false;
  }
  return true;
}

GameSpec make_spec(GameId id, const SpecOptions& options) {
  GameSpec spec;
  spec.id = id;
  Board b;
  if (id == GameId::DelFlank) {
    for (int i : options.delflank_black) b.set(i, Tile::Black);
    for (int i : options.delflank_white) b.set(i, Tile::White);
    spec.validation = ValidationRule::Neighbor;
    spec.update = UpdateRule::Delete;
    spec.adjacency = options.delflank_adjacency;
  } else {
    b.set(square_index("d4"), Tile::White);
    b.set(square_index("e5"), Tile::White);
    b.set(square_index("d5"), Tile::Black);
    b.set(square_index("e4"), Tile::Black);
    spec.update = id == GameId::NoMidFlip ? UpdateRule::FlipEndpoints : UpdateRule::FlipAll;
  }
  b.set_to_move(Color::Black);
  spec.initial = b;
  if (id == GameId::Iago) spec.syntax = SyntaxMap::derangement(options.iago_seed);
  return spec;
}

Board initial_board(const GameSpec& spec) { return spec.initial; }

std::uint64_t placement_mask(const GameSpec& spec, const Board& board, Color color) {
  const std::uint64_t own = board.pieces(color);
  const std::uint64_t opp = board.pieces(opponent(color));
  if (spec.validation == ValidationRule::Neighbor) return neighbor_moves(own, opp, spec.adjacency);
  return flanking_moves(own, opp);
}

MoveSet valid_moves(const GameSpec& spec, const Board& board) {
  const std::uint64_t mine = placement_mask(spec, board, board.to_move());
  if (mine) return MoveSet::of_placements(mine);
  if (placement_mask(spec, board, opponent(board.to_move()))) return MoveSet::only_pass();
  return {};
}

Board apply_move(const GameSpec& spec, const Board& board, Move move) {
  if (!valid_moves(spec, board).contains(move)) {
    throw IllegalMove(move.is_pass() ? std::string("pass is not legal here")
                                     : "illegal move " + square_name(move.index()));
  }
  Board next = board;
  const Color mover = board.to_move();
  next.set_to_move(opponent(mover));
  if (move.is_pass()) return next;

  const std::uint64_t bit = 1ULL << move.index();
  const std::uint64_t own = board.pieces(mover);
  const std::uint64_t opp = board.pieces(opponent(mover));
  std::uint64_t flip = 0;
  std::uint64_t remove = 0;
  for_each_run(bit, own, opp, [&](std::uint64_t run, std::uint64_t first, std::uint64_t last) {
    switch (spec.update) {
      case UpdateRule::FlipAll: flip |= run; break;
      case UpdateRule::FlipEndpoints: flip |= first | last; break;
      case UpdateRule::Delete: remove |= run; break;
    }
  });
  const Tile mine = tile_of(mover);
  next.set(move.index(), mine);
  for (std::uint64_t m = flip; m; m &= m - 1) next.set(std::countr_zero(m), mine);
  for (std::uint64_t m = remove; m; m &= m - 1) next.set(std::countr_zero(m), Tile::Empty);
  return next;
}

std::vector<std::vector<int>> flanked_runs(const Board& board, int index) {
  const Color mover = board.to_move();
  std::vector<std::vector<int>> runs;
  const int row0 = index / 8;
  const int col0 = index % 8;
  for (const auto& [dr, dc] : kDirections) {
    std::vector<int> run;
    int r = row0 + dr;
    int c = col0 + dc;
    while (r >= 0 && r < 8 && c >= 0 && c < 8 && board.at(8 * r + c) == tile_of(opponent(mover))) {
      run.push_back(8 * r + c);
      r += dr;
      c += dc;
    }
    if (!run.empty() && r >= 0 && r < 8 && c >= 0 && c < 8 && board.at(8 * r + c) == tile_of(mover)) {
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<Move> tokens_to_moves(const GameSpec& spec, std::span<const Token> tokens) {
  std::vector<Move> out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t < kBoardTiles) {
      out.push_back(Move::place(spec.syntax.to_board(t)));
    } else if (t == kSkipToken) {
      out.push_back(Move::pass());
    } else if (t != kPadToken) {
      throw UnknownToken("unknown token " + std::to_string(t));
    }
  }
  return out;
}

bool is_terminal(const GameSpec& spec, const Board& board, int move_count) {
  if (move_count >= kMaxPlacements) return true;
  return placement_mask(spec, board, Color::Black) == 0 &&
         placement_mask(spec, board, Color::White) == 0;
}

GameState::GameState(const GameSpec& spec) : spec_(&spec), board_(spec.initial) { settle(); }

void GameState::settle() {
  pending_pass_ = false;
  if (placements_ >= kMaxPlacements) {
    next_ = 0;
    return;
  }
  next_ = placement_mask(*spec_, board_, board_.to_move());
  if (next_ == 0) {
    const std::uint64_t theirs = placement_mask(*spec_, board_, opponent(board_.to_move()));
    if (theirs) {
      board_.set_to_move(opponent(board_.to_move()));
      next_ = theirs;
      pending_pass_ = true;
    }
  }
}

bool GameState::play(Move move) {
  // Forced passes are applied by settle(); an explicit one only acknowledges it.
  if (move.is_pass()) {
    if (!pending_pass_) return false;
    pending_pass_ = false;
    return true;
  }
  if (((next_ >> move.index()) & 1ULL) == 0) return false;
  board_ = apply_move(*spec_, board_, move);
  ++placements_;
  settle();
  return true;
}

bool GameState::play_token(int token) {
  if (token == kPadToken) return true;
  if (token == kSkipToken) return play(Move::pass());
  if (token < 0 || token >= kBoardTiles) return false;
  return play(Move::place(spec_->syntax.to_board(token)));
}

std::optional<Board> replay(const GameSpec& spec, std::span<const Token> tokens) {
  GameState state(spec);
  for (Token t : tokens) {
    if (!state.play_token(t)) return std::nullopt;
  }
  return state.board();
}

}  // namespace metaoth
