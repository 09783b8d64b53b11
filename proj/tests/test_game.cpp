#include <doctest.h>

#include <algorithm>

#include "metaoth/game.hpp"
#include "metaoth/rng.hpp"
#include "reference_othello.hpp"

using namespace metaoth;

namespace {

std::uint64_t mask_of(std::initializer_list<const char*> names) {
  std::uint64_t m = 0;
  for (const char* n : names) m |= 1ULL << square_index(n);
  return m;
}

int count(const Board& b, Tile t) {
  int n = 0;
  for (int i = 0; i < kBoardTiles; ++i) n += b.at(i) == t;
  return n;
}

// Black to move on an otherwise empty row: b1 black, c1..e1 white, f1 empty.
Board three_run_board() {
  Board b;
  b.set(square_index("b1"), Tile::Black);
  for (const char* s : {"c1", "d1", "e1"}) b.set(square_index(s), Tile::White);
  b.set(square_index("h8"), Tile::White);
  b.set_to_move(Color::Black);
  return b;
}

}  // namespace

TEST_CASE("square names follow the row-major a1 = 0 layout") {
  CHECK(square_index("a1") == 0);
  CHECK(square_index("h1") == 7);
  CHECK(square_index("d3") == 19);
  CHECK(square_index("h8") == 63);
  CHECK(square_name(44) == "e6");
  CHECK_THROWS_AS(square_index("i9"), std::invalid_argument);
  CHECK_THROWS_AS(square_index("a"), std::invalid_argument);
}

TEST_CASE("initial boards") {
  const auto classic = initial_board(make_spec(GameId::Classic));
  CHECK(classic.occupied_count() == 4);
  CHECK(classic.to_move() == Color::Black);
  CHECK(classic.at(square_index("d4")) == Tile::White);
  CHECK(classic.at(square_index("e5")) == Tile::White);
  CHECK(classic.at(square_index("d5")) == Tile::Black);
  CHECK(classic.at(square_index("e4")) == Tile::Black);
  CHECK(initial_board(make_spec(GameId::Iago)) == classic);
  CHECK(initial_board(make_spec(GameId::NoMidFlip)) == classic);

  const auto del = initial_board(make_spec(GameId::DelFlank));
  CHECK(del.occupied_count() == 4);
  CHECK(del.at(square_index("c3")) == Tile::Black);
  CHECK(del.at(square_index("f6")) == Tile::Black);
  CHECK(del.at(square_index("f3")) == Tile::White);
  CHECK(del.at(square_index("c6")) == Tile::White);
  CHECK(del.to_move() == Color::Black);
}

TEST_CASE("valid moves on the opening boards") {
  const auto classic = make_spec(GameId::Classic);
  const auto v = valid_moves(classic, initial_board(classic));
  CHECK(v.placements() == mask_of({"d3", "c4", "f5", "e6"}));
  CHECK_FALSE(v.has_pass());

  const auto del = make_spec(GameId::DelFlank);
  const auto board = initial_board(del);
  std::uint64_t expect = 0;
  for (int s = 0; s < kBoardTiles; ++s) {
    if (board.at(s) != Tile::Empty) continue;
    for (int anchor : {square_index("c3"), square_index("f6")}) {
      if (std::max(std::abs(s / 8 - anchor / 8), std::abs(s % 8 - anchor % 8)) == 1) expect |= 1ULL << s;
    }
  }
  CHECK(valid_moves(del, board).placements() == expect);
  CHECK(std::popcount(expect) == 16);
}

TEST_CASE("full board has no moves") {
  Board b;
  for (int i = 0; i < kBoardTiles; ++i) b.set(i, i % 3 ? Tile::Black : Tile::White);
  for (GameId g : {GameId::Classic, GameId::DelFlank}) {
    const auto spec = make_spec(g);
    CHECK(valid_moves(spec, b).empty());
    CHECK(is_terminal(spec, b, 20));
  }
}

TEST_CASE("forced pass when only the opponent can move") {
  // Black has one piece boxed in; White can still place next to it.
  Board b;
  b.set(square_index("a1"), Tile::White);
  b.set(square_index("b1"), Tile::Black);
  b.set_to_move(Color::Black);
  const auto spec = make_spec(GameId::Classic);
  const auto v = valid_moves(spec, b);
  CHECK(v.has_pass());
  CHECK(v.placements() == 0);
  const auto after = apply_move(spec, b, Move::pass());
  CHECK(after.to_move() == Color::White);
  CHECK(after.pieces(Color::Black) == b.pieces(Color::Black));
}

TEST_CASE("update rules on a run of three") {
  const Board b = three_run_board();
  const int f1 = square_index("f1");

  const auto classic = apply_move(make_spec(GameId::Classic), b, Move::place(f1));
  for (const char* s : {"c1", "d1", "e1", "f1"}) CHECK(classic.at(square_index(s)) == Tile::Black);

  const auto nomid = apply_move(make_spec(GameId::NoMidFlip), b, Move::place(f1));
  CHECK(nomid.at(square_index("c1")) == Tile::Black);
  CHECK(nomid.at(square_index("d1")) == Tile::White);
  CHECK(nomid.at(square_index("e1")) == Tile::Black);
  CHECK(nomid.to_move() == Color::White);
}

TEST_CASE("delflank deletes flanked tiles") {
  Board b;
  b.set(square_index("a1"), Tile::Black);
  b.set(square_index("b1"), Tile::White);
  b.set(square_index("c1"), Tile::White);
  b.set(square_index("e2"), Tile::Black);
  b.set(square_index("h8"), Tile::White);
  b.set_to_move(Color::Black);
  const auto spec = make_spec(GameId::DelFlank);
  const auto after = apply_move(spec, b, Move::place(square_index("d1")));
  CHECK(after.at(square_index("b1")) == Tile::Empty);
  CHECK(after.at(square_index("c1")) == Tile::Empty);
  CHECK(after.at(square_index("d1")) == Tile::Black);
  CHECK(after.occupied_count() == b.occupied_count() - 1);
  // Neighbor validation: any empty square touching a black piece.
  CHECK(valid_moves(spec, b).contains(Move::place(square_index("a2"))));
  CHECK_FALSE(valid_moves(spec, b).contains(Move::place(square_index("h1"))));
}

TEST_CASE("illegal move throws") {
  const auto spec = make_spec(GameId::Classic);
  CHECK_THROWS_AS(apply_move(spec, initial_board(spec), Move::place(0)), IllegalMove);
  CHECK_THROWS_AS(apply_move(spec, initial_board(spec), Move::pass()), IllegalMove);
}

TEST_CASE("token mapping") {
  const auto classic = make_spec(GameId::Classic);
  const std::vector<Token> seq{19, 26};
  const auto moves = tokens_to_moves(classic, seq);
  REQUIRE(moves.size() == 2);
  CHECK(moves[0] == Move::place(19));
  CHECK(moves[1] == Move::place(26));
  const std::vector<Token> with_skip{19, kSkipToken, kPadToken};
  const auto m2 = tokens_to_moves(classic, with_skip);
  REQUIRE(m2.size() == 2);
  CHECK(m2[1].is_pass());
  const std::vector<Token> bad{70};
  CHECK_THROWS_AS(tokens_to_moves(classic, bad), UnknownToken);

  std::array<int, kBoardTiles> perm{};
  for (int i = 0; i < kBoardTiles; ++i) perm[i] = (i + 23) % kBoardTiles;
  GameSpec custom = classic;
  custom.syntax = SyntaxMap::from_permutation(perm);
  const std::vector<Token> one{19};
  CHECK(tokens_to_moves(custom, one)[0] == Move::place(42));
}

TEST_CASE("iago syntax is a seeded derangement") {
  const auto a = SyntaxMap::derangement(42);
  const auto b = SyntaxMap::derangement(42);
  const auto c = SyntaxMap::derangement(43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  std::array<bool, kBoardTiles> seen{};
  for (int t = 0; t < kBoardTiles; ++t) {
    CHECK(a.to_board(t) != t);
    CHECK(a.to_token(a.to_board(t)) == t);
    seen[a.to_board(t)] = true;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
  CHECK(SyntaxMap::identity().is_identity());
}

TEST_CASE("replay") {
  const auto spec = make_spec(GameId::Classic);
  CHECK(replay(spec, std::vector<Token>{}) == initial_board(spec));
  const auto b = replay(spec, std::vector<Token>{19});
  REQUIRE(b.has_value());
  CHECK(b->occupied_count() == 5);
  CHECK(count(*b, Tile::Black) == 4);
  CHECK(b->at(square_index("d4")) == Tile::Black);
  CHECK(b->to_move() == Color::White);
  CHECK_FALSE(replay(spec, std::vector<Token>{0}).has_value());
}

TEST_CASE("terminal conditions") {
  const auto spec = make_spec(GameId::Classic);
  CHECK_FALSE(is_terminal(spec, initial_board(spec), 0));
  CHECK(is_terminal(spec, initial_board(spec), 60));
}

TEST_CASE("bitboard engine matches the array reference on random games") {
  const auto spec = make_spec(GameId::Classic);
  Rng rng(7);
  for (int game = 0; game < 200; ++game) {
    ref::Position p = ref::classic_start();
    Board b = initial_board(spec);
    for (int ply = 0; ply < 80; ++ply) {
      auto legal = ref::legal_squares(p);
      std::uint64_t mask = 0;
      for (int s : legal) mask |= 1ULL << s;
      const auto v = valid_moves(spec, b);
      REQUIRE(v.placements() == mask);
      if (legal.empty()) {
        if (ref::legal_squares(ref::pass(p)).empty()) {
          CHECK(v.empty());
          break;
        }
        CHECK(v.has_pass());
        p = ref::pass(p);
        b = apply_move(spec, b, Move::pass());
        continue;
      }
      const int s = legal[rng.below(legal.size())];
      p = ref::play(p, s);
      b = apply_move(spec, b, Move::place(s));
      for (int i = 0; i < kBoardTiles; ++i) REQUIRE(static_cast<int>(b.at(i)) == p.cells[i]);
    }
  }
}

TEST_CASE("game state settles forced passes") {
  const auto spec = make_spec(GameId::Classic);
  GameState st(spec);
  CHECK(st.next_placements() == mask_of({"d3", "c4", "f5", "e6"}));
  CHECK_FALSE(st.play_token(0));
  CHECK(st.placements() == 0);
  CHECK(st.play_token(19));
  CHECK(st.placements() == 1);
  CHECK(st.board().to_move() == Color::White);
}
