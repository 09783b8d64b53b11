#pragma once

// Array-based Othello written without bit tricks, used only as an oracle
// for the bitboard engine. Cells: 0 empty, 1 black, 2 white.

#include <array>
#include <vector>

namespace ref {

struct Position {
  std::array<int, 64> cells{};
  int mover = 1;
};

inline Position classic_start() {
  Position p;
  p.cells[3 * 8 + 3] = 2;  // d4
  p.cells[4 * 8 + 4] = 2;  // e5
  p.cells[4 * 8 + 3] = 1;  // d5
  p.cells[3 * 8 + 4] = 1;  // e4
  return p;
}

// Opponent runs bracketed by a placement at (row, col), one per direction.
inline std::vector<std::vector<int>> runs(const Position& p, int square) {
  std::vector<std::vector<int>> out;
  if (p.cells[square] != 0) return out;
  const int other = 3 - p.mover;
  const int row = square / 8, col = square % 8;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      std::vector<int> run;
      int r = row + dr, c = col + dc;
      while (r >= 0 && r < 8 && c >= 0 && c < 8 && p.cells[r * 8 + c] == other) {
        run.push_back(r * 8 + c);
        r += dr;
        c += dc;
      }
      if (!run.empty() && r >= 0 && r < 8 && c >= 0 && c < 8 && p.cells[r * 8 + c] == p.mover) {
        out.push_back(run);
      }
    }
  }
  return out;
}

inline std::vector<int> legal_squares(const Position& p) {
  std::vector<int> out;
  for (int s = 0; s < 64; ++s) {
    if (!runs(p, s).empty()) out.push_back(s);
  }
  return out;
}

inline Position play(const Position& p, int square) {
  Position q = p;
  for (const auto& run : runs(p, square)) {
    for (int s : run) q.cells[s] = p.mover;
  }
  q.cells[square] = p.mover;
  q.mover = 3 - p.mover;
  return q;
}

inline Position pass(const Position& p) {
  Position q = p;
  q.mover = 3 - p.mover;
  return q;
}

}  // namespace ref
