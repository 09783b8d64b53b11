#pragma once

// Synthetic activations with a planted linear board code:
// h = sum_i scale * q_{i, c(i)} + noise, where the q rows form an
// orthonormal dictionary of 192 directions.

#include <algorithm>
#include <vector>

#include "metaoth/geometry.hpp"
#include "metaoth/probes.hpp"
#include "metaoth/rng.hpp"

namespace test {

struct PlantedBoards {
  metaoth::probes::Matrix activations;
  std::vector<metaoth::probes::TileLabels> labels;
  std::vector<metaoth::probes::RowRef> rows;
  metaoth::probes::Matrix dictionary;  // [192 x d]
};

inline PlantedBoards planted_boards(int n_sequences, int positions, int d, double noise, std::uint64_t seed,
                                    std::array<double, 3> class_probs = {0.5, 0.3, 0.2}) {
  using namespace metaoth;
  PlantedBoards out;
  out.dictionary = geometry::random_orthogonal(d, seed).topRows(probes::kProbeRows);
  const auto n = static_cast<Eigen::Index>(n_sequences) * positions;
  out.activations = probes::Matrix::Zero(n, d);
  Rng rng(derive_seed(seed, 1));
  Eigen::Index r = 0;
  for (int s = 0; s < n_sequences; ++s) {
    for (int t = 0; t < positions; ++t, ++r) {
      probes::TileLabels lab{};
      for (int i = 0; i < kBoardTiles; ++i) {
        const double u = rng.uniform();
        const int c = u < class_probs[0] ? 0 : (u < class_probs[0] + class_probs[1] ? 1 : 2);
        lab[i] = static_cast<probes::TileClass>(c);
        out.activations.row(r) += out.dictionary.row(i * probes::kClasses + c);
      }
      for (int k = 0; k < d; ++k) out.activations(r, k) += noise * rng.normal();
      out.labels.push_back(lab);
      out.rows.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint16_t>(t)});
    }
  }
  return out;
}

// Mean over tiles of the majority-class frequency in `fit`, scored on `eval`.
inline double prior_baseline(const std::vector<metaoth::probes::TileLabels>& fit,
                             const std::vector<metaoth::probes::TileLabels>& eval) {
  double total = 0.0;
  for (int i = 0; i < metaoth::kBoardTiles; ++i) {
    std::array<int, 3> counts{};
    for (const auto& l : fit) ++counts[static_cast<int>(l[i])];
    const auto major = static_cast<metaoth::probes::TileClass>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    int hits = 0;
    for (const auto& l : eval) hits += l[i] == major;
    total += static_cast<double>(hits) / static_cast<double>(eval.size());
  }
  return total / metaoth::kBoardTiles;
}

}  // namespace test
