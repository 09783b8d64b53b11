#pragma once

// Probe-weight geometry: row cosines, orthogonal Procrustes, principal
// angles and the pooled residual-stream rotation.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "metaoth/oracle.hpp"

namespace metaoth::geometry {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ZeroRow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DegenerateSubspace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InsufficientPairs : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CosineReport {
  std::vector<double> values;  // one per row
  MeanCI summary;
};

// Cosine of corresponding rows. Throws ZeroRow or std::invalid_argument on
// shape mismatch.
CosineReport row_cosine(const Matrix& a, const Matrix& b);

struct AlignmentResult {
  int layer = 0;  // 0 for a pooled (global) fit
  Matrix rotation;
  CosineReport pre;
  CosineReport post;
  double pre_residual = 0.0;   // ||source - target||_F / ||target||_F
  double post_residual = 0.0;  // ||source R - target||_F / ||target||_F
  bool rank_deficient = false;
};

// Orthogonal R minimizing ||source R - target||_F: R = U V^T from the SVD of
// source^T target. Rows are compared after normalization when normalize_rows.
AlignmentResult procrustes_align(const Matrix& source, const Matrix& target, bool normalize_rows = true);

// Scale-free copy with unit-norm rows. Throws ZeroRow.
Matrix normalize_rows(const Matrix& w);

// Baselines over independent replicates; summary CI is across replicates.
struct BaselineReport {
  std::vector<double> raw_means;
  std::vector<double> aligned_means;
  MeanCI raw;
  MeanCI aligned;
};

// i.i.d. standard Gaussian matrices of the given shape.
BaselineReport gaussian_baseline(int rows, int cols, int replicates = 20, std::uint64_t seed = 42);

// The first matrix against row-permuted copies of the second, which keeps
// each row's distribution but breaks the correspondence.
BaselineReport shuffled_baseline(const Matrix& a, const Matrix& b, int replicates = 20, std::uint64_t seed = 42);

// Largest principal angle (degrees) between span(a0, a1) and span(b0, b1).
// Throws DegenerateSubspace when either pair is (nearly) collinear.
double principal_angle(const Eigen::Ref<const Eigen::VectorXd>& a0, const Eigen::Ref<const Eigen::VectorXd>& a1,
                       const Eigen::Ref<const Eigen::VectorXd>& b0, const Eigen::Ref<const Eigen::VectorXd>& b1);

// Per-tile angle between the (mine, yours) planes of two [192 x d] probes.
// Degenerate tiles yield NaN.
std::vector<double> principal_angles(const Matrix& probe_a, const Matrix& probe_b);

// Single orthogonal map from source rows to target rows (paired by index).
// Throws InsufficientPairs when there are fewer pairs than dimensions.
AlignmentResult fit_global_rotation(const Matrix& source, const Matrix& target);

// Uniform subsample of row indices, sorted.
std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t budget, std::uint64_t seed);

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;  // NaN when the predictor has zero variance
  std::size_t n = 0;
};

// OLS of y (geometric quantity) on x (divergence probability). NaN entries
// in either vector are dropped pairwise.
RegressionResult divergence_regression(std::span<const double> y, std::span<const double> x);

// Random orthogonal matrix (Haar) of size n.
Matrix random_orthogonal(int n, std::uint64_t seed);

bool is_orthogonal(const Matrix& r, double tol = 1e-8);

}  // namespace metaoth::geometry
