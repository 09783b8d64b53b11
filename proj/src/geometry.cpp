#include "metaoth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "metaoth/rng.hpp"

namespace metaoth::geometry {
namespace {

Matrix gaussian(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Matrix normalize_rows(const Matrix& w) {
  Matrix out = w;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const double n = w.row(r).norm();
    if (!(n > 0.0)) throw ZeroRow("row " + std::to_string(r) + " has zero norm");
    out.row(r) /= n;
  }
  return out;
}

CosineReport row_cosine(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("row_cosine: shape mismatch");
  CosineReport rep;
  rep.values.resize(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double na = a.row(r).norm();
    const double nb = b.row(r).norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw ZeroRow("row " + std::to_string(r) + " has zero norm");
    rep.values[static_cast<std::size_t>(r)] = std::clamp(a.row(r).dot(b.row(r)) / (na * nb), -1.0, 1.0);
  }
  rep.summary = mean_ci(rep.values);
  return rep;
}

AlignmentResult procrustes_align(const Matrix& source, const Matrix& target, bool normalize) {
  if (source.rows() != target.rows() || source.cols() != target.cols()) {
    throw std::invalid_argument("procrustes_align: shape mismatch");
  }
  const Matrix s = normalize ? normalize_rows(source) : source;
  const Matrix t = normalize ? normalize_rows(target) : target;
  const Eigen::MatrixXd cross = s.transpose() * t;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentResult res;
  res.rotation = svd.matrixU() * svd.matrixV().transpose();
  const auto& sv = svd.singularValues();
  res.rank_deficient = sv.size() == 0 || sv[sv.size() - 1] <= 1e-10 * std::max(1.0, sv[0]);
  const Matrix aligned = s * res.rotation;
  res.pre = row_cosine(s, t);
  res.post = row_cosine(aligned, t);
  const double tn = t.norm();
  res.pre_residual = (s - t).norm() / tn;
  res.post_residual = (aligned - t).norm() / tn;
  return res;
}

BaselineReport gaussian_baseline(int rows, int cols, int replicates, std::uint64_t seed) {
  BaselineReport rep;
  for (int k = 0; k < replicates; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const Matrix a = gaussian(rows, cols, rng);
    const Matrix b = gaussian(rows, cols, rng);
    const auto res = procrustes_align(a, b);
    rep.raw_means.push_back(res.pre.summary.mean);
    rep.aligned_means.push_back(res.post.summary.mean);
  }
  rep.raw = mean_ci(rep.raw_means);
  rep.aligned = mean_ci(rep.aligned_means);
  return rep;
}

BaselineReport shuffled_baseline(const Matrix& a, const Matrix& b, int replicates, std::uint64_t seed) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("shuffled_baseline: shape mismatch");
  BaselineReport rep;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(b.rows()));
  for (int k = 0; k < replicates; ++k) {
    Rng rng(derive_seed(seed, 0x5000 + static_cast<std::uint64_t>(k)));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const Matrix shuffled = b(perm, Eigen::all);
    const auto res = procrustes_align(a, shuffled);
    rep.raw_means.push_back(res.pre.summary.mean);
    rep.aligned_means.push_back(res.post.summary.mean);
  }
  rep.raw = mean_ci(rep.raw_means);
  rep.aligned = mean_ci(rep.aligned_means);
  return rep;
}

double principal_angle(const Eigen::Ref<const Eigen::VectorXd>& a0, const Eigen::Ref<const Eigen::VectorXd>& a1,
                       const Eigen::Ref<const Eigen::VectorXd>& b0, const Eigen::Ref<const Eigen::VectorXd>& b1) {
  auto basis = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    Eigen::MatrixXd m(u.size(), 2);
    m.col(0) = u;
    m.col(1) = v;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    if (!(s[0] > 0.0) || s[1] <= 1e-10 * s[0]) throw DegenerateSubspace("vectors span less than a plane");
    return Eigen::MatrixXd(svd.matrixU());
  };
  const Eigen::MatrixXd qa = basis(a0, a1);
  const Eigen::MatrixXd qb = basis(b0, b1);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(qa.transpose() * qb).singularValues();
  const double c = std::clamp(s[s.size() - 1], 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

std::vector<double> principal_angles(const Matrix& probe_a, const Matrix& probe_b) {
  if (probe_a.rows() != 192 || probe_b.rows() != 192 || probe_a.cols() != probe_b.cols()) {
    throw std::invalid_argument("principal_angles expects two [192 x d] probes");
  }
  std::vector<double> out(64);
  for (int i = 0; i < 64; ++i) {
    try {
      out[i] = principal_angle(probe_a.row(i * 3).transpose(), probe_a.row(i * 3 + 1).transpose(),
                               probe_b.row(i * 3).transpose(), probe_b.row(i * 3 + 1).transpose());
    } catch (const DegenerateSubspace&) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

AlignmentResult fit_global_rotation(const Matrix& source, const Matrix& target) {
  if (source.rows() != target.rows() || source.cols() != target.cols()) {
    throw std::invalid_argument("fit_global_rotation: shape mismatch");
  }
  if (source.rows() < source.cols()) {
    throw InsufficientPairs(std::to_string(source.rows()) + " pairs for dimension " + std::to_string(source.cols()));
  }
  AlignmentResult res = procrustes_align(source, target, false);
  return res;
}

std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (budget >= n) return idx;
  Rng rng(derive_seed(seed, 0x5ab5));
  for (std::size_t i = 0; i < budget; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

RegressionResult divergence_regression(std::span<const double> y, std::span<const double> x) {
  if (x.size() != y.size()) throw std::invalid_argument("divergence_regression: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    xs.push_back(x[i]);
    ys.push_back(y[i]);
  }
  RegressionResult res;
  res.n = xs.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (res.n < 2) {
    res.slope = res.intercept = res.r2 = nan;
    return res;
  }
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*lo == *hi) {
    res.slope = res.r2 = nan;
    res.intercept = my;
    return res;
  }
  res.slope = sxy / sxx;
  res.intercept = my - res.slope * mx;
  res.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return res;
}

Matrix random_orthogonal(int n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x0a7));
  const Matrix g = gaussian(n, n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  }
  return q;
}

bool is_orthogonal(const Matrix& r, double tol) {
  if (r.rows() != r.cols()) return false;
  return ((r.transpose() * r) - Matrix::Identity(r.rows(), r.cols())).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace metaoth::geometry
