#include "metaoth/transformer.hpp"

#include <cmath>
#include <limits>

#include "metaoth/rng.hpp"

namespace metaoth::nn {
namespace {

constexpr double kLayerNormEps = 1e-5;

// Per-layer parameter slots, in layout order.
enum Slot : std::size_t {
  kLn1G, kLn1B, kWqkv, kBqkv, kWout, kBout, kLn2G, kLn2B, kWfc, kBfc, kWproj, kBproj, kSlotsPerLayer
};

constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kFirstLayer = 2;

template <typename T>
void layer_norm(const Mat<T>& x, Eigen::Ref<const Vec<T>> g, Eigen::Ref<const Vec<T>> b, Mat<T>& hat,
                Vec<T>& rstd, Mat<T>& out) {
  const auto n = x.rows();
  const auto d = x.cols();
  hat.resize(n, d);
  out.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd(i) = r;
    hat.row(i) = (x.row(i).array() - mean) * r;
    out.row(i) = hat.row(i).array() * g.transpose().array() + b.transpose().array();
  }
}

// dx (accumulated) from d out; also accumulates dg and db.
template <typename T>
void layer_norm_backward(const Mat<T>& dout, const Mat<T>& hat, const Vec<T>& rstd,
                         Eigen::Ref<const Vec<T>> g, Eigen::Ref<Vec<T>> dg, Eigen::Ref<Vec<T>> db,
                         Mat<T>& dx) {
  dg += (dout.array() * hat.array()).colwise().sum().matrix().transpose();
  db += dout.colwise().sum().transpose();
  const auto d = static_cast<T>(hat.cols());
  for (Eigen::Index i = 0; i < dout.rows(); ++i) {
    const auto dhat = (dout.row(i).array() * g.transpose().array()).eval();
    const T mean_dhat = dhat.sum() / d;
    const T mean_dhat_hat = (dhat * hat.row(i).array()).sum() / d;
    dx.row(i).array() += rstd(i) * (dhat - mean_dhat - hat.row(i).array() * mean_dhat_hat);
  }
}

template <typename T>
constexpr T gelu_k() {
  return static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
}

template <typename T>
void gelu(const Mat<T>& f, Mat<T>& u) {
  const auto x = f.array();
  u = (T(0.5) * x * (T(1) + (gelu_k<T>() * (x + T(0.044715) * x.cube())).tanh())).matrix();
}

template <typename T>
void gelu_backward(const Mat<T>& f, Mat<T>& du) {
  const auto x = f.array();
  const auto t = (gelu_k<T>() * (x + T(0.044715) * x.cube())).tanh().eval();
  const auto grad = T(0.5) * (T(1) + t) +
                    T(0.5) * x * (T(1) - t.square()) * gelu_k<T>() * (T(1) + T(3 * 0.044715) * x.square());
  du.array() *= grad;
}

}  // namespace

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.n_layers = 8;
  c.n_heads = 8;
  c.d_model = 512;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || context_len <= 0 || mlp_ratio <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (vocab != kVocabSize) throw std::invalid_argument("vocab must be 66 (64 tiles + skip + pad)");
}

template <typename T>
struct Transformer<T>::Layer {
  Mat<T> x_in, ln1_hat, a, qkv, probs, att, x_mid, ln2_hat, m, f, u;
  Vec<T> ln1_rstd, ln2_rstd;
};

template <typename T>
struct Transformer<T>::Workspace {
  std::vector<Layer> layers;
  Mat<T> x, lnf_hat, lnf_out, logits;
  Vec<T> lnf_rstd;
};

template <typename T>
Transformer<T>::Transformer(const ModelConfig& config) : config_(config) {
  config_.validate();
  build_layout();
  init_weights();
}

template <typename T>
void Transformer<T>::build_layout() {
  const int d = config_.d_model;
  const int hidden = d * config_.mlp_ratio;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape, bool decay) {
    ParamInfo p;
    p.name = std::move(name);
    p.size = 1;
    for (int s : shape) p.size *= static_cast<std::size_t>(s);
    p.shape = std::move(shape);
    p.offset = offset;
    p.decay = decay;
    offset += p.size;
    layout_.push_back(std::move(p));
  };
  add("tok_emb", {config_.vocab, d}, true);
  add("pos_emb", {config_.context_len, d}, true);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string pre = "blocks." + std::to_string(l) + ".";
    slot_index_.push_back(layout_.size());
    add(pre + "ln1.g", {d}, false);
    add(pre + "ln1.b", {d}, false);
    add(pre + "attn.w_qkv", {d, 3 * d}, true);
    add(pre + "attn.b_qkv", {3 * d}, false);
    add(pre + "attn.w_out", {d, d}, true);
    add(pre + "attn.b_out", {d}, false);
    add(pre + "ln2.g", {d}, false);
    add(pre + "ln2.b", {d}, false);
    add(pre + "mlp.w_fc", {d, hidden}, true);
    add(pre + "mlp.b_fc", {hidden}, false);
    add(pre + "mlp.w_proj", {hidden, d}, true);
    add(pre + "mlp.b_proj", {d}, false);
  }
  slot_index_.push_back(layout_.size());
  add("ln_f.g", {d}, false);
  add("ln_f.b", {d}, false);
  add("unembed", {d, config_.vocab}, true);
  params_.assign(offset, T(0));
}

template <typename T>
void Transformer<T>::init_weights() {
  Rng rng(derive_seed(config_.seed, 0x5eed));
  const double residual_std = config_.init_std / std::sqrt(2.0 * config_.n_layers);
  for (const auto& p : layout_) {
    T* w = params_.data() + p.offset;
    const bool gain = p.name.ends_with(".g");
    const bool is_matrix = p.shape.size() == 2;
    const bool residual_out = p.name.ends_with("w_out") || p.name.ends_with("w_proj");
    const double std = residual_out ? residual_std : config_.init_std;
    for (std::size_t i = 0; i < p.size; ++i) {
      w[i] = gain ? T(1) : (is_matrix ? static_cast<T>(std * rng.normal()) : T(0));
    }
  }
}

template <typename T>
const ParamInfo& Transformer<T>::param_info(const std::string& name) const {
  for (const auto& p : layout_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
Eigen::Map<Mat<T>> Transformer<T>::mat(std::size_t layer, std::size_t slot) {
  const auto& p = layout_[layer == SIZE_MAX ? slot : slot_index_[layer] + slot];
  const int rows = p.shape.size() == 2 ? p.shape[0] : 1;
  const int cols = p.shape.size() == 2 ? p.shape[1] : p.shape[0];
  return {params_.data() + p.offset, rows, cols};
}

template <typename T>
Eigen::Map<const Mat<T>> Transformer<T>::mat(std::size_t layer, std::size_t slot) const {
  const auto& p = layout_[layer == SIZE_MAX ? slot : slot_index_[layer] + slot];
  const int rows = p.shape.size() == 2 ? p.shape[0] : 1;
  const int cols = p.shape.size() == 2 ? p.shape[1] : p.shape[0];
  return {params_.data() + p.offset, rows, cols};
}

template <typename T>
void Transformer<T>::check_batch(const TokenBatch& tokens) const {
  if (tokens.batch <= 0 || tokens.len <= 0 || tokens.len > config_.context_len ||
      tokens.tokens.size() != static_cast<std::size_t>(tokens.batch) * tokens.len) {
    throw ShapeMismatch("token batch shape " + std::to_string(tokens.batch) + "x" +
                        std::to_string(tokens.len) + " does not fit context " +
                        std::to_string(config_.context_len));
  }
  for (Token t : tokens.tokens) {
    if (t >= config_.vocab) throw ShapeMismatch("token id out of vocabulary");
  }
}

template <typename T>
void Transformer<T>::run(const TokenBatch& tokens, Workspace& ws, bool keep, ActivationCache<T>* cache,
                         const ResidualHook<T>& hook) const {
  check_batch(tokens);
  const int B = tokens.batch;
  const int L = tokens.len;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int hd = config_.head_dim();
  const Eigen::Index N = static_cast<Eigen::Index>(B) * L;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  const auto tok = mat(SIZE_MAX, kTokEmb);
  const auto pos = mat(SIZE_MAX, kPosEmb);
  ws.x.resize(N, d);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) ws.x.row(static_cast<Eigen::Index>(b) * L + t) = tok.row(tokens.at(b, t)) + pos.row(t);
  }
  if (cache) {
    cache->batch = B;
    cache->len = L;
    cache->layers.assign(config_.n_layers, Mat<T>());
  }
  ws.layers.resize(keep ? config_.n_layers : 1);

  for (int l = 0; l < config_.n_layers; ++l) {
    Layer& c = ws.layers[keep ? l : 0];
    const auto li = static_cast<std::size_t>(l);
    c.x_in = ws.x;
    layer_norm<T>(c.x_in, mat(li, kLn1G).row(0).transpose(), mat(li, kLn1B).row(0).transpose(), c.ln1_hat,
                  c.ln1_rstd, c.a);
    c.qkv.noalias() = c.a * mat(li, kWqkv);
    c.qkv.rowwise() += mat(li, kBqkv).row(0);

    c.att.resize(N, d);
    c.probs.resize(static_cast<Eigen::Index>(B) * H * L, L);
    Mat<T> scores(L, L);
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
      for (int h = 0; h < H; ++h) {
        const auto q = c.qkv.block(r0, h * hd, L, hd);
        const auto k = c.qkv.block(r0, d + h * hd, L, hd);
        const auto v = c.qkv.block(r0, 2 * d + h * hd, L, hd);
        scores.noalias() = q * k.transpose();
        auto p = c.probs.block((static_cast<Eigen::Index>(b) * H + h) * L, 0, L, L);
        for (int i = 0; i < L; ++i) {
          const T mx = scores.row(i).head(i + 1).maxCoeff();
          T sum = 0;
          for (int j = 0; j <= i; ++j) {
            const T e = std::exp((scores(i, j) - mx) * scale);
            p(i, j) = e;
            sum += e;
          }
          const T inv = T(1) / sum;
          for (int j = 0; j <= i; ++j) p(i, j) *= inv;
          for (int j = i + 1; j < L; ++j) p(i, j) = T(0);
        }
        c.att.block(r0, h * hd, L, hd).noalias() = p * v;
      }
    }
    ws.x.noalias() += c.att * mat(li, kWout);
    ws.x.rowwise() += mat(li, kBout).row(0);
    c.x_mid = ws.x;

    layer_norm<T>(c.x_mid, mat(li, kLn2G).row(0).transpose(), mat(li, kLn2B).row(0).transpose(), c.ln2_hat,
                  c.ln2_rstd, c.m);
    c.f.noalias() = c.m * mat(li, kWfc);
    c.f.rowwise() += mat(li, kBfc).row(0);
    gelu<T>(c.f, c.u);
    ws.x.noalias() += c.u * mat(li, kWproj);
    ws.x.rowwise() += mat(li, kBproj).row(0);

    if (hook) hook(l + 1, ws.x, B, L);
    if (cache) cache->layers[l] = ws.x;
  }

  const std::size_t fin = config_.n_layers;
  layer_norm<T>(ws.x, mat(fin, 0).row(0).transpose(), mat(fin, 1).row(0).transpose(), ws.lnf_hat, ws.lnf_rstd,
                ws.lnf_out);
  ws.logits.noalias() = ws.lnf_out * mat(fin, 2);
}

template <typename T>
Mat<T> Transformer<T>::forward(const TokenBatch& tokens, ActivationCache<T>* cache,
                               const ResidualHook<T>& hook) const {
  Workspace ws;
  run(tokens, ws, false, cache, hook);
  return std::move(ws.logits);
}

namespace {

// Cross-entropy over rows with target >= 0; writes d loss / d logits.
template <typename T>
double cross_entropy(const Mat<T>& logits, std::span<const int> targets, Mat<T>* dlogits) {
  std::size_t count = 0;
  for (int t : targets) count += t >= 0 ? 1 : 0;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  if (count == 0) return 0.0;
  double total = 0.0;
  const T inv = T(1) / static_cast<T>(count);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0) continue;
    const T mx = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - mx).exp().eval();
    const T sum = e.sum();
    total += static_cast<double>(std::log(sum) + mx - logits(i, target));
    if (dlogits) {
      dlogits->row(i) = (e / sum * inv).matrix();
      (*dlogits)(i, target) -= inv;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

template <typename T>
T Transformer<T>::loss(const TokenBatch& tokens, std::span<const int> targets) const {
  if (targets.size() != tokens.tokens.size()) throw ShapeMismatch("targets must match the token batch");
  const Mat<T> logits = forward(tokens);
  return static_cast<T>(cross_entropy<T>(logits, targets, nullptr));
}

template <typename T>
T Transformer<T>::loss_and_grad(const TokenBatch& tokens, std::span<const int> targets, std::span<T> grad) const {
  if (targets.size() != tokens.tokens.size()) throw ShapeMismatch("targets must match the token batch");
  if (grad.size() != params_.size()) throw ShapeMismatch("gradient buffer has the wrong size");
  thread_local Workspace ws;
  run(tokens, ws, true, nullptr, {});

  const int B = tokens.batch;
  const int L = tokens.len;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int hd = config_.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  auto gmat = [&](std::size_t layer, std::size_t slot) {
    const auto& p = layout_[layer == SIZE_MAX ? slot : slot_index_[layer] + slot];
    const int rows = p.shape.size() == 2 ? p.shape[0] : 1;
    const int cols = p.shape.size() == 2 ? p.shape[1] : p.shape[0];
    return Eigen::Map<Mat<T>>(grad.data() + p.offset, rows, cols);
  };
  auto gvec = [&](std::size_t layer, std::size_t slot) {
    const auto& p = layout_[slot_index_[layer] + slot];
    return Eigen::Map<Vec<T>>(grad.data() + p.offset, static_cast<Eigen::Index>(p.size));
  };
  auto pvec = [&](std::size_t layer, std::size_t slot) {
    const auto& p = layout_[slot_index_[layer] + slot];
    return Eigen::Map<const Vec<T>>(params_.data() + p.offset, static_cast<Eigen::Index>(p.size));
  };

  Mat<T> dlogits;
  const double loss = cross_entropy<T>(ws.logits, targets, &dlogits);

  const std::size_t fin = config_.n_layers;
  gmat(fin, 2).noalias() += ws.lnf_out.transpose() * dlogits;
  Mat<T> dln = dlogits * mat(fin, 2).transpose();
  Mat<T> dx = Mat<T>::Zero(ws.x.rows(), d);
  layer_norm_backward<T>(dln, ws.lnf_hat, ws.lnf_rstd, pvec(fin, 0), gvec(fin, 0), gvec(fin, 1), dx);

  Mat<T> du, df, dm, datt, dqkv, da, dp, ds;
  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Layer& c = ws.layers[l];

    // MLP branch.
    gmat(li, kWproj).noalias() += c.u.transpose() * dx;
    gmat(li, kBproj) += dx.colwise().sum();
    du.noalias() = dx * mat(li, kWproj).transpose();
    gelu_backward<T>(c.f, du);
    gmat(li, kWfc).noalias() += c.m.transpose() * du;
    gmat(li, kBfc) += du.colwise().sum();
    dm.noalias() = du * mat(li, kWfc).transpose();
    layer_norm_backward<T>(dm, c.ln2_hat, c.ln2_rstd, pvec(li, kLn2G), gvec(li, kLn2G), gvec(li, kLn2B), dx);

    // Attention branch.
    gmat(li, kWout).noalias() += c.att.transpose() * dx;
    gmat(li, kBout) += dx.colwise().sum();
    datt.noalias() = dx * mat(li, kWout).transpose();
    dqkv.setZero(c.qkv.rows(), c.qkv.cols());
    for (int b = 0; b < B; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
      for (int h = 0; h < H; ++h) {
        const auto q = c.qkv.block(r0, h * hd, L, hd);
        const auto k = c.qkv.block(r0, d + h * hd, L, hd);
        const auto v = c.qkv.block(r0, 2 * d + h * hd, L, hd);
        const auto p = c.probs.block((static_cast<Eigen::Index>(b) * H + h) * L, 0, L, L);
        const auto dout = datt.block(r0, h * hd, L, hd);
        dp.noalias() = dout * v.transpose();
        dqkv.block(r0, 2 * d + h * hd, L, hd).noalias() = p.transpose() * dout;
        ds.resize(L, L);
        for (int i = 0; i < L; ++i) {
          const T dot = (dp.row(i).head(i + 1).array() * p.row(i).head(i + 1).array()).sum();
          for (int j = 0; j < L; ++j) ds(i, j) = j <= i ? p(i, j) * (dp(i, j) - dot) * scale : T(0);
        }
        dqkv.block(r0, h * hd, L, hd).noalias() = ds * k;
        dqkv.block(r0, d + h * hd, L, hd).noalias() = ds.transpose() * q;
      }
    }
    gmat(li, kWqkv).noalias() += c.a.transpose() * dqkv;
    gmat(li, kBqkv) += dqkv.colwise().sum();
    da.noalias() = dqkv * mat(li, kWqkv).transpose();
    layer_norm_backward<T>(da, c.ln1_hat, c.ln1_rstd, pvec(li, kLn1G), gvec(li, kLn1G), gvec(li, kLn1B), dx);
  }

  auto dtok = gmat(SIZE_MAX, kTokEmb);
  auto dpos = gmat(SIZE_MAX, kPosEmb);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      const auto row = dx.row(static_cast<Eigen::Index>(b) * L + t);
      dtok.row(tokens.at(b, t)) += row;
      dpos.row(t) += row;
    }
  }
  return static_cast<T>(loss);
}

template class Transformer<float>;
template class Transformer<double>;

namespace {

template <typename T>
std::vector<double> softmax_impl(std::span<const T> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

std::vector<double> softmax_row(std::span<const float> logits) { return softmax_impl(logits); }
std::vector<double> softmax_row(std::span<const double> logits) { return softmax_impl(logits); }

}  // namespace metaoth::nn
