#pragma once

// Decoder-only GPT with learned positional embeddings, pre-norm blocks and a
// hand-written backward pass.
//
// Residual-stream capture point h_l is the output of block l (after the MLP
// residual add, before block l+1), l = 1..n_layers. Hooks see the same tensor.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaoth/game.hpp"

namespace metaoth::nn {

// Fixed base alignment keeps vectorized kernels, and so results, identical
// across allocations.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

class ShapeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int context_len = 59;
  int vocab = kVocabSize;
  int mlp_ratio = 4;
  double init_std = 0.02;
  std::uint64_t seed = 42;

  // Full-scale shape: 8 layers, 8 heads, d_model 512.
  static ModelConfig paper();
  // Desk-scale default: 4 layers, 4 heads, d_model 128.
  static ModelConfig desk() { return {}; }

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Row-major token block [batch x len].
struct TokenBatch {
  int batch = 0;
  int len = 0;
  std::vector<Token> tokens;

  TokenBatch() = default;
  TokenBatch(int b, int l) : batch(b), len(l), tokens(static_cast<std::size_t>(b) * l, kPadToken) {}
  Token& at(int b, int t) { return tokens[static_cast<std::size_t>(b) * len + t]; }
  Token at(int b, int t) const { return tokens[static_cast<std::size_t>(b) * len + t]; }
};

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // weight decay applies (matrices and embeddings)
};

// h_l for every layer, each [batch*len x d_model]; row b*len + t.
template <typename T>
struct ActivationCache {
  int batch = 0;
  int len = 0;
  std::vector<Mat<T>> layers;  // layers[l-1] holds h_l

  auto row(int layer, int b, int t) const { return layers[layer - 1].row(static_cast<Eigen::Index>(b) * len + t); }
};

// Called after each block with the residual stream [batch*len x d_model];
// may modify it in place. layer is 1-based.
template <typename T>
using ResidualHook = std::function<void(int layer, Eigen::Ref<Mat<T>> residual, int batch, int len)>;

template <typename T>
class Transformer {
 public:
  explicit Transformer(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const std::vector<ParamInfo>& layout() const { return layout_; }
  const ParamInfo& param_info(const std::string& name) const;
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // Logits [batch*len x vocab]. Throws ShapeMismatch for bad batches.
  Mat<T> forward(const TokenBatch& tokens, ActivationCache<T>* cache = nullptr,
                 const ResidualHook<T>& hook = {}) const;

  // Mean next-token cross-entropy over targets >= 0 (target -1 is ignored),
  // accumulating d loss / d params into grad (same layout as params()).
  T loss_and_grad(const TokenBatch& tokens, std::span<const int> targets, std::span<T> grad) const;

  T loss(const TokenBatch& tokens, std::span<const int> targets) const;

 private:
  struct Layer;
  struct Workspace;

  void build_layout();
  void init_weights();
  void check_batch(const TokenBatch& tokens) const;
  Eigen::Map<Mat<T>> mat(std::size_t layer, std::size_t slot);
  Eigen::Map<const Mat<T>> mat(std::size_t layer, std::size_t slot) const;
  void run(const TokenBatch& tokens, Workspace& ws, bool keep, ActivationCache<T>* cache,
           const ResidualHook<T>& hook) const;

  ModelConfig config_;
  std::vector<ParamInfo> layout_;
  std::vector<std::size_t> slot_index_;  // first layout entry of each layer block
  AlignedVector<T> params_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

// Softmax of one logits row, in double.
std::vector<double> softmax_row(std::span<const float> logits);
std::vector<double> softmax_row(std::span<const double> logits);

// Converts parameters between precisions (same config and layout).
template <typename To, typename From>
Transformer<To> convert(const Transformer<From>& model) {
  Transformer<To> out(model.config());
  auto src = model.params();
  auto dst = out.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

}  // namespace metaoth::nn
