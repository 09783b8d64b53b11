#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaoth/datagen.hpp"
#include "metaoth/oracle.hpp"
#include "metaoth/transformer.hpp"

namespace metaoth::nn {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::int64_t warmup_steps = 1000;
  double peak_lr = 5e-5;
  int batch_size = 4096;
  int epochs = 250;
  std::int64_t max_steps = -1;  // < 0: run all epochs
  std::uint64_t seed = 42;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::int64_t eval_every = 0;        // 0 disables periodic alpha evaluation
  std::int64_t log_every = 50;

  // Optimizer and schedule as published for the 8x512 models.
  static TrainConfig paper() { return {}; }
  // Desk-scale recipe used for the 4x128 acceptance run.
  static TrainConfig desk();

  std::int64_t total_steps(std::size_t n_sequences) const;
  void validate(std::size_t n_sequences) const;
};

// Linear warmup to peak_lr over warmup_steps, then constant. step is 1-based.
double learning_rate(const TrainConfig& config, std::int64_t step);

// Decoupled weight decay (applied only to parameters flagged for decay).
class AdamW {
 public:
  AdamW(const TrainConfig& config, const std::vector<ParamInfo>& layout, std::size_t n_params);
  void step(std::span<float> params, std::span<const float> grad, double lr);
  std::int64_t steps() const { return t_; }

 private:
  TrainConfig config_;
  AlignedVector<float> m_, v_;
  std::vector<unsigned char> decay_;
  std::int64_t t_ = 0;
};

// Right-padded inputs and shifted targets: position t sees tokens[0..t] and
// predicts tokens[t+1]; positions without a successor carry target -1.
struct AssembledBatch {
  TokenBatch inputs;
  std::vector<int> targets;
};

AssembledBatch assemble_batch(std::span<const SequenceRecord> records, std::span<const std::size_t> indices,
                              int context_len);

struct TrainLogEntry {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double eval_alpha = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_log;
  // Held-out alpha; called every eval_every steps and at the end.
  std::function<double(const Transformer<float>&)> evaluate;
  // Called every checkpoint_every steps and at the end.
  std::function<void(const Transformer<float>&, std::int64_t step, const std::vector<TrainLogEntry>&)> on_checkpoint;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::int64_t steps = 0;
};

// Next-token training on all non-pad positions. Throws NonFiniteLoss.
TrainResult train(Transformer<float>& model, std::span<const SequenceRecord> data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Per-position alpha against the exact mixture ground truth.
AlphaReport evaluate_alpha(const Transformer<float>& model, std::span<const SequenceRecord> data,
                           std::span<const GameSpec> specs, std::span<const double> priors, int batch_size = 128);

// Next-token probabilities (over the 66-token vocabulary) for each input position.
std::vector<std::vector<double>> next_token_probs(const Transformer<float>& model, const TokenBatch& batch);

struct CheckpointInfo {
  std::int64_t step = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& config);

// FNV-1a over the parameter bytes, as 16 hex digits.
std::string model_hash(const Transformer<float>& model);

void save_checkpoint(const std::filesystem::path& path, const Transformer<float>& model, const CheckpointInfo& info);
Transformer<float> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

struct GradientGroupError {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_grad = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientGroupError> groups;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Analytic gradients vs central differences in double precision on a
// deterministic random batch. Relative error per element is
// |a - n| / max(|a|, |n|, floor) with floor = 1e-6.
GradientCheckReport gradient_check(const ModelConfig& config, double tolerance, double step = 1e-4,
                                   int batch = 2, int len = 6);

}  // namespace metaoth::nn
