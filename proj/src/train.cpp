#include "metaoth/train.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "metaoth/rng.hpp"
#include "metaoth/tensor_io.hpp"

namespace metaoth::nn {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 128;
  c.peak_lr = 1e-3;
  c.warmup_steps = 500;
  c.epochs = 10;
  return c;
}

std::int64_t TrainConfig::total_steps(std::size_t n_sequences) const {
  const auto per_epoch = static_cast<std::int64_t>((n_sequences + batch_size - 1) / batch_size);
  const std::int64_t all = per_epoch * epochs;
  return max_steps >= 0 ? std::min(all, max_steps) : all;
}

void TrainConfig::validate(std::size_t n_sequences) const {
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw std::invalid_argument("betas must be in (0, 1)");
  if (!(weight_decay >= 0) || !(peak_lr > 0) || !(eps > 0)) throw std::invalid_argument("bad optimizer settings");
  if (batch_size <= 0 || epochs <= 0 || warmup_steps < 0) throw std::invalid_argument("bad schedule settings");
  if (n_sequences == 0) throw std::invalid_argument("empty training set");
  if (warmup_steps > total_steps(n_sequences)) throw std::invalid_argument("warmup_steps exceeds total steps");
}

double learning_rate(const TrainConfig& config, std::int64_t step) {
  if (config.warmup_steps <= 0 || step >= config.warmup_steps) return config.peak_lr;
  return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
}

AdamW::AdamW(const TrainConfig& config, const std::vector<ParamInfo>& layout, std::size_t n_params)
    : config_(config), m_(n_params, 0.0f), v_(n_params, 0.0f), decay_(n_params, 0) {
  for (const auto& p : layout) {
    if (p.decay) std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(p.offset), p.size, 1);
  }
}

void AdamW::step(std::span<float> params, std::span<const float> grad, double lr) {
  ++t_;
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(config_.eps);
  const auto decay = static_cast<float>(lr * config_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grad[i];
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
    if (decay_[i]) params[i] -= decay * params[i];
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) * inv_sqrt_bc2 + eps);
  }
}

AssembledBatch assemble_batch(std::span<const SequenceRecord> records, std::span<const std::size_t> indices,
                              int context_len) {
  int len = 1;
  for (std::size_t idx : indices) len = std::max(len, std::min(records[idx].length(), context_len));
  AssembledBatch out{TokenBatch(static_cast<int>(indices.size()), len), {}};
  out.targets.assign(out.inputs.tokens.size(), -1);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& toks = records[indices[b]].tokens;
    const int n = std::min(static_cast<int>(toks.size()), len);
    for (int t = 0; t < n; ++t) {
      out.inputs.at(static_cast<int>(b), t) = toks[t];
      if (t + 1 < static_cast<int>(toks.size())) out.targets[b * len + t] = toks[t + 1];
    }
  }
  return out;
}

TrainResult train(Transformer<float>& model, std::span<const SequenceRecord> data, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate(data.size());
  const std::int64_t total = config.total_steps(data.size());
  AdamW opt(config, model.layout(), model.num_params());
  AlignedVector<float> grad(model.num_params());
  std::vector<std::size_t> order(data.size());
  Rng rng(derive_seed(config.seed, 0x7a11));
  TrainResult result;

  double loss_acc = 0.0;
  std::int64_t loss_n = 0;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs && step < total; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < order.size() && step < total; begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const auto batch = assemble_batch(data, std::span(order).subspan(begin, end - begin),
                                        model.config().context_len);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const float loss = model.loss_and_grad(batch.inputs, batch.targets, grad);
      ++step;
      const double lr = learning_rate(config, step);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss " << loss << " at step " << step << " (epoch " << epoch << ", lr " << lr << ")";
        throw NonFiniteLoss(msg.str());
      }
      opt.step(model.params(), grad, lr);
      loss_acc += loss;
      ++loss_n;

      const bool last = step == total;
      const bool do_log = last || (config.log_every > 0 && step % config.log_every == 0);
      const bool do_eval = hooks.evaluate && (last || (config.eval_every > 0 && step % config.eval_every == 0));
      if (do_log || do_eval) {
        TrainLogEntry e{step, epoch, lr, loss_acc / static_cast<double>(loss_n)};
        if (do_eval) e.eval_alpha = hooks.evaluate(model);
        loss_acc = 0.0;
        loss_n = 0;
        result.log.push_back(e);
        if (hooks.on_log) hooks.on_log(e);
      }
      if (hooks.on_checkpoint && (last || (config.checkpoint_every > 0 && step % config.checkpoint_every == 0))) {
        hooks.on_checkpoint(model, step, result.log);
      }
    }
  }
  result.steps = step;
  return result;
}

std::vector<std::vector<double>> next_token_probs(const Transformer<float>& model, const TokenBatch& batch) {
  const Mat<float> logits = model.forward(batch);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = softmax_row(std::span<const float>(logits.row(i).data(), logits.cols()));
  }
  return out;
}

AlphaReport evaluate_alpha(const Transformer<float>& model, std::span<const SequenceRecord> data,
                           std::span<const GameSpec> specs, std::span<const double> priors, int batch_size) {
  AlphaReport report;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto batch = assemble_batch(data, idx, model.config().context_len);
    const auto probs = next_token_probs(model, batch.inputs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto& rec = data[idx[b]];
      const auto gt = ground_truth_trace(specs, priors, rec.tokens);
      for (int t = 0; t < batch.inputs.len; ++t) {
        if (batch.targets[b * batch.inputs.len + t] < 0) continue;
        const auto& dist = gt[static_cast<std::size_t>(t) + 1];
        if (!dist) continue;
        report.add(rec.game, t + 1, alpha_score(*dist, probs[b * batch.inputs.len + t]));
      }
    }
  }
  return report;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"d_model", c.d_model},
          {"context_len", c.context_len}, {"vocab", c.vocab}, {"mlp_ratio", c.mlp_ratio},
          {"init_std", c.init_std}, {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.context_len = j.at("context_len").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.mlp_ratio = j.value("mlp_ratio", 4);
  c.init_std = j.value("init_std", 0.02);
  c.seed = j.value("seed", std::uint64_t{42});
  return c;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps}, {"peak_lr", c.peak_lr}, {"batch_size", c.batch_size},
          {"epochs", c.epochs}, {"max_steps", c.max_steps}, {"seed", c.seed}};
}

std::string model_hash(const Transformer<float>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto params = model.params();
  const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
  for (std::size_t i = 0; i < params.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Transformer<float>& model, const CheckpointInfo& info) {
  TensorFile file;
  file.manifest["version"] = kTensorFileVersion;
  file.manifest["kind"] = "checkpoint";
  file.manifest["config"] = config_to_json(model.config());
  file.manifest["step"] = info.step;
  file.manifest["metrics"] = info.metrics;
  file.manifest["extra"] = info.extra;
  const auto params = model.params();
  for (const auto& p : model.layout()) {
    std::vector<std::uint64_t> shape(p.shape.begin(), p.shape.end());
    file.tensors.push_back(NamedTensor::f32(p.name, shape, params.subspan(p.offset, p.size)));
  }
  write_tensor_file(path, file);
}

Transformer<float> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  const TensorFile file = read_tensor_file(path);
  if (file.manifest.value("kind", "") != "checkpoint") throw CorruptFile(path.string() + " is not a checkpoint");
  Transformer<float> model(config_from_json(file.manifest.at("config")));
  auto params = model.params();
  for (const auto& p : model.layout()) {
    const auto& t = file.get(p.name);
    if (!t.is_f32() || t.numel() != p.size ||
        !std::equal(t.shape.begin(), t.shape.end(), p.shape.begin(), p.shape.end(),
                    [](std::uint64_t a, int b) { return a == static_cast<std::uint64_t>(b); })) {
      throw CorruptFile("tensor " + p.name + " has the wrong shape or dtype");
    }
    const auto& v = std::get<std::vector<float>>(t.data);
    std::copy(v.begin(), v.end(), params.begin() + static_cast<std::ptrdiff_t>(p.offset));
  }
  if (info) {
    info->step = file.manifest.value("step", std::int64_t{0});
    info->metrics = file.manifest.value("metrics", nlohmann::json::object());
    info->extra = file.manifest.value("extra", nlohmann::json::object());
  }
  return model;
}

GradientCheckReport gradient_check(const ModelConfig& config, double tolerance, double step, int batch, int len) {
  Transformer<double> model(config);
  Rng rng(derive_seed(config.seed, 0x9c));
  // Perturb gains and biases away from their trivial init so every path is exercised.
  for (const auto& p : model.layout()) {
    if (p.shape.size() == 1) {
      for (std::size_t i = 0; i < p.size; ++i) model.params()[p.offset + i] += 0.1 * rng.normal();
    }
  }
  TokenBatch tokens(batch, len);
  std::vector<int> targets(tokens.tokens.size());
  for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
    tokens.tokens[i] = static_cast<Token>(rng.below(kBoardTiles));
    targets[i] = static_cast<int>(rng.below(kBoardTiles));
  }
  AlignedVector<double> grad(model.num_params(), 0.0);
  model.loss_and_grad(tokens, targets, grad);

  GradientCheckReport report;
  constexpr double kFloor = 1e-6;
  auto params = model.params();
  for (const auto& p : model.layout()) {
    GradientGroupError g{p.name};
    for (std::size_t i = 0; i < p.size; ++i) {
      const std::size_t k = p.offset + i;
      const double orig = params[k];
      params[k] = orig + step;
      const double up = model.loss(tokens, targets);
      params[k] = orig - step;
      const double down = model.loss(tokens, targets);
      params[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double abs_err = std::abs(numeric - grad[k]);
      const double rel = abs_err / std::max({std::abs(numeric), std::abs(grad[k]), kFloor});
      g.max_abs_error = std::max(g.max_abs_error, abs_err);
      g.max_rel_error = std::max(g.max_rel_error, rel);
      g.max_grad = std::max(g.max_grad, std::abs(grad[k]));
    }
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.groups.push_back(g);
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace metaoth::nn
