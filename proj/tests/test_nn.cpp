#include <doctest.h>

#include <cmath>
#include <cstring>

#include "metaoth/datagen.hpp"
#include "metaoth/tensor_io.hpp"
#include "metaoth/train.hpp"
#include "test_util.hpp"

using namespace metaoth;
using namespace metaoth::nn;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.context_len = 12;
  c.seed = 5;
  return c;
}

TokenBatch random_batch(int b, int len, std::uint64_t seed) {
  TokenBatch batch(b, len);
  Rng rng(seed);
  for (auto& t : batch.tokens) t = static_cast<Token>(rng.below(kBoardTiles));
  return batch;
}

template <typename M>
bool bit_equal(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(*a.data()) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("forward pass basics") {
  const Transformer<float> model(tiny());
  TokenBatch pads(2, 5);
  const auto logits = model.forward(pads);
  CHECK(logits.rows() == 10);
  CHECK(logits.cols() == kVocabSize);
  CHECK(logits.allFinite());

  const auto batch = random_batch(3, 8, 1);
  const auto a = model.forward(batch);
  const auto b = model.forward(batch);
  CHECK(bit_equal(a, b));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const auto p = softmax_row(std::span<const float>(a.row(r).data(), a.cols()));
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  TokenBatch too_long(1, 13);
  CHECK_THROWS_AS(model.forward(too_long), ShapeMismatch);
}

TEST_CASE("causal mask") {
  const Transformer<float> model(tiny());
  auto batch = random_batch(1, 10, 2);
  const auto before = model.forward(batch);
  batch.at(0, 6) = static_cast<Token>((batch.at(0, 6) + 1) % kBoardTiles);
  const auto after = model.forward(batch);
  CHECK(bit_equal(Mat<float>(before.topRows(6)), Mat<float>(after.topRows(6))));
  CHECK_FALSE(bit_equal(Mat<float>(before.bottomRows(4)), Mat<float>(after.bottomRows(4))));
}

TEST_CASE("activation cache and hooks") {
  const Transformer<float> model(tiny());
  const auto batch = random_batch(2, 7, 3);
  ActivationCache<float> cache;
  const auto with_cache = model.forward(batch, &cache);
  CHECK(bit_equal(with_cache, model.forward(batch)));
  REQUIRE(cache.layers.size() == 2);
  CHECK(cache.layers[0].rows() == 14);
  CHECK(cache.row(2, 1, 3).size() == 16);

  const ResidualHook<float> zero = [](int, Eigen::Ref<Mat<float>> h, int, int) { h.array() += 0.0f; };
  CHECK(bit_equal(model.forward(batch, nullptr, zero), with_cache));

  // Editing the last layer at position 4 leaves earlier positions alone.
  const ResidualHook<float> poke = [](int layer, Eigen::Ref<Mat<float>> h, int b, int len) {
    if (layer != 2) return;
    for (int i = 0; i < b; ++i) h.row(i * len + 4).array() += 1.0f;
  };
  ActivationCache<float> hooked;
  const auto edited = model.forward(batch, &hooked, poke);
  for (int b = 0; b < 2; ++b) {
    for (int t = 0; t < 7; ++t) {
      const bool same = edited.row(b * 7 + t) == with_cache.row(b * 7 + t);
      CHECK(same == (t != 4));
    }
  }
  CHECK(hooked.row(2, 0, 4)(0) == doctest::Approx(cache.row(2, 0, 4)(0) + 1.0f));
}

TEST_CASE("gradient check in double precision") {
  const auto report = gradient_check(tiny(), 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.groups.size() > 5);
}

TEST_CASE("gradients follow the causal path") {
  const Transformer<double> model(convert<double>(Transformer<float>(tiny())));
  const auto batch = random_batch(1, 6, 4);
  std::vector<int> targets(6, -1);
  targets[2] = 7;
  std::vector<double> grad(model.num_params(), 0.0);
  model.loss_and_grad(batch, targets, grad);
  const auto& pos = model.param_info("pos_emb");
  const auto d = static_cast<std::size_t>(model.config().d_model);
  auto norm_of_row = [&](std::size_t row) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += std::abs(grad[pos.offset + row * d + j]);
    return s;
  };
  CHECK(norm_of_row(0) > 0.0);
  CHECK(norm_of_row(2) > 0.0);
  CHECK(norm_of_row(3) == 0.0);
  CHECK(norm_of_row(5) == 0.0);

  // Token 65 never appears, so its embedding row gets no gradient.
  const auto& tok = model.param_info("tok_emb");
  double unused = 0.0;
  for (std::size_t j = 0; j < d; ++j) unused += std::abs(grad[tok.offset + kPadToken * d + j]);
  CHECK(unused == 0.0);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.peak_lr = 2e-3;
  c.warmup_steps = 1000;
  CHECK(learning_rate(c, 500) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 1000) == doctest::Approx(2e-3));
  CHECK(learning_rate(c, 5000) == doctest::Approx(2e-3));
  c.warmup_steps = 0;
  CHECK(learning_rate(c, 1) == doctest::Approx(2e-3));
  CHECK(TrainConfig::paper().peak_lr == 5e-5);
  CHECK(TrainConfig::paper().batch_size == 4096);
}

TEST_CASE("AdamW step matches the closed form") {
  TrainConfig c;
  c.beta1 = 0.9;
  c.beta2 = 0.99;
  c.eps = 1e-8;
  c.weight_decay = 0.1;
  std::vector<ParamInfo> layout{{"w", {2}, 0, 2, true}, {"b", {1}, 2, 1, false}};
  AdamW opt(c, layout, 3);
  std::vector<float> p{1.0f, -2.0f, 0.5f};
  const std::vector<float> g{0.5f, -0.25f, 1.0f};
  const double lr = 0.01;
  opt.step(p, g, lr);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * sign(g).
  CHECK(p[0] == doctest::Approx(1.0 - lr * 0.1 * 1.0 - lr).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-2.0 + lr * 0.1 * 2.0 + lr).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.5 - lr).epsilon(1e-6));
  CHECK(opt.steps() == 1);
}

TEST_CASE("batch assembly pads and shifts") {
  const std::vector<SequenceRecord> recs{{GameId::Classic, {19, 18, 17}}, {GameId::Classic, {26}}};
  const std::vector<std::size_t> idx{0, 1};
  const auto b = assemble_batch(recs, idx, 59);
  CHECK(b.inputs.batch == 2);
  CHECK(b.inputs.len == 3);
  CHECK(b.inputs.at(0, 2) == 17);
  CHECK(b.inputs.at(1, 1) == kPadToken);
  const std::vector<int> expect{18, 17, -1, -1, -1, -1};
  CHECK(b.targets == expect);
}

TEST_CASE("config validation") {
  TrainConfig c = TrainConfig::desk();
  c.beta1 = 1.5;
  CHECK_THROWS_AS(c.validate(1000), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::desk().validate(0), std::invalid_argument);
  ModelConfig m;
  m.d_model = 130;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  CHECK(config_from_json(config_to_json(tiny())) == tiny());
}

TEST_CASE("short training beats the uniform predictor and is reproducible") {
  const std::vector<GameId> one{GameId::Classic};
  const auto data = generate_records(DatasetManifest::uniform_mix(one, 2000, 9));
  ModelConfig mc;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_model = 32;
  TrainConfig tc;
  tc.batch_size = 32;
  tc.peak_lr = 3e-3;
  tc.warmup_steps = 20;
  tc.max_steps = 150;
  tc.epochs = 10;
  tc.log_every = 50;

  Transformer<float> a(mc), b(mc);
  const auto ra = train(a, data, tc);
  const auto rb = train(b, data, tc);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(ra.log[i].loss == rb.log[i].loss);
  CHECK(ra.steps == 150);
  CHECK(ra.log.back().loss < std::log(64.0));
  CHECK(model_hash(a) == model_hash(b));
}

TEST_CASE("divergent training reports the step") {
  const std::vector<GameId> one{GameId::Classic};
  const auto data = generate_records(DatasetManifest::uniform_mix(one, 64, 1));
  ModelConfig mc = tiny();
  TrainConfig tc;
  tc.batch_size = 16;
  tc.peak_lr = 1e30;
  tc.warmup_steps = 0;
  tc.max_steps = 20;
  Transformer<float> m(mc);
  CHECK_THROWS_AS(train(m, data, tc), NonFiniteLoss);
}

TEST_CASE("checkpoint round trip is bit exact") {
  test::TempDir dir;
  const Transformer<float> model(tiny());
  CheckpointInfo info;
  info.step = 17;
  info.metrics["loss"] = 1.25;
  save_checkpoint(dir / "m.ckpt", model, info);
  CheckpointInfo back_info;
  const auto back = load_checkpoint(dir / "m.ckpt", &back_info);
  CHECK(back.config() == model.config());
  CHECK(back_info.step == 17);
  CHECK(std::memcmp(back.params().data(), model.params().data(), model.num_params() * sizeof(float)) == 0);
  const auto batch = random_batch(2, 9, 8);
  CHECK(bit_equal(back.forward(batch), model.forward(batch)));

  const auto bytes = test::read_bytes(dir / "m.ckpt");
  test::write_bytes(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), CorruptFile);
}

TEST_CASE("tensor files require a version") {
  test::TempDir dir;
  TensorFile f;
  const std::vector<double> v{1.0, 2.0};
  f.tensors.push_back(NamedTensor::f64("x", {2}, v));
  write_tensor_file(dir / "ok.bin", f);
  const auto back = read_tensor_file(dir / "ok.bin");
  CHECK(back.manifest["version"] == kTensorFileVersion);
  CHECK(back.get("x").as_double() == v);
  CHECK_THROWS_AS(back.get("y"), CorruptFile);

  auto bytes = test::read_bytes(dir / "ok.bin");
  const auto at = bytes.find("\"version\"");
  REQUIRE(at != std::string::npos);
  bytes[at + 1] = 'V';
  test::write_bytes(dir / "noversion.bin", bytes);
  CHECK_THROWS_AS(read_tensor_file(dir / "noversion.bin"), CorruptFile);
}
