// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: acceptance [c01 ... c10]   (no argument runs everything)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "metaoth/datagen.hpp"
#include "metaoth/geometry.hpp"
#include "metaoth/interventions.hpp"
#include "metaoth/oracle.hpp"
#include "metaoth/probes.hpp"
#include "metaoth/train.hpp"
#include "planted.hpp"
#include "reference_othello.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace metaoth;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::vector<SequenceRecord> records_of(GameId g, std::size_t n, std::uint64_t seed) {
  const std::vector<GameId> one{g};
  return generate_records(DatasetManifest::uniform_mix(one, n, seed));
}

template <typename M>
bool bit_equal(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(*a.data()) * static_cast<std::size_t>(a.size())) == 0;
}

// ---------------------------------------------------------------------------

Outcome c01_engine_oracle() {
  const Timer timer;
  const auto spec = make_spec(GameId::Classic);
  Rng rng(2024);
  int checked = 0, agree = 0;
  while (checked < 10000) {
    ref::Position p = ref::classic_start();
    Board b = initial_board(spec);
    const int stop = 1 + static_cast<int>(rng.below(60));
    for (int ply = 0; ply < stop; ++ply) {
      auto legal = ref::legal_squares(p);
      if (legal.empty()) {
        p = ref::pass(p);
        if (ref::legal_squares(p).empty()) break;
        b = apply_move(spec, b, Move::pass());
        continue;
      }
      const int s = legal[rng.below(legal.size())];
      p = ref::play(p, s);
      b = apply_move(spec, b, Move::place(s));
    }
    // Compare legality and every successor at this reachable position.
    bool same = true;
    for (int i = 0; i < kBoardTiles; ++i) same &= static_cast<int>(b.at(i)) == p.cells[i];
    const auto legal = ref::legal_squares(p);
    std::uint64_t mask = 0;
    for (int s : legal) mask |= 1ULL << s;
    const auto v = valid_moves(spec, b);
    same &= v.placements() == mask;
    same &= v.has_pass() == (legal.empty() && !ref::legal_squares(ref::pass(p)).empty());
    for (int s : legal) {
      const auto q = ref::play(p, s);
      const auto c = apply_move(spec, b, Move::place(s));
      for (int i = 0; i < kBoardTiles; ++i) same &= static_cast<int>(c.at(i)) == q.cells[i];
    }
    agree += same;
    ++checked;
  }
  const double secs = timer.seconds();
  return {agree == checked && secs < 60.0, std::to_string(agree) + "/" + std::to_string(checked) +
                                               " positions agree with the array reference in " + num(secs, 3) + " s"};
}

Outcome c02_variant_semantics() {
  const auto classic = make_spec(GameId::Classic);
  const auto nomid = make_spec(GameId::NoMidFlip);
  const auto del = make_spec(GameId::DelFlank);

  // Per move: from a shared board, the two rules differ exactly on middle
  // tiles of runs of length >= 3.
  std::uint64_t moves = 0, exact = 0;
  // Per sequence: without long runs the two replays are identical.
  std::uint64_t short_only = 0, identical = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    // Lengths spread over 1..60 so that many sequences stay free of long runs.
    const auto rec = sample_sequence(nomid, derive_seed(77, seed), 1 + static_cast<int>(seed % kMaxPlacements));
    GameState a(classic), b(nomid);
    bool long_run = false, same = true, legal = true;
    for (Token t : rec.tokens) {
      const Board& shared = b.board();
      std::uint64_t middles = 0;
      for (const auto& run : flanked_runs(shared, t)) {
        if (run.size() >= 3) long_run = true;
        for (std::size_t k = 1; k + 1 < run.size(); ++k) middles |= 1ULL << run[k];
      }
      const Board c = apply_move(classic, shared, Move::place(t));
      const Board n = apply_move(nomid, shared, Move::place(t));
      std::uint64_t diff = 0;
      for (int i = 0; i < kBoardTiles; ++i) diff |= static_cast<std::uint64_t>(c.at(i) != n.at(i)) << i;
      ++moves;
      exact += diff == middles;
      if (legal) legal = a.play_token(t);
      b.play_token(t);
      if (legal) same &= a.board() == b.board();
    }
    if (!long_run) {
      ++short_only;
      identical += legal && same;
    }
  }

  std::uint64_t non_monotone = 0;
  const std::uint64_t n_del = 10000;
  for (std::uint64_t seed = 0; seed < n_del; ++seed) {
    const auto rec = sample_sequence(del, derive_seed(78, seed));
    GameState st(del);
    int prev = st.board().occupied_count();
    bool drop = false;
    for (Token t : rec.tokens) {
      st.play_token(t);
      const int now = st.board().occupied_count();
      drop |= now < prev;
      prev = now;
    }
    non_monotone += drop;
  }
  const double rate = static_cast<double>(non_monotone) / static_cast<double>(n_del);
  const bool pass = exact == moves && identical == short_only && short_only > 0 && rate >= 0.01;
  return {pass, "middle-tile diff exact on " + std::to_string(exact) + "/" + std::to_string(moves) +
                    " moves; identical replays on " + std::to_string(identical) + "/" + std::to_string(short_only) +
                    " short-run sequences; delflank non-monotone in " + num(100.0 * rate, 3) + "% of games"};
}

Outcome c03_oracle_exactness() {
  const std::vector<GameId> games{GameId::Classic, GameId::NoMidFlip, GameId::DelFlank, GameId::Iago};
  const auto m = DatasetManifest::uniform_mix(games, 2000, 11);
  const auto specs = m.specs();
  const auto priors = m.priors();
  double worst = 0.0;
  for (const auto& r : generate_records(m)) {
    for (const auto& p : game_posterior(specs, priors, r.tokens).posterior) {
      worst = std::max(worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    }
  }

  const std::vector<double> half{0.5, 0.5};
  const std::vector<double> ll{-std::log(4.0 * 3.0), -std::log(8.0 * 6.0)};
  const double post = mixture_posterior(half, ll)[0];

  GroundTruthDistribution gt;
  for (int t : {19, 26, 37, 44}) gt.probs[t] = 0.25;
  std::vector<double> q(kVocabSize, 0.0);
  for (int t : {19, 26, 37, 44, 0, 1, 2, 3}) q[t] = 0.125;
  const double a = alpha_score(gt, q);
  std::vector<double> exact(gt.probs.begin(), gt.probs.end());
  exact.resize(kVocabSize, 0.0);
  std::vector<double> u(kVocabSize, 0.0);
  for (int t = 0; t < kBoardTiles; ++t) u[t] = 1.0 / kBoardTiles;
  const double a_gt = alpha_score(gt, exact);
  const double a_u = alpha_score(gt, u);

  const bool pass = worst <= 1e-12 && std::abs(post - 0.8) <= 1e-15 && std::abs(a - 0.75) <= 1e-15 &&
                    std::abs(a_gt - 1.0) <= 1e-12 && std::abs(a_u) <= 1e-12;
  std::ostringstream d;
  d << std::setprecision(17) << "max |sum - 1| " << worst << "; posterior " << post << "; alpha " << a
    << "; alpha(P_GT) " << a_gt << "; alpha(U) " << a_u;
  return {pass, d.str()};
}

Outcome c04_procrustes() {
  const geometry::Matrix w = [] {
    Rng rng(1);
    geometry::Matrix m(192, 512);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  }();
  const geometry::Matrix r = geometry::random_orthogonal(512, 2);
  const auto planted = geometry::procrustes_align(w * r, w);
  const double worst = *std::min_element(planted.post.values.begin(), planted.post.values.end());

  const auto base = geometry::gaussian_baseline(192, 512, 20, 42);
  const bool planted_ok = worst >= 1.0 - 1e-9;
  const bool aligned_ok = std::abs(base.aligned.mean - 0.68) <= 0.03;
  const bool raw_ok = std::abs(base.raw.mean) <= 0.05;
  return {planted_ok && aligned_ok && raw_ok,
          "planted min cosine " + num(worst, 12) + (planted_ok ? " ok" : " FAIL") + "; aligned random baseline " +
              num(base.aligned.mean) + " +/- " + num(base.aligned.ci95, 2) + " (target 0.68 +/- 0.03" +
              (aligned_ok ? ") ok" : ") FAIL") + "; raw random " + num(base.raw.mean, 3) + (raw_ok ? " ok" : " FAIL")};
}

Outcome c05_transformer() {
  const Timer timer;
  nn::ModelConfig tiny;
  tiny.n_layers = 2;
  tiny.n_heads = 2;
  tiny.d_model = 16;
  tiny.context_len = 12;
  tiny.seed = 5;
  const auto grad = nn::gradient_check(tiny, 1e-4);

  const nn::Transformer<float> model(tiny);
  nn::TokenBatch batch(2, 10);
  Rng rng(3);
  for (auto& t : batch.tokens) t = static_cast<Token>(rng.below(kBoardTiles));
  const auto before = model.forward(batch);
  nn::TokenBatch changed = batch;
  changed.at(0, 7) = static_cast<Token>((changed.at(0, 7) + 1) % kBoardTiles);
  const auto after = model.forward(changed);
  bool causal = true;
  for (int t = 0; t < 7; ++t) causal &= after.row(t) == before.row(t);
  causal &= after.row(7) != before.row(7);

  nn::ActivationCache<float> cache;
  const bool cache_same = bit_equal(model.forward(batch, &cache), before);

  test::TempDir dir;
  nn::save_checkpoint(dir / "m.ckpt", model, {});
  const auto back = nn::load_checkpoint(dir / "m.ckpt");
  const bool round_trip =
      std::memcmp(back.params().data(), model.params().data(), model.num_params() * sizeof(float)) == 0 &&
      bit_equal(back.forward(batch), before) && back.config() == model.config();

  const double secs = timer.seconds();
  return {grad.max_rel_error < 1e-4 && causal && cache_same && round_trip && secs < 300.0,
          "grad max rel error " + num(grad.max_rel_error, 3) + "; causal " + (causal ? "ok" : "FAIL") + "; cache " +
              (cache_same ? "ok" : "FAIL") + "; checkpoint " + (round_trip ? "ok" : "FAIL") + "; " + num(secs, 3) +
              " s"};
}

// Desk-scale training. Reuses a finished checkpoint in METAOTH_DESK_DIR when
// its recipe matches, otherwise trains one there.
Outcome c06_desk_training() {
  const char* env = std::getenv("METAOTH_DESK_DIR");
  const fs::path dir = env ? env : "desk";
  fs::create_directories(dir);
  const fs::path ckpt = dir / "model.ckpt";
  const auto expected_mc = nn::ModelConfig::desk();
  const std::size_t n_train = 200000;

  std::optional<nn::Transformer<float>> model;
  nn::CheckpointInfo info;
  if (fs::exists(ckpt)) {
    auto m = nn::load_checkpoint(ckpt, &info);
    const auto& ds = info.extra.value("dataset", nlohmann::json::object());
    const bool finished = info.extra.contains("total_steps") && info.extra["total_steps"] == info.step;
    const bool recipe = m.config().n_layers == 4 && m.config().d_model == 128 && ds.value("count", 0ULL) == n_train &&
                        ds.dump().find("classic") != std::string::npos && ds.dump().find("nomidflip") == std::string::npos;
    if (finished && recipe) {
      model.emplace(std::move(m));
    } else {
      std::cout << "c06: ignoring " << ckpt << " (step " << info.step << ", recipe " << (recipe ? "ok" : "mismatch")
                << ")\n";
    }
  }
  if (!model) {
    const std::vector<GameId> one{GameId::Classic};
    const auto data = generate_records(DatasetManifest::uniform_mix(one, n_train, 1));
    nn::Transformer<float> m(expected_mc);
    const auto tc = nn::TrainConfig::desk();
    const Timer timer;
    nn::TrainHooks hooks;
    hooks.on_log = [](const nn::TrainLogEntry& e) {
      if (e.step % 1000 == 0) std::cout << "c06: step " << e.step << " loss " << num(e.loss) << std::endl;
    };
    const auto result = nn::train(m, data, tc, hooks);
    info = {};
    info.step = result.steps;
    info.metrics["elapsed_s"] = timer.seconds();
    info.extra["total_steps"] = result.steps;
    info.extra["dataset"] = nlohmann::json::parse(manifest_to_json(DatasetManifest::uniform_mix(one, n_train, 1)));
    nn::save_checkpoint(ckpt, m, info);
    model.emplace(std::move(m));
  }

  // Held-out sequences come from a seed the training set never used.
  const auto held = records_of(GameId::Classic, 1000, 9001);
  const std::vector<GameSpec> specs{make_spec(GameId::Classic)};
  const std::vector<double> one{1.0};
  const auto report = nn::evaluate_alpha(*model, held, specs, one).overall();
  const double hours = info.metrics.value("elapsed_s", std::nan("")) / 3600.0;
  const bool in_time = !(hours > 12.0);
  return {report.mean >= 0.8 && in_time,
          "held-out alpha " + num(report.mean) + " +/- " + num(report.ci95, 2) + " over " + std::to_string(report.n) +
              " positions (target >= 0.8); " + std::to_string(info.step) + " steps in " + num(hours, 3) +
              " h on CPU (limit 12 h)"};
}

Outcome c07_probe_pipeline() {
  probes::ProbeTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 15;
  cfg.batch_size = 128;
  const auto data = test::planted_boards(500, 10, 512, 0.05, 1);
  const auto probe = probes::train_board_probe(data.activations, data.labels, data.rows, 1, cfg);
  const auto fresh = test::planted_boards(100, 10, 512, 0.05, 1);
  const double acc =
      probes::board_accuracy(probes::probe_board(probe, fresh.activations, 1), fresh.labels).accuracy();

  auto shuffled = data.labels;
  Rng rng(3);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  const auto null_probe = probes::train_board_probe(data.activations, shuffled, data.rows, 1, cfg);
  const auto eval = test::planted_boards(100, 10, 512, 0.05, 9);
  const double null_acc =
      probes::board_accuracy(probes::probe_board(null_probe, eval.activations, 1), eval.labels).accuracy();
  const double prior = test::prior_baseline(shuffled, eval.labels);
  return {acc >= 0.999 && std::abs(null_acc - prior) <= 0.02,
          "planted tile accuracy " + num(acc, 6) + " (target >= 0.999); shuffled " + num(null_acc) + " vs prior " +
              num(prior) + " (tolerance 0.02)"};
}

Outcome c08_interventions() {
  nn::ModelConfig mc;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_model = 32;
  mc.seed = 3;
  nn::Transformer<float> model(mc);
  nn::TrainConfig tc;
  tc.batch_size = 32;
  tc.peak_lr = 3e-3;
  tc.warmup_steps = 20;
  tc.max_steps = 300;
  nn::train(model, records_of(GameId::Classic, 4000, 21), tc);
  const auto classic = make_spec(GameId::Classic);
  const auto iago = make_spec(GameId::Iago);

  // gamma = 0: the edit hook leaves logits bit-identical to a plain forward.
  probes::ProbeWeights probe;
  probe.layer = 2;
  probe.weights = geometry::random_orthogonal(probes::kProbeRows, 5).leftCols(mc.d_model);
  probe.biases = probes::Vector::Zero(probes::kProbeRows);
  for (auto& t : probe.observed) t.fill(true);
  const auto recs = records_of(GameId::Classic, 50, 22);
  bool null_exact = true;
  for (const auto& c : interventions::sample_edit_cases(recs, classic, 50, 0.0, 1)) {
    const auto prefix = std::span(recs[c.sequence].tokens).first(static_cast<std::size_t>(c.prefix_len));
    nn::TokenBatch b(1, c.prefix_len);
    std::copy(prefix.begin(), prefix.end(), b.tokens.begin());
    const Eigen::RowVectorXf zero = (0.0 * probe.row(c.edit.tile, c.edit.target)).cast<float>();
    const nn::ResidualHook<float> hook = [&](int l, Eigen::Ref<nn::Mat<float>> h, int, int len) {
      if (l == 2) h.row(len - 1) += zero;
    };
    null_exact &= bit_equal(model.forward(b, nullptr, hook), model.forward(b));
    const interventions::LayerProbes probes{{2, probe}};
    const auto x = interventions::board_intervene(model, probes, classic, prefix, c.edit);
    const auto y = interventions::board_intervene(model, probes, classic, prefix, c.edit);
    null_exact &= x.false_positives == y.false_positives && x.false_negatives == y.false_negatives &&
                  x.probe_before == x.probe_after;
  }

  // Planted: unembedding absorbs a coordinate permutation and the Iago map.
  auto params = model.params();
  const auto& g = model.param_info("ln_f.g");
  const auto& bb = model.param_info("ln_f.b");
  for (int i = 0; i < mc.d_model; ++i) {
    params[g.offset + i] = 1.0f;
    params[bb.offset + i] = 0.0f;
  }
  Rng rng(7);
  std::vector<int> perm(static_cast<std::size_t>(mc.d_model));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  geometry::Matrix omega = geometry::Matrix::Zero(mc.d_model, mc.d_model);
  for (int i = 0; i < mc.d_model; ++i) omega(i, perm[i]) = 1.0;
  nn::Transformer<float> planted = model;
  auto out = planted.params();
  const auto& u = model.param_info("unembed");
  for (int i = 0; i < mc.d_model; ++i) {
    for (int t = 0; t < mc.vocab; ++t) {
      const int mapped = t < kBoardTiles ? iago.syntax.to_token(t) : t;
      out[u.offset + static_cast<std::size_t>(perm[i]) * mc.vocab + mapped] =
          params[u.offset + static_cast<std::size_t>(i) * mc.vocab + t];
    }
  }
  // Omega is re-estimated from paired activations, as the real pipeline does.
  const auto fit = geometry::fit_global_rotation(
      [&] {
        Rng r(8);
        geometry::Matrix s(400, mc.d_model);
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = r.normal();
        return s;
      }(),
      [&] {
        Rng r(8);
        geometry::Matrix s(400, mc.d_model);
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = r.normal();
        return geometry::Matrix(s * omega);
      }());
  const auto eval = records_of(GameId::Classic, 100, 23);
  const auto target = interventions::rotation_intervene(model, omega, eval, classic, classic, 0).overall(-50.0);
  const auto recovered =
      interventions::rotation_intervene(planted, fit.rotation, eval, classic, iago, mc.n_layers).overall(-50.0);
  const double fit_error = (fit.rotation - omega).norm();
  const bool recovers = std::abs(recovered.mean - target.mean) <= 1e-3;

  const auto none = interventions::rotation_intervene(model, omega, eval, classic, iago, 0).overall();
  return {null_exact && recovers && none.mean < 0.0,
          std::string("gamma=0 ") + (null_exact ? "bit-exact" : "MISMATCH") + "; planted rotation alpha " +
              num(recovered.mean) + " vs target " + num(target.mean) + " (omega fit error " + num(fit_error, 2) +
              "); classic-vs-iago without intervention alpha " + num(none.mean) + " (target < 0)"};
}

Outcome c09_ambiguity_decay() {
  const Timer timer;
  const auto curve = ambiguity_counts(make_spec(GameId::DelFlank), make_spec(GameId::Classic), 1000000, 42, 1);
  const double at5 = static_cast<double>(curve.counts.at(5));
  const double at10 = static_cast<double>(curve.counts.at(10));
  const double ratio = at10 > 0.0 ? at5 / at10 : std::numeric_limits<double>::infinity();
  return {at5 > 0.0 && ratio >= 100.0,
          "ambiguous prefixes per 1M: " + num(at5, 7) + " at move 5, " + num(at10, 7) + " at move 10 (ratio " +
              num(ratio, 4) + ", target >= 100; reference per 20M about 19500 and 19, i.e. about " +
              num(19500.0 / 20.0, 4) + " and " + num(19.0 / 20.0, 3) + " per 1M); " + num(timer.seconds(), 3) + " s"};
}

// Full-scale findings are reported, not gated: runs the report pipeline on a
// small model and checks that each artifact carries its reference header.
Outcome c10_reports() {
  test::TempDir dir;
  const fs::path cli = METAOTH_CLI_PATH;
  std::vector<std::string> failures;
  auto run = [&](const std::string& args) {
    const std::string cmd = "cd '" + dir.path().string() + "' && '" + cli.string() + "' " + args + " > log.txt 2>&1";
    if (std::system(cmd.c_str()) != 0) failures.push_back(args.substr(0, args.find(" --")));
  };
  run("gen --game classic --game nomidflip --n 600 --seed 3 --out mix.mob");
  run("gen --game classic --n 300 --seed 4 --out classic.mob");
  run("gen --game nomidflip --n 300 --seed 5 --out nomid.mob");
  run("train --data mix.mob --out m.ckpt --layers 2 --heads 2 --d-model 32 --batch 32 --warmup 10 --lr 3e-3 "
      "--max-steps 60");
  run("probe board --model m.ckpt --data classic.mob --game classic --n 200 --epochs 3 --lr 1e-2 --out-dir p");
  run("probe board --model m.ckpt --data nomid.mob --game nomidflip --n 200 --epochs 3 --lr 1e-2 --out-dir p");
  run("probe game --model m.ckpt --data mix.mob --n 200 --epochs 3 --lr 1e-2 --out-dir p");
  run("analyze procrustes --probes p/board_classic_L2.pb p/board_nomidflip_L2.pb --replicates 3 --out procrustes.csv");
  run("analyze angles --probes p/board_classic_L1.pb p/board_nomidflip_L1.pb p/board_classic_L2.pb "
      "p/board_nomidflip_L2.pb --game-a classic --game-b nomidflip --n 2000 --out angles.csv");
  run("intervene board --model m.ckpt --data nomid.mob --game nomidflip --probes p/board_nomidflip_L1.pb "
      "p/board_nomidflip_L2.pb --cross-probes p/board_classic_L1.pb p/board_classic_L2.pb --n 30 --out board.csv");
  run("intervene steer --model m.ckpt --data classic.mob --game-probes p/game_L1.pb p/game_L2.pb --source classic "
      "--target nomidflip --n 30 --out steer.csv");

  std::string detail;
  for (const char* name : {"procrustes.csv", "angles.csv", "board.csv", "steer.csv"}) {
    std::ifstream in(dir / name);
    std::string line;
    bool cited = false;
    while (std::getline(in, line) && line.rfind('#', 0) == 0) cited |= line.find("reference") != std::string::npos;
    if (!cited) failures.push_back(std::string(name) + " lacks a reference header");
    detail += std::string(name) + (cited ? " ok; " : " missing; ");
  }
  if (!failures.empty()) {
    std::ifstream log(dir / "log.txt");
    std::cout << log.rdbuf() << '\n';
    for (const auto& f : failures) detail += "failed: " + f + "; ";
  }
  return {failures.empty(), detail + "values are informative only"};
}

const std::map<std::string, std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::map<std::string, std::pair<std::string, std::function<Outcome()>>> all{
      {"c01", {"engine oracle equivalence", c01_engine_oracle}},
      {"c02", {"variant semantics", c02_variant_semantics}},
      {"c03", {"oracle exactness", c03_oracle_exactness}},
      {"c04", {"procrustes", c04_procrustes}},
      {"c05", {"transformer correctness", c05_transformer}},
      {"c06", {"desk-scale training", c06_desk_training}},
      {"c07", {"probe pipeline", c07_probe_pipeline}},
      {"c08", {"intervention harness", c08_interventions}},
      {"c09", {"delflank ambiguity decay", c09_ambiguity_decay}},
      {"c10", {"full-scale findings reported", c10_reports}},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) {
    for (const auto& [id, _] : criteria()) wanted.push_back(id);
  }
  int failed = 0;
  for (const auto& id : wanted) {
    const auto it = criteria().find(id);
    if (it == criteria().end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 1;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << it->second.first << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
