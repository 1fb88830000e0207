#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gner/training.h"
#include "test_util.h"
#include "toy_model.h"

using namespace gner;
using namespace gner::testing;

namespace {

double Norm(std::span<const Tensor> ts) {
  double s = 0;
  for (const Tensor& t : ts) {
    for (size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  }
  return std::sqrt(s);
}

TrainConfig SmallRun(size_t epochs1, size_t epochs2) {
  TrainConfig c;
  c.stage1_epochs = epochs1;
  c.stage1_batch = 2;
  c.stage2_epochs = epochs2;
  c.stage2_batch = 8;
  c.optimizer.lr = 0.01;
  return c;
}

}  // namespace

TEST_CASE("nadam matches the high-precision trajectory") {
  // f(x) = x^2 from x = 1; values from tests/oracles/nadam_trajectory.py.
  const double expected[] = {0.99705263159368421045, 0.99473965978123618455,
                             0.99258534794040385507};
  Tensor x = Tensor::Scalar(1.0);
  Tensor* params[] = {&x};
  NadamState state;
  for (double want : expected) {
    Tensor g = Tensor::Scalar(2 * x[0]);
    NadamStep(params, std::span(&g, 1), state, NadamConfig{});
    CHECK(std::abs(x[0] - want) <= 1e-12);
  }
  CHECK(state.step == 3);
}

TEST_CASE("nadam edge cases") {
  Tensor x = Tensor::Vector({0.5, -2.0});
  Tensor* params[] = {&x};
  NadamState state;
  Tensor zero({2});
  NadamStep(params, std::span(&zero, 1), state, NadamConfig{});
  CHECK(x == Tensor::Vector({0.5, -2.0}));

  // Steady descent on x^2 from 3.
  Tensor y = Tensor::Scalar(3.0);
  Tensor* py[] = {&y};
  NadamState sy;
  NadamConfig fast;
  fast.lr = 0.1;
  double prev = 3.0;
  for (int i = 0; i < 20; ++i) {
    Tensor g = Tensor::Scalar(2 * y[0]);
    NadamStep(py, std::span(&g, 1), sy, fast);
    CHECK(std::abs(y[0]) < prev);
    prev = std::abs(y[0]);
  }

  Tensor bad = Tensor::Vector({1.0, std::nan("")});
  CHECK_THROWS_AS(NadamStep(params, std::span(&bad, 1), state, NadamConfig{}), Error);
  Tensor wrong = Tensor::Vector({1.0});
  CHECK_THROWS_AS(NadamStep(params, std::span(&wrong, 1), state, NadamConfig{}), Error);
}

TEST_CASE("global norm clipping") {
  Rng rng(1);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> g = {Tensor({3, 4}), Tensor({5})};
    for (auto& t : g) {
      for (size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
    }
    std::vector<Tensor> orig = g;
    double before = Norm(g);
    CHECK(ClipGlobalNorm(g, 5.0) == doctest::Approx(before));
    CHECK(Norm(g) <= 5.0 + 1e-9);
    if (before <= 5.0) {
      CHECK(g[0] == orig[0]);
    } else {
      // Direction is kept.
      CHECK(g[0][0] * before / 5.0 == doctest::Approx(orig[0][0]));
    }
    std::vector<Tensor> off = orig;
    ClipGlobalNorm(off, 0.0);
    CHECK(off[1] == orig[1]);
  }
}

TEST_CASE("checkpoint selection") {
  CHECK(SelectCheckpoint(std::vector<double>{0.5, 0.7, 0.7, 0.6}) == 2);
  CHECK(SelectCheckpoint(std::vector<double>{0.9}) == 1);
  CHECK(SelectCheckpoint(std::vector<double>{0.0, 0.0}) == 1);
  CHECK(SelectCheckpoint(std::vector<double>{}) == 0);
}

TEST_CASE("train config json") {
  TrainConfig c = SmallRun(3, 4);
  c.level = Level::kInner;
  c.gradient_clip_norm = 1.5;
  auto j = TrainConfigToJson(c);
  auto back = TrainConfigFromJson(j, TrainConfig{});
  CHECK(TrainConfigToJson(back) == j);
  CHECK(back.level == Level::kInner);
  CHECK(back.optimizer.lr == 0.01);
  CHECK_THROWS_AS(TrainConfigFromJson(nlohmann::json{{"epochs", 3}}, TrainConfig{}), Error);
  CHECK_THROWS_AS(TrainConfigFromJson(nlohmann::json{{"level", "middle"}}, TrainConfig{}), Error);
  CHECK_THROWS_AS(TrainConfigFromJson(nlohmann::json{{"stage2_batch", 0}}, TrainConfig{}), Error);
  TrainConfig d;
  CHECK(d.stage1_epochs == 10);
  CHECK(d.stage1_batch == 16);
  CHECK(d.stage2_batch == 512);
  CHECK(d.gradient_clip_norm == 5.0);
}

TEST_CASE("training lowers the loss and leaves embeddings alone") {
  auto data = ToySentences();
  auto store = ToyStore(data, 8, 1);
  auto before = store.Lookup("Berlin").vector;
  auto model = NerModel::Build(ToyConfig(CharVariant::kCnn), CharVocab::Build(data), 1);
  TrainConfig c = SmallRun(5, 0);
  NadamState state;
  Rng rng(c.seed);
  std::vector<double> losses;
  for (size_t e = 1; e <= 5; ++e) {
    auto rec = TrainEpoch(model, data, store, c, 1, e, state, rng);
    CHECK(rec.batch_losses.size() == 5);
    losses.push_back(rec.mean_loss);
  }
  CHECK(losses.back() < losses.front());
  CHECK(store.Lookup("Berlin").vector == before);
  for (size_t i = 0; i < model.char_table().dim(); ++i) {
    CHECK(model.char_table().rows->value.at(0, i) == 0.0);
  }
  CHECK_THROWS_AS(TrainEpoch(model, std::span<const Sentence>(), store, c, 1, 1, state, rng),
                  Error);
}

TEST_CASE("gradient accumulation matches whole-batch updates") {
  auto data = ToySentences();
  auto store = ToyStore(data, 8, 1);
  ModelConfig mc = ToyConfig(CharVariant::kBiLstm);
  mc.dropout = 0.0;
  auto a = NerModel::Build(mc, CharVocab::Build(data), 2);
  auto b = a.Clone();
  TrainConfig whole = SmallRun(1, 0);
  whole.stage1_batch = 10;
  TrainConfig chunked = whole;
  chunked.micro_batch = 3;
  NadamState sa, sb;
  Rng ra(1), rb(1);
  auto rec_a = TrainEpoch(a, data, store, whole, 1, 1, sa, ra);
  auto rec_b = TrainEpoch(b, data, store, chunked, 1, 1, sb, rb);
  CHECK(rec_a.mean_loss == doctest::Approx(rec_b.mean_loss).epsilon(1e-12));
  auto pa = a.Snapshot(), pb = b.Snapshot();
  for (size_t i = 0; i < pa.size(); ++i) {
    for (size_t k = 0; k < pa[i].size(); ++k) CHECK(std::abs(pa[i][k] - pb[i][k]) <= 1e-9);
  }
}

TEST_CASE("two-stage training") {
  auto data = ToySentences();
  auto store = ToyStore(data, 8, 1);
  auto initial = NerModel::Build(ToyConfig(CharVariant::kCnn), CharVocab::Build(data), 1);
  TempDir dir;
  TrainConfig c = SmallRun(3, 2);
  c.checkpoint_dir = dir.File("");
  size_t calls = 0;
  auto r1 = TrainTwoStage(initial, data, data, store, c, [&](const EpochRecord&) { ++calls; });
  CHECK(calls == 5);
  REQUIRE(r1.report.epochs.size() == 5);
  CHECK(r1.report.epochs[0].stage == 1);
  CHECK(r1.report.epochs[4].stage == 2);
  CHECK(r1.report.stage1_selected >= 1);
  CHECK(r1.report.stage1_selected <= 3);
  CHECK(r1.report.stage2_selected >= 1);
  CHECK(std::filesystem::exists(dir.File("stage2-epoch2.mner")));

  // The returned model is the selected stage-2 epoch.
  const auto& sel = r1.report.epochs[3 + r1.report.stage2_selected - 1];
  CHECK(EvaluateModel(r1.model, store, data, Level::kOuter).f1 == doctest::Approx(sel.dev_f1));
  std::vector<double> f1s;
  for (size_t e = 3; e < 5; ++e) f1s.push_back(r1.report.epochs[e].dev_f1);
  CHECK(SelectCheckpoint(f1s) == r1.report.stage2_selected);

  // The initial model is untouched and the run is reproducible.
  auto init_again = NerModel::Build(ToyConfig(CharVariant::kCnn), CharVocab::Build(data), 1);
  CHECK(initial.Snapshot()[1] == init_again.Snapshot()[1]);
  c.checkpoint_dir.clear();
  auto r2 = TrainTwoStage(initial, data, data, store, c);
  auto s1 = r1.model.Snapshot(), s2 = r2.model.Snapshot();
  for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);

  std::istringstream lines(r1.report.ToJsonLines());
  size_t n = 0;
  for (std::string line; std::getline(lines, line); ++n) CHECK(nlohmann::json::accept(line));
  CHECK(n == 6);

  CHECK_THROWS_AS(TrainTwoStage(initial, std::span<const Sentence>(), data, store, c), Error);
  CHECK_THROWS_AS(TrainTwoStage(initial, data, std::span<const Sentence>(), store, c), Error);
}
