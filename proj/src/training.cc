#include "gner/training.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace gner {

void NadamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
               NadamState& state, const NadamConfig& config) {
  if (params.size() != grads.size()) {
    throw Error("nadam: " + std::to_string(params.size()) + " parameters but " +
                std::to_string(grads.size()) + " gradients");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw Error("nadam: gradient " + std::to_string(i) + " has shape " +
                  ShapeString(grads[i].shape()) + ", parameter has " +
                  ShapeString(params[i]->shape()));
    }
    if (!grads[i].AllFinite()) {
      throw Error("nadam: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::ZerosLike(*p));
      state.v.push_back(Tensor::ZerosLike(*p));
    }
  } else if (state.m.size() != params.size()) {
    throw Error("nadam: optimizer state does not match the parameter list");
  }

  const double t = static_cast<double>(++state.step);
  const double b1 = config.beta1, b2 = config.beta2;
  const double m_next = 1.0 - std::pow(b1, t + 1);
  const double m_now = 1.0 - std::pow(b1, t);
  const double v_now = 1.0 - std::pow(b2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const double* g = grads[i].data();
    for (size_t k = 0; k < params[i]->size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      double m_hat = b1 * m[k] / m_next + (1 - b1) * g[k] / m_now;
      double v_hat = v[k] / v_now;
      p[k] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double ClipGlobalNorm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.values()) sq += x * x;
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (size_t k = 0; k < g.size(); ++k) g[k] *= scale;
    }
  }
  return norm;
}

nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  return {
      {"stage1_epochs", c.stage1_epochs},
      {"stage1_batch", c.stage1_batch},
      {"stage2_epochs", c.stage2_epochs},
      {"stage2_batch", c.stage2_batch},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"seed", c.seed},
      {"gradient_clip_norm", c.gradient_clip_norm},
      {"reset_optimizer_between_stages", c.reset_optimizer_between_stages},
      {"micro_batch", c.micro_batch},
      {"level", c.level == Level::kInner ? "inner" : "outer"},
      {"checkpoint_dir", c.checkpoint_dir},
  };
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw Error("train config must be an object");
  static const std::set<std::string> known = {
      "stage1_epochs", "stage1_batch", "stage2_epochs",
      "stage2_batch",  "optimizer",    "seed",
      "gradient_clip_norm", "reset_optimizer_between_stages", "micro_batch",
      "level",         "checkpoint_dir"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("unknown train config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("stage1_epochs", c.stage1_epochs);
  get("stage1_batch", c.stage1_batch);
  get("stage2_epochs", c.stage2_epochs);
  get("stage2_batch", c.stage2_batch);
  get("seed", c.seed);
  get("gradient_clip_norm", c.gradient_clip_norm);
  get("reset_optimizer_between_stages", c.reset_optimizer_between_stages);
  get("micro_batch", c.micro_batch);
  get("checkpoint_dir", c.checkpoint_dir);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    if (o.contains("lr")) c.optimizer.lr = o["lr"].get<double>();
    if (o.contains("beta1")) c.optimizer.beta1 = o["beta1"].get<double>();
    if (o.contains("beta2")) c.optimizer.beta2 = o["beta2"].get<double>();
    if (o.contains("epsilon")) c.optimizer.epsilon = o["epsilon"].get<double>();
  }
  if (j.contains("level")) {
    std::string level = j["level"].get<std::string>();
    if (level == "outer") {
      c.level = Level::kOuter;
    } else if (level == "inner") {
      c.level = Level::kInner;
    } else {
      throw Error("train config: level must be 'outer' or 'inner', got '" + level + "'");
    }
  }
  if (c.stage1_batch == 0 || c.stage2_batch == 0 || c.micro_batch == 0) {
    throw Error("train config: batch sizes must be positive");
  }
  return c;
}

std::string TrainReport::ToJsonLines() const {
  std::ostringstream out;
  for (const EpochRecord& e : epochs) {
    nlohmann::json row = {
        {"stage", e.stage},           {"epoch", e.epoch},
        {"mean_loss", e.mean_loss},   {"batch_losses", e.batch_losses},
        {"dev_f1", e.dev_f1},         {"dev_precision", e.dev_precision},
        {"dev_recall", e.dev_recall}, {"seconds", e.seconds},
    };
    if (!e.checkpoint.empty()) row["checkpoint"] = e.checkpoint;
    out << row.dump() << '\n';
  }
  nlohmann::json summary = {{"summary", true},
                            {"stage1_selected", stage1_selected},
                            {"stage2_selected", stage2_selected},
                            {"wall_seconds", wall_seconds}};
  out << summary.dump() << '\n';
  return out.str();
}

size_t SelectCheckpoint(std::span<const double> dev_f1) {
  if (dev_f1.empty()) return 0;
  size_t best = 0;
  for (size_t i = 1; i < dev_f1.size(); ++i) {
    if (dev_f1[i] > dev_f1[best]) best = i;
  }
  return best + 1;
}

namespace {

uint64_t EpochSeed(uint64_t seed, int stage, size_t epoch) {
  uint64_t x = seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(stage) * 1000003ULL +
               epoch;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 29;
  return x;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

EpochRecord TrainEpoch(NerModel& model, std::span<const Sentence> data,
                       const EmbeddingStore& store, const TrainConfig& config,
                       int stage, size_t epoch, NadamState& state, Rng& rng) {
  if (stage != 1 && stage != 2) {
    throw Error("train_epoch: stage must be 1 or 2, got " + std::to_string(stage));
  }
  if (data.empty()) throw Error("train_epoch: empty training set");
  const auto start = std::chrono::steady_clock::now();
  const size_t batch_size = stage == 1 ? config.stage1_batch : config.stage2_batch;
  const CharMode char_mode = model.config().char_mode();

  std::vector<NamedParameter> named = model.Parameters();
  std::vector<Tensor*> values;
  for (auto& p : named) values.push_back(&p.value->value);

  EpochRecord record;
  record.stage = stage;
  record.epoch = epoch;
  for (const Batch& batch : MakeBatches(data, batch_size, EpochSeed(config.seed, stage, epoch))) {
    std::vector<Tensor> grads;
    for (const Tensor* v : values) grads.push_back(Tensor::ZerosLike(*v));
    double batch_loss = 0.0;
    const double normalizer = static_cast<double>(batch.size());
    for (size_t lo = 0; lo < batch.size(); lo += config.micro_batch) {
      size_t hi = std::min(batch.size(), lo + config.micro_batch);
      Batch part = MakeBatch({batch.sentences.begin() + lo, batch.sentences.begin() + hi},
                             {batch.ids.begin() + lo, batch.ids.begin() + hi});
      AttachChars(part, model.char_vocab(), char_mode);
      Var loss = BatchLoss(model, part, store, config.level, Mode::kTrain, rng, normalizer);
      batch_loss += loss->value[0];
      Gradients g = Backward(loss, /*retain_intermediate=*/false);
      for (size_t i = 0; i < named.size(); ++i) {
        if (const Tensor* d = g.Find(named[i].value)) grads[i].Accumulate(*d);
      }
    }
    // The padding row of the char table stays zero.
    for (size_t i = 0; i < named.size(); ++i) {
      if (named[i].name == "char_table") {
        for (size_t k = 0; k < grads[i].cols(); ++k) grads[i][k] = 0.0;
      }
    }
    ClipGlobalNorm(grads, config.gradient_clip_norm);
    NadamStep(values, grads, state, config.optimizer);
    record.batch_losses.push_back(batch_loss);
  }
  double total = 0.0;
  for (double l : record.batch_losses) total += l;
  record.mean_loss = total / static_cast<double>(record.batch_losses.size());
  record.seconds = Seconds(start);
  return record;
}

EvalReport EvaluateModel(const NerModel& model, const EmbeddingStore& store,
                         std::span<const Sentence> sentences, Level level,
                         StrayInside stray) {
  std::vector<std::vector<std::string>> gold;
  for (const Sentence& s : sentences) {
    const auto& labels = level == Level::kInner ? s.inner_labels : s.outer_labels;
    if (labels.size() != s.size()) {
      throw Error("evaluate: sentence '" + s.source_id + "' lacks " +
                  (level == Level::kInner ? "inner" : "outer") + " labels");
    }
    gold.push_back(labels);
  }
  auto pred = PredictBatch(model, store, sentences);
  return EvaluateLabels(gold, pred, stray);
}

TrainResult TrainTwoStage(const NerModel& initial, std::span<const Sentence> train,
                          std::span<const Sentence> dev, const EmbeddingStore& store,
                          const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train.empty()) throw Error("train: empty training set");
  if (dev.empty()) throw Error("train: empty development set");
  const auto start = std::chrono::steady_clock::now();
  if (!config.checkpoint_dir.empty()) {
    std::filesystem::create_directories(config.checkpoint_dir);
  }
  TrainResult result{initial.Clone(), {}};
  NerModel& model = result.model;
  Rng rng(config.seed);
  NadamState state;

  auto run_stage = [&](int stage, size_t epochs) -> size_t {
    std::vector<double> f1s;
    std::vector<Tensor> best;
    for (size_t e = 1; e <= epochs; ++e) {
      EpochRecord rec = TrainEpoch(model, train, store, config, stage, e, state, rng);
      EvalReport dev_report = EvaluateModel(model, store, dev, config.level);
      rec.dev_f1 = dev_report.f1;
      rec.dev_precision = dev_report.precision;
      rec.dev_recall = dev_report.recall;
      if (!config.checkpoint_dir.empty()) {
        rec.checkpoint = (std::filesystem::path(config.checkpoint_dir) /
                          ("stage" + std::to_string(stage) + "-epoch" +
                           std::to_string(e) + ".mner"))
                             .string();
        SaveModel(model, rec.checkpoint);
      }
      f1s.push_back(rec.dev_f1);
      if (SelectCheckpoint(f1s) == e) best = model.Snapshot();
      if (on_epoch) on_epoch(rec);
      result.report.epochs.push_back(std::move(rec));
    }
    if (!best.empty()) model.Restore(best);
    return SelectCheckpoint(f1s);
  };

  result.report.stage1_selected = run_stage(1, config.stage1_epochs);
  if (config.reset_optimizer_between_stages) state = NadamState{};
  result.report.stage2_selected = run_stage(2, config.stage2_epochs);
  result.report.wall_seconds = Seconds(start);
  return result;
}

}  // namespace gner
