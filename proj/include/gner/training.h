#ifndef GNER_TRAINING_H_
#define GNER_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gner/model.h"

namespace gner {

struct NadamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moments per parameter; `step` counts completed updates.
struct NadamState {
  size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One Nesterov Adam update (Dozat's form without the momentum schedule):
//   m = b1 m + (1 - b1) g,   v = b2 v + (1 - b2) g^2
//   m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
//   v_hat = v / (1 - b2^t)
//   p -= lr m_hat / (sqrt(v_hat) + eps)
// where t is the step after incrementing. Throws on a non-finite gradient.
void NadamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
               NadamState& state, const NadamConfig& config);

// Scales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping. max_norm <= 0 leaves them untouched.
double ClipGlobalNorm(std::span<Tensor> grads, double max_norm);

struct TrainConfig {
  size_t stage1_epochs = 10;
  size_t stage1_batch = 16;
  size_t stage2_epochs = 10;
  size_t stage2_batch = 512;
  NadamConfig optimizer;
  uint64_t seed = 1;
  // <= 0 disables clipping.
  double gradient_clip_norm = 5.0;
  bool reset_optimizer_between_stages = true;
  // Large batches are run as gradient-accumulated chunks of at most this
  // many sentences; the update is the same as for the whole batch.
  size_t micro_batch = 32;
  Level level = Level::kOuter;
  // When set, every epoch's model is written as
  // <dir>/stage<s>-epoch<e>.mner.
  std::string checkpoint_dir;
};

nlohmann::json TrainConfigToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base);

struct EpochRecord {
  int stage = 1;
  size_t epoch = 0;  // 1-based within the stage
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
  double dev_f1 = 0.0;
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double seconds = 0.0;
  std::string checkpoint;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  size_t stage1_selected = 0;  // epoch number, 0 when the stage did not run
  size_t stage2_selected = 0;
  double wall_seconds = 0.0;

  // One JSON object per line: one per epoch, then a summary line.
  std::string ToJsonLines() const;
};

// argmax of dev F1, earliest epoch on ties. Returns 1-based epoch numbers.
size_t SelectCheckpoint(std::span<const double> dev_f1);

// One pass over `data` in shuffled batches of the stage's size. Word
// embeddings live outside the model and are never touched.
EpochRecord TrainEpoch(NerModel& model, std::span<const Sentence> data,
                       const EmbeddingStore& store, const TrainConfig& config,
                       int stage, size_t epoch, NadamState& state, Rng& rng);

EvalReport EvaluateModel(const NerModel& model, const EmbeddingStore& store,
                         std::span<const Sentence> sentences, Level level,
                         StrayInside stray = StrayInside::kLenient);

struct TrainResult {
  NerModel model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Stage 1 at batch stage1_batch, restore its best dev epoch, stage 2 at
// batch stage2_batch, return its best dev epoch.
TrainResult TrainTwoStage(const NerModel& initial, std::span<const Sentence> train,
                          std::span<const Sentence> dev, const EmbeddingStore& store,
                          const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace gner

#endif  // GNER_TRAINING_H_
