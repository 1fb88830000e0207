#ifndef GNER_MODEL_H_
#define GNER_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gner/autodiff.h"
#include "gner/corpus.h"
#include "gner/crf.h"
#include "gner/embeddings.h"
#include "gner/evaluation.h"
#include "gner/layers.h"

namespace gner {

enum class CharVariant { kNone, kCnn, kCnn3, kBiLstm, kBiLstm2 };

std::string_view CharVariantName(CharVariant variant);
CharVariant CharVariantFromName(std::string_view name);

struct ModelConfig {
  CharVariant char_variant = CharVariant::kBiLstm;
  size_t word_dim = 300;
  size_t casing_dim = kCasingDim;
  size_t char_emb_dim = 32;
  size_t char_cnn_filters = 32;
  size_t char_lstm_cells = 50;
  size_t token_lstm_cells = 200;
  double dropout = 0.5;
  LabelSchema label_schema = LabelSchema::GermEval();
  EmbeddingKind embedding_kind = EmbeddingKind::kFastText;

  // {3} for cnn, {3, 4, 5} for cnn3, empty otherwise.
  std::vector<size_t> CharCnnKernels() const;
  CharMode char_mode() const;
  size_t CharFeatureDim() const;
  // word + casing + char features.
  size_t TokenInputDim() const;
  void Validate() const;
};

struct NamedParameter {
  std::string name;
  Var value;
};

class NerModel {
 public:
  static NerModel Build(const ModelConfig& config, CharVocab char_vocab,
                        uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const LabelSchema& schema() const { return config_.label_schema; }
  const CharVocab& char_vocab() const { return char_vocab_; }

  // Fixed order; names are stable across save/load.
  std::vector<NamedParameter> Parameters() const;
  std::vector<Var> ParameterVars() const;
  std::vector<Tensor> Snapshot() const;
  void Restore(std::span<const Tensor> values);
  // Independent copy of every parameter.
  NerModel Clone() const;

  const EmbeddingTable& char_table() const { return char_table_; }
  const CrfParams& crf() const { return crf_; }

 private:
  friend struct ModelAccess;
  NerModel() = default;

  ModelConfig config_;
  CharVocab char_vocab_;
  EmbeddingTable char_table_;
  std::vector<Conv1dParams> convs_;
  // One (forward, backward) pair per stacked char BiLSTM layer.
  std::vector<std::pair<LstmParams, LstmParams>> char_lstms_;
  LstmParams token_forward_;
  LstmParams token_backward_;
  Var dense_w_;
  Var dense_b_;
  CrfParams crf_;
};

// Per-timestep label scores for a batch.
struct Emissions {
  std::vector<Var> steps;  // max_len entries of [B x L]
  std::vector<size_t> lengths;

  Shape shape() const;
  // [length_b x L] rows of sentence b.
  Var Sentence(size_t b) const;
};

// Requires chars attached in the variant's char mode (any mode, or none, for
// the variant without char features). Dropout is active in train mode only.
Emissions ForwardEmissions(const NerModel& model, const Batch& batch,
                           const EmbeddingStore& store, Mode mode, Rng& rng);

// Sum of per-sentence CRF losses divided by `normalizer`.
Var BatchLoss(const NerModel& model, const Batch& batch,
              const EmbeddingStore& store, Level level, Mode mode, Rng& rng,
              double normalizer);

// Viterbi labels for each sentence, in eval mode.
std::vector<std::vector<std::string>> PredictBatch(const NerModel& model,
                                                   const EmbeddingStore& store,
                                                   std::span<const Sentence> sentences,
                                                   size_t batch_size = 64);

std::vector<std::string> Predict(const NerModel& model, const EmbeddingStore& store,
                                 std::span<const std::string> tokens);

// "MNER1" container: magic line, JSON header line, then little-endian
// float32 parameter blocks in header order.
void SaveModel(const NerModel& model, const std::string& path);
// When `expected_schema` is given, a model with another label schema is
// rejected.
NerModel LoadModel(const std::string& path,
                   const LabelSchema* expected_schema = nullptr);

}  // namespace gner

#endif  // GNER_MODEL_H_
