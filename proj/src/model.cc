#include "gner/model.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gner/json_io.h"

namespace gner {

std::string_view CharVariantName(CharVariant variant) {
  switch (variant) {
    case CharVariant::kNone: return "none";
    case CharVariant::kCnn: return "cnn";
    case CharVariant::kCnn3: return "cnn3";
    case CharVariant::kBiLstm: return "bilstm";
    case CharVariant::kBiLstm2: return "bilstm2";
  }
  return "none";
}

CharVariant CharVariantFromName(std::string_view name) {
  for (CharVariant v : {CharVariant::kNone, CharVariant::kCnn, CharVariant::kCnn3,
                        CharVariant::kBiLstm, CharVariant::kBiLstm2}) {
    if (CharVariantName(v) == name) return v;
  }
  throw Error("invalid char variant '" + std::string(name) +
              "' (expected none, cnn, cnn3, bilstm or bilstm2)");
}

std::vector<size_t> ModelConfig::CharCnnKernels() const {
  switch (char_variant) {
    case CharVariant::kCnn: return {3};
    case CharVariant::kCnn3: return {3, 4, 5};
    default: return {};
  }
}

CharMode ModelConfig::char_mode() const {
  switch (char_variant) {
    case CharVariant::kCnn:
    case CharVariant::kCnn3: return CharMode::kCnn;
    case CharVariant::kBiLstm:
    case CharVariant::kBiLstm2: return CharMode::kRnn;
    case CharVariant::kNone: return CharMode::kNone;
  }
  return CharMode::kNone;
}

size_t ModelConfig::CharFeatureDim() const {
  switch (char_variant) {
    case CharVariant::kNone: return 0;
    case CharVariant::kCnn:
    case CharVariant::kCnn3: return CharCnnKernels().size() * char_cnn_filters;
    case CharVariant::kBiLstm:
    case CharVariant::kBiLstm2: return 2 * char_lstm_cells;
  }
  return 0;
}

size_t ModelConfig::TokenInputDim() const {
  return word_dim + casing_dim + CharFeatureDim();
}

void ModelConfig::Validate() const {
  if (word_dim == 0) throw Error("model config: word_dim must be positive");
  if (casing_dim != kCasingDim) {
    throw Error("model config: casing_dim must be " + std::to_string(kCasingDim));
  }
  if (token_lstm_cells == 0) throw Error("model config: token_lstm_cells must be positive");
  if (char_variant != CharVariant::kNone && char_emb_dim == 0) {
    throw Error("model config: char_emb_dim must be positive");
  }
  if ((char_variant == CharVariant::kCnn || char_variant == CharVariant::kCnn3) &&
      char_cnn_filters == 0) {
    throw Error("model config: char_cnn_filters must be positive");
  }
  if ((char_variant == CharVariant::kBiLstm || char_variant == CharVariant::kBiLstm2) &&
      char_lstm_cells == 0) {
    throw Error("model config: char_lstm_cells must be positive");
  }
  if (dropout < 0 || dropout >= 1) throw Error("model config: dropout must be in [0, 1)");
  if (label_schema.size() == 0) throw Error("model config: empty label schema");
}

NerModel NerModel::Build(const ModelConfig& config, CharVocab char_vocab,
                         uint64_t seed) {
  config.Validate();
  Rng rng(seed);
  NerModel m;
  m.config_ = config;
  m.char_vocab_ = std::move(char_vocab);
  if (config.char_variant != CharVariant::kNone) {
    m.char_table_ = EmbeddingTable::Init(m.char_vocab_.size(), config.char_emb_dim, rng);
  }
  for (size_t k : config.CharCnnKernels()) {
    m.convs_.push_back(
        Conv1dParams::Init(k, config.char_emb_dim, config.char_cnn_filters, rng));
  }
  size_t layers = config.char_variant == CharVariant::kBiLstm    ? 1
                  : config.char_variant == CharVariant::kBiLstm2 ? 2
                                                                 : 0;
  size_t in = config.char_emb_dim;
  for (size_t l = 0; l < layers; ++l) {
    LstmParams f = LstmParams::Init(in, config.char_lstm_cells, rng);
    LstmParams b = LstmParams::Init(in, config.char_lstm_cells, rng);
    m.char_lstms_.emplace_back(std::move(f), std::move(b));
    in = 2 * config.char_lstm_cells;
  }
  m.token_forward_ = LstmParams::Init(config.TokenInputDim(), config.token_lstm_cells, rng);
  m.token_backward_ = LstmParams::Init(config.TokenInputDim(), config.token_lstm_cells, rng);
  const size_t labels = config.label_schema.size();
  m.dense_w_ = Parameter(GlorotUniform(2 * config.token_lstm_cells, labels, rng));
  m.dense_b_ = Parameter(Tensor({labels}));
  m.crf_ = CrfParams::Init(labels, rng);
  return m;
}

std::vector<NamedParameter> NerModel::Parameters() const {
  std::vector<NamedParameter> out;
  if (char_table_.rows) out.push_back({"char_table", char_table_.rows});
  for (size_t i = 0; i < convs_.size(); ++i) {
    std::string p = "char_conv" + std::to_string(convs_[i].kernel_size);
    out.push_back({p + ".kernels", convs_[i].kernels});
    out.push_back({p + ".bias", convs_[i].bias});
  }
  auto add_lstm = [&](const std::string& prefix, const LstmParams& l) {
    out.push_back({prefix + ".w_input", l.w_input});
    out.push_back({prefix + ".w_recurrent", l.w_recurrent});
    out.push_back({prefix + ".bias", l.bias});
  };
  for (size_t i = 0; i < char_lstms_.size(); ++i) {
    std::string p = "char_lstm" + std::to_string(i);
    add_lstm(p + ".forward", char_lstms_[i].first);
    add_lstm(p + ".backward", char_lstms_[i].second);
  }
  add_lstm("token_lstm.forward", token_forward_);
  add_lstm("token_lstm.backward", token_backward_);
  out.push_back({"dense.w", dense_w_});
  out.push_back({"dense.b", dense_b_});
  out.push_back({"crf.transitions", crf_.transitions});
  out.push_back({"crf.start", crf_.start});
  out.push_back({"crf.end", crf_.end});
  return out;
}

std::vector<Var> NerModel::ParameterVars() const {
  std::vector<Var> out;
  for (auto& p : Parameters()) out.push_back(p.value);
  return out;
}

std::vector<Tensor> NerModel::Snapshot() const {
  std::vector<Tensor> out;
  for (auto& p : Parameters()) out.push_back(p.value->value);
  return out;
}

void NerModel::Restore(std::span<const Tensor> values) {
  auto params = Parameters();
  if (values.size() != params.size()) {
    throw Error("restore: expected " + std::to_string(params.size()) +
                " parameter tensors, got " + std::to_string(values.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i].value->value.shape()) {
      throw Error("restore: parameter " + params[i].name + " expects " +
                  ShapeString(params[i].value->value.shape()) + ", got " +
                  ShapeString(values[i].shape()));
    }
    params[i].value->value = values[i];
  }
}

NerModel NerModel::Clone() const {
  NerModel copy = *this;
  auto fresh = [](Var& v) {
    if (v) v = Parameter(v->value);
  };
  fresh(copy.char_table_.rows);
  for (auto& c : copy.convs_) {
    fresh(c.kernels);
    fresh(c.bias);
  }
  auto fresh_lstm = [&](LstmParams& l) {
    fresh(l.w_input);
    fresh(l.w_recurrent);
    fresh(l.bias);
  };
  for (auto& [f, b] : copy.char_lstms_) {
    fresh_lstm(f);
    fresh_lstm(b);
  }
  fresh_lstm(copy.token_forward_);
  fresh_lstm(copy.token_backward_);
  fresh(copy.dense_w_);
  fresh(copy.dense_b_);
  fresh(copy.crf_.transitions);
  fresh(copy.crf_.start);
  fresh(copy.crf_.end);
  return copy;
}

// Grants the forward pass access to the parameter blocks.
struct ModelAccess {
  static const NerModel& Get(const NerModel& m) { return m; }
  static const std::vector<Conv1dParams>& Convs(const NerModel& m) { return m.convs_; }
  static const std::vector<std::pair<LstmParams, LstmParams>>& CharLstms(
      const NerModel& m) {
    return m.char_lstms_;
  }
  static const LstmParams& TokenForward(const NerModel& m) { return m.token_forward_; }
  static const LstmParams& TokenBackward(const NerModel& m) { return m.token_backward_; }
  static const Var& DenseW(const NerModel& m) { return m.dense_w_; }
  static const Var& DenseB(const NerModel& m) { return m.dense_b_; }
};

Shape Emissions::shape() const {
  if (steps.empty()) return {0, 0, 0};
  return {steps[0]->value.rows(), steps.size(), steps[0]->value.cols()};
}

Var Emissions::Sentence(size_t b) const {
  std::vector<Var> rows;
  rows.reserve(lengths.at(b));
  for (size_t t = 0; t < lengths[b]; ++t) rows.push_back(Slice(steps[t], 0, b, b + 1));
  return Stack(rows);
}

namespace {

size_t RealLength(const std::vector<int>& seq) {
  size_t n = 0;
  for (int c : seq) n += c != CharVocab::kPad;
  return n;
}

// Char feature per (b, t) for t < length_b, one [char_dim] vector each.
std::vector<std::vector<Var>> CnnCharFeatures(const NerModel& model, const Batch& batch) {
  const auto& convs = ModelAccess::Convs(model);
  size_t widest = 0;
  for (const auto& c : convs) widest = std::max(widest, c.kernel_size);
  std::vector<std::vector<Var>> out(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    for (size_t t = 0; t < batch.sentences[b]->size(); ++t) {
      const std::vector<int>& seq = batch.chars[b][t];
      // Windows cover the decorated token only; padding is added just far
      // enough to fit the kernel, so features do not depend on batch width.
      size_t real = RealLength(seq);
      size_t needed = std::max(real, widest);
      std::vector<int> window(seq.begin(), seq.begin() + std::min(real, seq.size()));
      window.resize(needed, CharVocab::kPad);
      std::vector<Var> rows = EmbedLookup(model.char_table(), window);
      Var x = Stack(rows);
      std::vector<Var> pooled;
      for (const auto& conv : convs) {
        size_t positions = std::max(real, conv.kernel_size);
        Var xs = positions == needed ? x : Slice(x, 0, 0, positions);
        pooled.push_back(Conv1dGlobalMaxPool(conv, xs));
      }
      out[b].push_back(pooled.size() == 1 ? pooled[0] : Concat(pooled));
    }
  }
  return out;
}

// Char BiLSTM features for all tokens of the batch at once; returns a
// [N x char_dim] matrix and the row of each (b, t).
std::pair<Var, std::vector<std::vector<size_t>>> RnnCharFeatures(const NerModel& model,
                                                                 const Batch& batch) {
  std::vector<const std::vector<int>*> seqs;
  std::vector<std::vector<size_t>> row_of(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    for (size_t t = 0; t < batch.sentences[b]->size(); ++t) {
      row_of[b].push_back(seqs.size());
      seqs.push_back(&batch.chars[b][t]);
    }
  }
  const size_t width = batch.char_pad_len;
  std::vector<Var> xs;
  SequenceMask mask(width, std::vector<uint8_t>(seqs.size(), 0));
  std::vector<int> column(seqs.size());
  for (size_t s = 0; s < width; ++s) {
    for (size_t n = 0; n < seqs.size(); ++n) {
      column[n] = (*seqs[n])[s];
      mask[s][n] = column[n] != CharVocab::kPad;
    }
    xs.push_back(Stack(EmbedLookup(model.char_table(), column)));
  }
  Var features;
  for (const auto& [fwd, bwd] : ModelAccess::CharLstms(model)) {
    BiLstmResult r = BiLstmSequence(fwd, bwd, xs, mask);
    const Var finals[] = {r.forward_final, r.backward_final};
    features = Concat(finals);
    xs = std::move(r.outputs);
  }
  return {features, std::move(row_of)};
}

Var WordAndCasing(const Batch& batch, const EmbeddingStore& store, size_t t,
                  size_t word_dim) {
  const size_t rows = batch.size();
  Tensor words({rows, word_dim});
  Tensor casing({rows, kCasingDim});
  for (size_t b = 0; b < rows; ++b) {
    const Sentence& s = *batch.sentences[b];
    if (t >= s.size()) continue;
    const Token& tok = s.tokens[t];
    WordLookup w = store.Lookup(tok.text);
    std::copy(w.vector.begin(), w.vector.end(), words.data() + b * word_dim);
    casing.at(b, static_cast<size_t>(tok.casing)) = 1.0;
  }
  const Var parts[] = {Constant(std::move(words)), Constant(std::move(casing))};
  return Concat(parts);
}

}  // namespace

Emissions ForwardEmissions(const NerModel& model, const Batch& batch,
                           const EmbeddingStore& store, Mode mode, Rng& rng) {
  const ModelConfig& config = model.config();
  if (batch.size() == 0) throw Error("forward_emissions: empty batch");
  if (store.dim() != config.word_dim) {
    throw Error("forward_emissions: embeddings have dimension " +
                std::to_string(store.dim()) + ", model expects " +
                std::to_string(config.word_dim));
  }
  const CharMode char_mode = config.char_mode();
  if (char_mode != CharMode::kNone && batch.char_mode != char_mode) {
    throw Error("forward_emissions: variant " +
                std::string(CharVariantName(config.char_variant)) + " needs " +
                std::string(CharModeName(char_mode)) + " char sequences, batch has " +
                std::string(CharModeName(batch.char_mode)));
  }

  std::vector<std::vector<Var>> cnn_features;
  Var rnn_features;
  std::vector<std::vector<size_t>> rnn_rows;
  if (char_mode == CharMode::kCnn) {
    cnn_features = CnnCharFeatures(model, batch);
  } else if (char_mode == CharMode::kRnn) {
    std::tie(rnn_features, rnn_rows) = RnnCharFeatures(model, batch);
  }
  const size_t char_dim = config.CharFeatureDim();

  std::vector<Var> inputs;
  inputs.reserve(batch.max_len);
  for (size_t t = 0; t < batch.max_len; ++t) {
    Var x = WordAndCasing(batch, store, t, config.word_dim);
    if (char_mode != CharMode::kNone) {
      std::vector<Var> rows;
      for (size_t b = 0; b < batch.size(); ++b) {
        if (t >= batch.sentences[b]->size()) {
          rows.push_back(Constant(Tensor({1, char_dim})));
        } else if (char_mode == CharMode::kCnn) {
          rows.push_back(Stack(std::span(&cnn_features[b][t], 1)));
        } else {
          size_t r = rnn_rows[b][t];
          rows.push_back(Slice(rnn_features, 0, r, r + 1));
        }
      }
      const Var parts[] = {x, Stack(rows)};
      x = Concat(parts);
    }
    inputs.push_back(Dropout(x, config.dropout, mode, rng));
  }

  BiLstmResult tokens =
      BiLstmSequence(ModelAccess::TokenForward(model), ModelAccess::TokenBackward(model),
                     inputs, batch.mask, RecurrentDropout{config.dropout, mode, &rng});
  Emissions em;
  for (const Var& h : tokens.outputs) {
    em.steps.push_back(Dense(ModelAccess::DenseW(model), ModelAccess::DenseB(model), h));
  }
  for (const Sentence* s : batch.sentences) em.lengths.push_back(s->size());
  return em;
}

Var BatchLoss(const NerModel& model, const Batch& batch, const EmbeddingStore& store,
              Level level, Mode mode, Rng& rng, double normalizer) {
  Emissions em = ForwardEmissions(model, batch, store, mode, rng);
  const LabelSchema& schema = model.schema();
  std::vector<Var> losses;
  for (size_t b = 0; b < batch.size(); ++b) {
    const Sentence& s = *batch.sentences[b];
    const auto& labels = level == Level::kInner ? s.inner_labels : s.outer_labels;
    if (labels.size() != s.size()) {
      throw Error("sentence '" + s.source_id + "' has no " +
                  (level == Level::kInner ? "inner" : "outer") + " labels");
    }
    std::vector<int> gold;
    for (const std::string& l : labels) gold.push_back(schema.Index(l));
    losses.push_back(CrfNegativeLogLikelihood(model.crf(), em.Sentence(b), gold));
  }
  Var total = Sum(Stack(losses));
  return Mul(total, Constant(Tensor::Scalar(1.0 / normalizer)));
}

std::vector<std::vector<std::string>> PredictBatch(const NerModel& model,
                                                   const EmbeddingStore& store,
                                                   std::span<const Sentence> sentences,
                                                   size_t batch_size) {
  NoGradGuard no_grad;
  Rng unused(0);
  std::vector<std::vector<std::string>> out(sentences.size());
  for (Batch& batch : SequentialBatches(sentences, batch_size)) {
    AttachChars(batch, model.char_vocab(), model.config().char_mode());
    Emissions em = ForwardEmissions(model, batch, store, Mode::kEval, unused);
    CrfScores crf = CrfScores::Of(model.crf());
    for (size_t b = 0; b < batch.size(); ++b) {
      ViterbiResult best = ViterbiDecode(crf, em.Sentence(b)->value);
      auto& labels = out[batch.ids[b]];
      for (int y : best.path) labels.push_back(model.schema().Label(y));
    }
  }
  return out;
}

std::vector<std::string> Predict(const NerModel& model, const EmbeddingStore& store,
                                 std::span<const std::string> tokens) {
  if (tokens.empty()) throw Error("predict: empty token list");
  for (const std::string& t : tokens) {
    if (t.empty()) throw Error("predict: empty token");
  }
  Sentence s = Sentence::FromTexts(tokens);
  return PredictBatch(model, store, std::span(&s, 1)).front();
}

// Serialization.

namespace {

constexpr std::string_view kMagic = "MNER1";

void AppendFloats(std::string& out, const Tensor& t) {
  for (double v : t.values()) {
    uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(v));
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
  }
}

}  // namespace

void SaveModel(const NerModel& model, const std::string& path) {
  nlohmann::json header;
  header["config"] = ModelConfigToJson(model.config());
  header["char_vocab"] = model.char_vocab().chars();
  nlohmann::json params = nlohmann::json::array();
  std::string payload;
  for (const auto& p : model.Parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value->value.shape()}});
    AppendFloats(payload, p.value->value);
  }
  header["params"] = std::move(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file '" + path + "'");
  out << kMagic << '\n' << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing model file '" + path + "'");
}

NerModel LoadModel(const std::string& path, const LabelSchema* expected_schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model file '" + path + "'");
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) {
    if (magic.size() == kMagic.size() && magic.starts_with("MNER")) {
      throw Error(path + ": unsupported model format version '" + magic.substr(4) +
                  "' (expected 1)");
    }
    throw Error(path + ": not a model file (expected magic MNER1)");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) throw Error(path + ": truncated model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": corrupt model header: " + e.what());
  }
  ModelConfig config;
  try {
    config = ModelConfigFromJson(header.at("config"), ModelConfig{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": corrupt model header: " + e.what());
  }
  if (expected_schema && !(config.label_schema == *expected_schema)) {
    throw Error(path + ": model label schema does not match the requested schema");
  }
  CharVocab vocab = CharVocab::FromChars(header.at("char_vocab").get<std::vector<std::string>>());
  NerModel model = NerModel::Build(config, std::move(vocab), 0);

  auto params = model.Parameters();
  const auto& declared = header.at("params");
  if (declared.size() != params.size()) {
    throw Error(path + ": header lists " + std::to_string(declared.size()) +
                " parameters, configuration implies " + std::to_string(params.size()));
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].value->value;
    if (declared[i].at("name").get<std::string>() != params[i].name ||
        declared[i].at("shape").get<Shape>() != t.shape()) {
      throw Error(path + ": parameter " + std::to_string(i) + " does not match " +
                  params[i].name + " " + ShapeString(t.shape()));
    }
    if (offset + 4 * t.size() > payload.size()) {
      throw Error(path + ": truncated model file (parameter " + params[i].name + ")");
    }
    for (size_t k = 0; k < t.size(); ++k) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<uint32_t>(static_cast<unsigned char>(payload[offset + b]))
                << (8 * b);
      }
      t[k] = static_cast<double>(std::bit_cast<float>(bits));
      offset += 4;
    }
  }
  if (offset != payload.size()) {
    throw Error(path + ": " + std::to_string(payload.size() - offset) +
                " unexpected trailing bytes");
  }
  return model;
}

}  // namespace gner
