// Acceptance run: one PASS / FAIL / SKIP line per criterion. Criteria that
// need the public corpora or embeddings read their locations from the
// environment and are skipped when those are absent:
//   NER_GERMEVAL_DIR    NER-de-{train,dev,test}.tsv
//   NER_CONLL_DIR       deu.train, deu.testa, deu.testb (.utf8 variants too)
//   NER_FASTTEXT_MODEL  fastText .bin (e.g. cc.de.300.bin)
//   NER_EMBEDDINGS      optional pre-converted FTXT1 store for the above
//   NER_RUN_FULL=1      enables the full-scale run (days on one core)

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "gner/autodiff.h"
#include "gner/crf.h"
#include "gner/evaluation.h"
#include "gner/fasttext_bin.h"
#include "gner/layers.h"
#include "gner/model.h"
#include "gner/service.h"
#include "gner/training.h"
#include "json.hpp"
#include "fasttext_fixture.h"
#include "test_util.h"
#include "toy_model.h"
// After Eigen: resolv.h defines _res.
#include "httplib.h"

namespace fs = std::filesystem;
using namespace gner;
using gner::testing::DataPath;
using gner::testing::ReadColumns;
using nlohmann::json;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::optional<std::string> Env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

// First existing file among `names` inside `dir`.
std::optional<std::string> FindFile(const std::string& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    fs::path p = fs::path(dir) / n;
    if (fs::exists(p)) return p.string();
  }
  return std::nullopt;
}

Tensor Uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// ---------------------------------------------------------------- 1

Outcome CrfOracle() {
  auto t0 = Clock::now();
  Rng rng(20240601);
  double worst = 0.0;
  size_t mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    size_t T = 1 + rng() % 6, L = 1 + rng() % 5;
    CrfParams p;
    p.transitions = Parameter(Uniform({L, L}, rng, -2, 2));
    p.start = Parameter(Uniform({L}, rng, -2, 2));
    p.end = Parameter(Uniform({L}, rng, -2, 2));
    Tensor em = Uniform({T, L}, rng, -2, 2);
    auto s = CrfScores::Of(p);
    worst = std::max(worst, std::abs(LogPartition(s, em) - BruteForceLogZ(s, em)));
    if (ViterbiDecode(s, em).path != BruteForceBestPath(s, em)) ++mismatches;
  }
  double secs = Seconds(t0);
  bool ok = worst <= 1e-9 && mismatches == 0 && secs < 10.0;
  return {ok ? Status::kPass : Status::kFail,
          Fmt("200 instances, max |logZ - brute| %.2e, %zu path mismatches, %.2f s", worst,
              mismatches, secs)};
}

// ---------------------------------------------------------------- 2

// Loss that keeps every output element: sum(x * fixed random weights).
Var Project(const Var& x, uint64_t seed) {
  Rng r(seed);
  return Sum(Mul(x, Constant(Uniform(x->value.shape(), r, -1, 1))));
}

Outcome GradientSuite() {
  constexpr double kEps = 1e-5;
  constexpr size_t kSamples = 80;
  const size_t word = 8, casing = 7, chars = 4, cells = 4, labels = 5, T = 6;
  Rng rng(7);
  struct Check {
    std::string name;
    std::function<Var()> loss;
    std::vector<Var> params;
  };
  std::vector<Check> checks;

  const size_t in = word + casing + chars;
  LstmParams cell = LstmParams::Init(in, cells, rng);
  Var x = Parameter(Uniform({2, in}, rng, -1, 1));
  Var h0 = Parameter(Uniform({2, cells}, rng, -1, 1));
  Var c0 = Parameter(Uniform({2, cells}, rng, -1, 1));
  checks.push_back({"lstm_step",
                    [=] {
                      auto st = LstmCellStep(cell, x, h0, c0);
                      return Add(Project(st.h, 1), Project(st.c, 2));
                    },
                    {cell.w_input, cell.w_recurrent, cell.bias, x, h0, c0}});

  LstmParams fwd = LstmParams::Init(in, cells, rng), bwd = LstmParams::Init(in, cells, rng);
  std::vector<Var> xs;
  for (size_t t = 0; t < T; ++t) xs.push_back(Parameter(Uniform({2, in}, rng, -1, 1)));
  SequenceMask mask(T, std::vector<uint8_t>{1, 1});
  for (size_t t = 4; t < T; ++t) mask[t][1] = 0;
  auto bilstm_loss = [=] {
    Rng drop(3);
    auto r = BiLstmSequence(fwd, bwd, xs, mask, {0.5, Mode::kTrain, &drop});
    Var acc = Add(Project(r.forward_final, 4), Project(r.backward_final, 5));
    for (size_t t = 0; t < T; ++t) acc = Add(acc, Project(r.outputs[t], 10 + t));
    return acc;
  };
  std::vector<Var> bilstm_params = {fwd.w_input, fwd.w_recurrent, fwd.bias,
                                    bwd.w_input, bwd.w_recurrent, bwd.bias};
  bilstm_params.insert(bilstm_params.end(), xs.begin(), xs.end());
  checks.push_back({"bilstm_sequence", bilstm_loss, bilstm_params});

  Conv1dParams conv = Conv1dParams::Init(3, chars, 4, rng);
  Var positions = Parameter(Uniform({T + 2, chars}, rng, -1, 1));
  checks.push_back({"conv1d_maxpool", [=] { return Project(Conv1dGlobalMaxPool(conv, positions), 6); },
                    {conv.kernels, conv.bias, positions}});

  Var dw = Parameter(GlorotUniform(2 * cells, labels, rng));
  Var db = Parameter(Uniform({labels}, rng, -1, 1));
  Var dx = Parameter(Uniform({T, 2 * cells}, rng, -1, 1));
  checks.push_back({"dense", [=] { return Project(Dense(dw, db, dx), 7); }, {dw, db, dx}});

  EmbeddingTable table = EmbeddingTable::Init(10, chars, rng);
  table.rows->value = Uniform({10, chars}, rng, -1, 1);
  const std::vector<int> ids = {3, 0, 7, 3, 9, 1};
  checks.push_back({"embedding_lookup",
                    [=] { return Project(Stack(EmbedLookup(table, ids)), 8); },
                    {table.rows}});

  CrfParams crf;
  crf.transitions = Parameter(Uniform({labels, labels}, rng, -2, 2));
  crf.start = Parameter(Uniform({labels}, rng, -2, 2));
  crf.end = Parameter(Uniform({labels}, rng, -2, 2));
  Var em = Parameter(Uniform({T, labels}, rng, -2, 2));
  const std::vector<int> gold = {0, 1, 2, 0, 3, 4};
  checks.push_back({"crf_nll", [=] { return CrfNegativeLogLikelihood(crf, em, gold); },
                    {crf.transitions, crf.start, crf.end, em}});

  // End to end, every char variant, one padded batch with T = 6.
  std::vector<Sentence> data = {
      gner::testing::Labelled({"Anna", "wohnt", "seit", "1998", "in", "Köln"},
                              {"B-PER", "O", "O", "O", "O", "B-LOC"}),
      gner::testing::Labelled({"Bad", "Ems", "ist", "klein"}, {"B-LOC", "I-LOC", "O", "O"}),
  };
  auto store = std::make_shared<EmbeddingStore>(gner::testing::ToyStore(data, word, 1, {"klein"}));
  for (CharVariant v : {CharVariant::kNone, CharVariant::kCnn, CharVariant::kCnn3,
                        CharVariant::kBiLstm, CharVariant::kBiLstm2}) {
    ModelConfig mc = gner::testing::ToyConfig(v, word);
    mc.char_emb_dim = chars;
    mc.char_cnn_filters = cells;
    mc.char_lstm_cells = cells;
    mc.token_lstm_cells = cells;
    auto model = std::make_shared<NerModel>(NerModel::Build(mc, CharVocab::Build(data), 9));
    gner::testing::SpreadCharTable(*model, 5);
    auto batch = std::make_shared<Batch>(MakeBatch({&data[0], &data[1]}));
    if (mc.char_mode() != CharMode::kNone) AttachChars(*batch, model->char_vocab(), mc.char_mode());
    checks.push_back({"end_to_end_" + std::string(CharVariantName(v)),
                      [model, batch, store] {
                        Rng drop(11);
                        return BatchLoss(*model, *batch, *store, Level::kOuter, Mode::kTrain,
                                         drop, 2.0);
                      },
                      model->ParameterVars()});
  }

  double worst = 0.0;
  std::string worst_name, failures;
  size_t min_checked = kSamples;
  for (size_t i = 0; i < checks.size(); ++i) {
    auto r = CheckGradient(checks[i].loss, checks[i].params, kEps, kSamples, 100 + i);
    min_checked = std::min(min_checked, r.checked);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = checks[i].name;
    }
    if (r.max_relative_error > 1e-4 || r.checked < 50) failures += " " + checks[i].name;
  }
  return {failures.empty() ? Status::kPass : Status::kFail,
          Fmt("%zu checks, worst rel err %.2e (%s), min sampled %zu%s", checks.size(), worst,
              worst_name.c_str(), min_checked,
              failures.empty() ? "" : (", failing:" + failures).c_str())};
}

// ---------------------------------------------------------------- 3

Outcome EvaluatorFidelity() {
  auto cols = ReadColumns(DataPath("eval_fixture.txt"));
  if (cols.size() != 2) return {Status::kFail, "eval fixture unreadable"};
  auto lenient = EvaluateLabels(cols[0], cols[1]);
  auto strict = EvaluateLabels(cols[0], cols[1], StrayInside::kStrict);
  bool ok = cols[0].size() == 20 && lenient.overall.tp == 13 && lenient.overall.fp == 10 &&
            lenient.overall.fn == 9 && lenient.precision == 13.0 / 23 &&
            lenient.recall == 13.0 / 22 &&
            std::abs(lenient.f1 - 26.0 / 45) <= 1e-15 && strict.overall.tp == 9 &&
            strict.overall.fp == 11 && strict.overall.fn == 10;
  // Zero division: nothing predicted, nothing gold.
  std::vector<std::vector<std::string>> none = {{"O", "O"}};
  auto zero = EvaluateLabels(none, none);
  ok = ok && zero.precision == 0.0 && zero.recall == 0.0 && zero.f1 == 0.0;

  auto two = ReadColumns(DataPath("combined_fixture.txt"));
  if (two.size() != 5) return {Status::kFail, "combined fixture unreadable"};
  auto pooled = GermEvalCombined(two[1], two[2], two[3], two[4]);
  bool combined_ok = pooled.overall.tp == 4 && pooled.overall.fp == 2 &&
                     pooled.overall.fn == 3 && pooled.precision == 4.0 / 6 &&
                     pooled.recall == 4.0 / 7 && std::abs(pooled.f1 - 8.0 / 13) <= 1e-15;
  return {ok && combined_ok ? Status::kPass : Status::kFail,
          Fmt("lenient P/R/F1 %.6f/%.6f/%.6f (13/23, 13/22, 26/45), strict tp/fp/fn %zu/%zu/%zu, "
              "combined P/R/F1 %.6f/%.6f/%.6f (2/3, 4/7, 8/13)",
              lenient.precision, lenient.recall, lenient.f1, strict.overall.tp,
              strict.overall.fp, strict.overall.fn, pooled.precision, pooled.recall, pooled.f1)};
}

// ---------------------------------------------------------------- 4

struct FixtureModel {
  std::optional<NerModel> model;
  std::shared_ptr<const EmbeddingStore> store;
  std::vector<Sentence> data;
};

Outcome Overfit(FixtureModel& out) {
  // The bundled 50 sentences in GermEval format stand in for the first 50
  // training sentences when the corpus is absent. Word vectors are random
  // 300-d rows: the check is about fitting, not transfer.
  std::string path = DataPath("overfit_50.tsv");
  std::string source = "bundled fixture";
  if (auto dir = Env("NER_GERMEVAL_DIR")) {
    if (auto train = FindFile(*dir, {"NER-de-train.tsv"})) {
      path = *train;
      source = "GermEval train";
    }
  }
  auto all = ParseGermEval(path);
  if (all.size() > 50) all.resize(50);
  out.data = all;
  out.store = std::make_shared<const EmbeddingStore>(gner::testing::ToyStore(all, 300, 1));

  ModelConfig mc;
  mc.char_variant = CharVariant::kBiLstm;
  NerModel model = NerModel::Build(mc, CharVocab::Build(all), 1);
  TrainConfig tc;
  NadamState state;
  Rng rng(tc.seed);
  auto t0 = Clock::now();
  double f1 = 0.0;
  size_t epoch = 0;
  while (epoch < 150 && f1 < 0.95 && Seconds(t0) < 600.0) {
    ++epoch;
    TrainEpoch(model, all, *out.store, tc, 1, epoch, state, rng);
    f1 = EvaluateModel(model, *out.store, all, Level::kOuter).f1;
  }
  double secs = Seconds(t0);
  out.model = std::move(model);
  bool ok = f1 >= 0.95 && secs < 600.0;
  return {ok ? Status::kPass : Status::kFail,
          Fmt("%s, %zu sentences, bilstm chars, training F1 %.4f after %zu epochs, %.1f s",
              source.c_str(), all.size(), f1, epoch, secs)};
}

// ------------------------------------------------------- shared data access

// Word vectors for the data-gated criteria: NER_EMBEDDINGS if given,
// otherwise NER_FASTTEXT_MODEL converted into a temporary store.
std::shared_ptr<const EmbeddingStore> LoadPublicEmbeddings(std::string& why) {
  static std::shared_ptr<const EmbeddingStore> cached;
  static std::string cached_why;
  if (cached || !cached_why.empty()) {
    why = cached_why;
    return cached;
  }
  if (auto ftxt = Env("NER_EMBEDDINGS")) {
    cached = std::make_shared<const EmbeddingStore>(EmbeddingStore::Load(
        *ftxt, ftxt->ends_with(".ftxt") ? EmbeddingKind::kFastText : EmbeddingKind::kPlain));
    return cached;
  }
  auto bin = Env("NER_FASTTEXT_MODEL");
  if (!bin || !fs::exists(*bin)) {
    cached_why = "NER_FASTTEXT_MODEL / NER_EMBEDDINGS not set";
    why = cached_why;
    return nullptr;
  }
  fs::path tmp = fs::temp_directory_path() / "gner-acceptance-embeddings.ftxt";
  ConvertFastTextBin(*bin, tmp.string());
  cached = std::make_shared<const EmbeddingStore>(EmbeddingStore::LoadFastText(tmp.string()));
  fs::remove(tmp);
  return cached;
}

// ---------------------------------------------------------------- 5

Outcome AblationDirection() {
  auto dir = Env("NER_GERMEVAL_DIR");
  if (!dir) return {Status::kSkip, "data not found (NER_GERMEVAL_DIR not set)"};
  auto train_path = FindFile(*dir, {"NER-de-train.tsv"});
  auto dev_path = FindFile(*dir, {"NER-de-dev.tsv"});
  if (!train_path || !dev_path) return {Status::kSkip, "data not found (GermEval files missing)"};
  std::string why;
  auto store = LoadPublicEmbeddings(why);
  if (!store) return {Status::kSkip, "data not found (" + why + ")"};

  auto train = ParseGermEval(*train_path);
  if (train.size() > 2000) train.resize(2000);
  auto dev = ParseGermEval(*dev_path);
  std::map<CharVariant, double> mean_f1;
  const CharVariant variants[] = {CharVariant::kNone, CharVariant::kCnn, CharVariant::kCnn3,
                                  CharVariant::kBiLstm, CharVariant::kBiLstm2};
  for (CharVariant v : variants) {
    double sum = 0.0;
    for (uint64_t seed : {1, 2, 3}) {
      ModelConfig mc;
      mc.char_variant = v;
      mc.word_dim = store->dim();
      TrainConfig tc;
      tc.seed = seed;
      auto initial = NerModel::Build(mc, CharVocab::Build(train), seed);
      auto result = TrainTwoStage(initial, train, dev, *store, tc);
      sum += EvaluateModel(result.model, *store, dev, Level::kOuter).f1;
    }
    mean_f1[v] = 100.0 * sum / 3.0;
  }
  bool ok = true;
  std::string detail = Fmt("dev F1 none %.2f", mean_f1[CharVariant::kNone]);
  for (CharVariant v : variants) {
    if (v == CharVariant::kNone) continue;
    detail += Fmt(", %s %.2f", std::string(CharVariantName(v)).c_str(), mean_f1[v]);
    if (mean_f1[v] < mean_f1[CharVariant::kNone] + 1.0) ok = false;
  }
  return {ok ? Status::kPass : Status::kFail, detail};
}

// ---------------------------------------------------------------- 6

// Independent fastText reader and subword composition, written against the
// byte-level loop of the reference implementation rather than this
// library's code-point n-gram extractor.
struct OracleFastText {
  int dim = 0, minn = 0, maxn = 0, bucket = 0;
  int64_t nwords = 0;
  std::map<std::string, int64_t> words;
  std::ifstream in;
  std::streamoff matrix_offset = 0;

  explicit OracleFastText(const std::string& path) : in(path, std::ios::binary) {
    auto rd = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof v); };
    int32_t magic, version, args[12];
    double t;
    rd(magic);
    rd(version);
    for (int32_t& a : args) rd(a);
    rd(t);
    dim = args[0];
    bucket = args[8];
    minn = args[9];
    maxn = args[10];
    int32_t size, nw, nl;
    int64_t ntokens, prune;
    rd(size);
    rd(nw);
    rd(nl);
    rd(ntokens);
    rd(prune);
    nwords = nw;
    for (int32_t i = 0; i < size; ++i) {
      std::string w;
      std::getline(in, w, '\0');
      int64_t count;
      int8_t type;
      rd(count);
      rd(type);
      if (type == 0) words.emplace(w, i);
    }
    uint8_t quant;
    int64_t rows, cols;
    rd(quant);
    rd(rows);
    rd(cols);
    matrix_offset = in.tellg();
  }

  static uint32_t Hash(const std::string& s) {
    uint32_t h = 2166136261u;
    for (char c : s) {
      h ^= static_cast<uint32_t>(static_cast<int8_t>(c));
      h *= 16777619u;
    }
    return h;
  }

  std::vector<double> Row(int64_t r) {
    std::vector<float> f(dim);
    in.seekg(matrix_offset + r * dim * static_cast<std::streamoff>(sizeof(float)));
    in.read(reinterpret_cast<char*>(f.data()), dim * sizeof(float));
    return {f.begin(), f.end()};
  }

  // computeSubwords from the reference implementation.
  std::vector<double> OovVector(const std::string& word) {
    std::string w = "<" + word + ">";
    std::vector<double> acc(dim, 0.0);
    size_t count = 0;
    for (size_t i = 0; i < w.size(); ++i) {
      if ((w[i] & 0xC0) == 0x80) continue;
      std::string ngram;
      for (size_t j = i, n = 1; j < w.size() && n <= static_cast<size_t>(maxn); ++n) {
        ngram.push_back(w[j++]);
        while (j < w.size() && (w[j] & 0xC0) == 0x80) ngram.push_back(w[j++]);
        if (n >= static_cast<size_t>(minn) && !(n == 1 && (i == 0 || j == w.size()))) {
          auto row = Row(nwords + Hash(ngram) % bucket);
          for (int d = 0; d < dim; ++d) acc[d] += row[d];
          ++count;
        }
      }
    }
    for (double& v : acc) v /= static_cast<double>(count);
    return acc;
  }
};

double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Made-up German-looking words; those present in the model are skipped.
std::vector<std::string> OovCandidates(size_t n) {
  const char* stems[] = {"Donau", "Kraft", "Wasser", "Grün", "Schiff", "Bahn", "Straßen",
                         "Über", "Käse", "Wald", "Rhein", "Zoll", "Glück", "Brücken"};
  const char* tails[] = {"fahrtsgesellschaft", "zeugwärterin", "kopfsalatschüssel",
                         "bäckereikette", "pförtnerhäuschen", "mützenständer",
                         "gläserspülmaschine", "ölwechseldienst"};
  Rng rng(99);
  std::vector<std::string> out;
  for (size_t i = 0; out.size() < n * 3 && i < n * 50; ++i) {
    std::string w = std::string(stems[rng() % 14]) + tails[rng() % 8] + std::to_string(rng() % 1000);
    out.push_back(w);
  }
  return out;
}

struct OovResult {
  size_t tested = 0, below = 0;
  double worst = 1.0;
};

OovResult CompareOov(const std::string& bin, const EmbeddingStore& store, size_t want) {
  OracleFastText oracle(bin);
  OovResult r;
  for (const std::string& w : OovCandidates(want)) {
    if (r.tested == want) break;
    if (oracle.words.count(w) || store.Contains(w)) continue;
    double c = Cosine(store.Lookup(w).vector, oracle.OovVector(w));
    r.worst = std::min(r.worst, c);
    r.below += c < 0.999;
    ++r.tested;
  }
  return r;
}

// The oracle against a small synthetic model, so it is exercised even
// without the public one.
std::string OracleSelfCheck() {
  gner::testing::TempDir dir;
  Rng rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> matrix((2 + 1000) * 16);
  for (float& v : matrix) v = u(rng);
  std::string bin = dir.Write("m.bin", gner::testing::FastTextBin(16, 3, 6, 1000, {"der", "Wald"}, matrix));
  ConvertFastTextBin(bin, dir.File("m.ftxt"));
  auto r = CompareOov(bin, EmbeddingStore::LoadFastText(dir.File("m.ftxt")), 100);
  return Fmt("oracle self-check on a synthetic model: %zu words, min cosine %.6f", r.tested, r.worst);
}

Outcome FastTextOov() {
  auto bin = Env("NER_FASTTEXT_MODEL");
  if (!bin || !fs::exists(*bin)) {
    return {Status::kSkip, "data not found (NER_FASTTEXT_MODEL not set); " + OracleSelfCheck()};
  }
  std::string why;
  auto store = LoadPublicEmbeddings(why);
  if (!store) return {Status::kSkip, "data not found (" + why + ")"};
  auto r = CompareOov(*bin, *store, 100);
  bool ok = r.tested == 100 && r.below == 0;
  return {ok ? Status::kPass : Status::kFail,
          Fmt("%zu OOV words, min cosine %.6f, %zu below 0.999", r.tested, r.worst, r.below)};
}

// ---------------------------------------------------------------- 7

std::map<Chunk, int> Multiset(const std::vector<Sentence>& data, bool iob) {
  std::map<Chunk, int> out;
  for (size_t i = 0; i < data.size(); ++i) {
    // IOB reading: B- only separates adjacent same-class chunks, so a chunk
    // is any maximal run of one class split at B-.
    const auto& labels = data[i].outer_labels;
    ChunkSet chunks;
    if (iob) {
      for (size_t t = 0; t < labels.size();) {
        if (labels[t] == "O") {
          ++t;
          continue;
        }
        std::string cls = labels[t].substr(2);
        size_t e = t + 1;
        while (e < labels.size() && labels[e] == "I-" + cls) ++e;
        chunks.push_back({cls, t, e, Level::kOuter});
        t = e;
      }
    } else {
      chunks = ExtractChunks(labels, Level::kOuter, StrayInside::kStrict);
    }
    for (Chunk c : chunks) {
      c.start += 1000 * i;  // keep sentences apart
      c.end += 1000 * i;
      ++out[c];
    }
  }
  return out;
}

std::string ConversionCheck(const std::string& path, bool& ok) {
  auto iob = ParseConll03(path);
  auto bio = iob;
  ConvertIobToBio(bio);
  auto twice = bio;
  ConvertIobToBio(twice);
  bool idempotent = true;
  for (size_t i = 0; i < bio.size(); ++i) idempotent &= bio[i].outer_labels == twice[i].outer_labels;
  auto before = Multiset(iob, true), after = Multiset(bio, false);
  size_t chunks = 0;
  for (const auto& [c, n] : after) chunks += n;
  ok = idempotent && before == after;
  return Fmt("%zu sentences, %zu chunks, idempotent %s, chunk multisets %s", bio.size(), chunks,
             idempotent ? "yes" : "no", before == after ? "equal" : "differ");
}

Outcome SchemaConversion() {
  bool ok = false;
  std::optional<std::string> path;
  if (auto dir = Env("NER_CONLL_DIR")) path = FindFile(*dir, {"deu.train", "deu.train.utf8", "train.txt"});
  if (!path) {
    std::string sample = ConversionCheck(DataPath("conll_sample.txt"), ok);
    return {Status::kSkip, "data not found (NER_CONLL_DIR); bundled sample: " + sample};
  }
  std::string detail = ConversionCheck(*path, ok);
  return {ok ? Status::kPass : Status::kFail, detail};
}

// ---------------------------------------------------------------- 8

Outcome ServiceRoundTrip(const FixtureModel& fixture) {
  if (!fixture.model) return {Status::kFail, "no fixture model"};
  ModelRegistry registry;
  registry.Add("fixture", *fixture.model, fixture.store);
  NerServer server(registry);
  int port = server.Bind("127.0.0.1", 0);
  std::thread loop([&] { server.Listen(); });
  httplib::Client client("127.0.0.1", port);

  std::vector<std::vector<std::string>> three = {
      {"Aachen", "liegt", "im", "Westen"}, fixture.data[0].Texts(), fixture.data[1].Texts()};
  json req = {{"model", "fixture"}, {"sentences", three}};
  auto res = client.Post("/ner", req.dump(), "application/json");
  bool same = res && res->status == 200;
  json labels = same ? json::parse(res->body)["labels"] : json();
  for (size_t i = 0; same && i < three.size(); ++i) {
    same = labels[i].get<std::vector<std::string>>() ==
           Predict(*fixture.model, *fixture.store, three[i]);
  }

  // 100 tokens in one request.
  std::vector<std::vector<std::string>> batch;
  size_t tokens = 0;
  for (size_t i = 0; tokens < 100; ++i) {
    auto t = fixture.data[i % fixture.data.size()].Texts();
    if (tokens + t.size() > 100) t.resize(100 - tokens);
    tokens += t.size();
    batch.push_back(t);
  }
  json big = {{"model", "fixture"}, {"sentences", batch}};
  client.Post("/ner", big.dump(), "application/json");  // warm-up
  auto t0 = Clock::now();
  auto big_res = client.Post("/ner", big.dump(), "application/json");
  double ms = 1000.0 * Seconds(t0);
  bool big_ok = big_res && big_res->status == 200;

  std::vector<std::string> payloads(16);
  std::vector<std::thread> threads;
  for (size_t i = 0; i < 16; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/ner", req.dump(), "application/json");
      if (r && r->status == 200) {
        auto body = json::parse(r->body);
        body.erase("timing_ms");
        payloads[i] = body.dump();
      }
    });
  }
  for (auto& t : threads) t.join();
  bool identical = !payloads[0].empty();
  for (const auto& p : payloads) identical &= p == payloads[0];

  server.Stop();
  loop.join();
  bool ok = same && big_ok && ms < 500.0 && identical;
  std::string aachen;
  if (labels.is_array()) {
    for (const auto& l : labels[0]) aachen += (aachen.empty() ? "" : " ") + l.get<std::string>();
  }
  return {ok ? Status::kPass : Status::kFail,
          Fmt("3 sentences %s offline predict (\"Aachen liegt im Westen\" -> %s), %zu-token "
              "request %.1f ms, 16 concurrent payloads %s",
              same ? "match" : "differ from", aachen.c_str(), tokens, ms,
              identical ? "identical" : "differ")};
}

// ---------------------------------------------------------------- 9

Outcome FullScale() {
  if (Env("NER_RUN_FULL") != "1") return {Status::kSkip, "long-running benchmark (set NER_RUN_FULL=1)"};
  auto gdir = Env("NER_GERMEVAL_DIR");
  auto cdir = Env("NER_CONLL_DIR");
  if (!gdir || !cdir) return {Status::kSkip, "data not found (NER_GERMEVAL_DIR / NER_CONLL_DIR)"};
  auto gtrain = FindFile(*gdir, {"NER-de-train.tsv"});
  auto gdev = FindFile(*gdir, {"NER-de-dev.tsv"});
  auto gtest = FindFile(*gdir, {"NER-de-test.tsv"});
  auto ctrain = FindFile(*cdir, {"deu.train", "deu.train.utf8"});
  auto cdev = FindFile(*cdir, {"deu.testa", "deu.testa.utf8"});
  auto ctest = FindFile(*cdir, {"deu.testb", "deu.testb.utf8"});
  if (!gtrain || !gdev || !gtest || !ctrain || !cdev || !ctest) {
    return {Status::kSkip, "data not found (corpus files missing)"};
  }
  std::string why;
  auto store = LoadPublicEmbeddings(why);
  if (!store) return {Status::kSkip, "data not found (" + why + ")"};

  auto train_one = [&](const std::vector<Sentence>& train, const std::vector<Sentence>& dev,
                       const LabelSchema& schema, Level level) {
    ModelConfig mc;
    mc.char_variant = CharVariant::kBiLstm;
    mc.word_dim = store->dim();
    mc.label_schema = schema;
    TrainConfig tc;
    tc.level = level;
    return TrainTwoStage(NerModel::Build(mc, CharVocab::Build(train), 1), train, dev, *store, tc)
        .model;
  };
  auto g_train = ParseGermEval(*gtrain), g_dev = ParseGermEval(*gdev), g_test = ParseGermEval(*gtest);
  NerModel outer = train_one(g_train, g_dev, LabelSchema::GermEval(), Level::kOuter);
  NerModel inner = train_one(g_train, g_dev, LabelSchema::GermEval(), Level::kInner);
  auto pred_outer = PredictBatch(outer, *store, g_test);
  auto pred_inner = PredictBatch(inner, *store, g_test);
  std::vector<std::vector<std::string>> gold_outer, gold_inner;
  for (const auto& s : g_test) {
    gold_outer.push_back(s.outer_labels);
    gold_inner.push_back(s.inner_labels);
  }
  double outer_f1 = 100 * EvaluateLabels(gold_outer, pred_outer).f1;
  double combined_f1 = 100 * GermEvalCombined(gold_outer, gold_inner, pred_outer, pred_inner).f1;

  auto c_train = ParseConll03(*ctrain), c_dev = ParseConll03(*cdev), c_test = ParseConll03(*ctest);
  ConvertIobToBio(c_train);
  ConvertIobToBio(c_dev);
  ConvertIobToBio(c_test);
  NerModel conll = train_one(c_train, c_dev, LabelSchema::Conll(), Level::kOuter);
  double conll_f1 = 100 * EvaluateModel(conll, *store, c_test, Level::kOuter).f1;

  bool ok = std::abs(outer_f1 - 82.19) <= 1.5 && std::abs(combined_f1 - 80.83) <= 1.5 &&
            std::abs(conll_f1 - 85.19) <= 1.5;
  return {ok ? Status::kPass : Status::kFail,
          Fmt("GermEval outer %.2f (82.19), combined %.2f (80.83), CoNLL %.2f (85.19)", outer_f1,
              combined_f1, conll_f1)};
}

}  // namespace

int main() {
  FixtureModel fixture;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "crf-oracle-equivalence", CrfOracle},
      {2, "gradient-suite", GradientSuite},
      {3, "evaluator-fidelity", EvaluatorFidelity},
      {4, "overfit-sanity", [&] { return Overfit(fixture); }},
      {5, "ablation-direction", AblationDirection},
      {6, "fasttext-oov-inference", FastTextOov},
      {7, "schema-conversion", SchemaConversion},
      {8, "service-round-trip", [&] { return ServiceRoundTrip(fixture); }},
      {9, "full-scale-reproduction", FullScale},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::printf("[%s] %d %s: %s\n", tag, c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.status == Status::kFail;
  }
  return failures == 0 ? 0 : 1;
}
