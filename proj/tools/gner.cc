// Command-line front end: train, evaluate, predict, serve, split-oov.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gner/json_io.h"
#include "gner/model.h"
#include "gner/service.h"
#include "gner/training.h"

namespace {

using gner::Error;
using gner::Sentence;

void RequireFile(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error("file not found: " + path);
}

// Reads a corpus. CoNLL files are converted from IOB to BIO; with the
// combined schema GermEval labels go through the -deriv/-part mapping.
std::vector<Sentence> LoadCorpus(const std::string& path, const std::string& format,
                                 const std::string& schema) {
  RequireFile(path);
  std::vector<Sentence> out;
  if (format == "germeval") {
    out = gner::ParseGermEval(path, gner::LabelSchema::GermEval());
    if (schema == "combined") gner::MapSentencesCombined(out);
  } else if (format == "conll") {
    out = gner::ParseConll03(path, schema == "combined" ? gner::LabelSchema::Combined()
                                                        : gner::LabelSchema::Conll());
    gner::ConvertIobToBio(out);
  } else {
    throw Error("unknown corpus format '" + format + "' (expected germeval or conll)");
  }
  return out;
}

// "path" or [{"path": ..., "format": ...}, ...]
std::vector<Sentence> LoadCorpora(const nlohmann::json& spec, const std::string& format,
                                  const std::string& schema, const std::string& key) {
  std::vector<Sentence> out;
  if (spec.is_string()) return LoadCorpus(spec.get<std::string>(), format, schema);
  if (!spec.is_array()) throw Error("config: \"" + key + "\" must be a path or a list");
  for (const auto& item : spec) {
    auto part = LoadCorpus(item.at("path").get<std::string>(),
                           item.value("format", format), schema);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

gner::EmbeddingStore LoadEmbeddings(const std::string& path, gner::EmbeddingKind kind) {
  RequireFile(path);
  return gner::EmbeddingStore::Load(path, kind);
}

gner::Level ParseLevel(const std::string& level) {
  if (level == "outer") return gner::Level::kOuter;
  if (level == "inner") return gner::Level::kInner;
  throw Error("unknown level '" + level + "'");
}

std::vector<std::vector<std::string>> Gold(std::span<const Sentence> data, gner::Level level) {
  std::vector<std::vector<std::string>> out;
  for (const Sentence& s : data) {
    out.push_back(level == gner::Level::kInner ? s.inner_labels : s.outer_labels);
  }
  return out;
}

void WriteText(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

int RunTrain(const std::string& config_path, const std::string& output,
             const std::string& report_path, std::optional<uint64_t> seed) {
  RequireFile(config_path);
  std::ifstream in(config_path);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(config_path + ": " + e.what());
  }
  const std::string format = cfg.value("format", "germeval");
  const std::string schema = cfg.value("schema", format == "conll" ? "conll" : "germeval");
  gner::ModelConfig model_config;
  model_config.label_schema = gner::LabelSchema::ByName(schema);
  if (cfg.contains("model")) model_config = gner::ModelConfigFromJson(cfg["model"], model_config);
  if (cfg.contains("embedding_kind")) {
    model_config.embedding_kind =
        gner::EmbeddingKindFromName(cfg["embedding_kind"].get<std::string>());
  }
  gner::TrainConfig train_config;
  if (cfg.contains("training")) {
    train_config = gner::TrainConfigFromJson(cfg["training"], train_config);
  }
  if (seed) train_config.seed = *seed;

  auto train = LoadCorpora(cfg.at("train"), format, schema, "train");
  auto dev = LoadCorpora(cfg.at("dev"), format, schema, "dev");
  if (cfg.contains("limit_train")) {
    size_t limit = cfg["limit_train"].get<size_t>();
    if (train.size() > limit) train.resize(limit);
  }
  auto store = LoadEmbeddings(cfg.at("embeddings").get<std::string>(),
                              model_config.embedding_kind);
  model_config.word_dim = store.dim();

  auto model = gner::NerModel::Build(model_config, gner::CharVocab::Build(train),
                                     train_config.seed);
  std::cerr << "training on " << train.size() << " sentences, " << dev.size()
            << " dev sentences\n";
  auto result = gner::TrainTwoStage(model, train, dev, store, train_config,
                                    [](const gner::EpochRecord& e) {
                                      std::cerr << "stage " << e.stage << " epoch " << e.epoch
                                                << " loss " << e.mean_loss << " dev_f1 "
                                                << e.dev_f1 << " (" << e.seconds << " s)\n";
                                    });
  gner::SaveModel(result.model, output);
  if (!report_path.empty()) WriteText(report_path, result.report.ToJsonLines());
  return 0;
}

struct EvalOptions {
  std::string gold, pred, format = "germeval", schema, level = "outer";
  std::string model, inner_model, embeddings, output;
  bool strict = false, average = false, table = false;
};

int RunEvaluate(const EvalOptions& o) {
  const std::string schema =
      o.schema.empty() ? (o.format == "conll" ? "conll" : "germeval") : o.schema;
  const auto stray = o.strict ? gner::StrayInside::kStrict : gner::StrayInside::kLenient;
  auto gold = LoadCorpus(o.gold, o.format, schema);
  std::vector<std::vector<std::string>> pred_outer, pred_inner;
  if (!o.pred.empty()) {
    auto pred = LoadCorpus(o.pred, o.format, schema);
    pred_outer = Gold(pred, gner::Level::kOuter);
    pred_inner = Gold(pred, gner::Level::kInner);
  } else if (!o.model.empty()) {
    RequireFile(o.model);
    auto model = gner::LoadModel(o.model);
    auto store = LoadEmbeddings(o.embeddings, model.config().embedding_kind);
    auto predicted = gner::PredictBatch(model, store, gold);
    if (o.level == "inner") {
      pred_inner = predicted;
    } else {
      pred_outer = predicted;
    }
    if (!o.inner_model.empty()) {
      RequireFile(o.inner_model);
      auto inner = gner::LoadModel(o.inner_model);
      auto inner_store = LoadEmbeddings(o.embeddings, inner.config().embedding_kind);
      pred_inner = gner::PredictBatch(inner, inner_store, gold);
    }
  } else {
    throw Error("evaluate needs --pred or --model");
  }

  gner::EvalReport report;
  if (o.level == "combined") {
    if (pred_inner.size() != gold.size() || pred_outer.size() != gold.size()) {
      throw Error("combined evaluation needs outer and inner predictions");
    }
    report = gner::GermEvalCombined(
        Gold(gold, gner::Level::kOuter), Gold(gold, gner::Level::kInner), pred_outer,
        pred_inner,
        o.average ? gner::CombineMode::kAverageF1 : gner::CombineMode::kMicroPooled);
  } else {
    gner::Level level = ParseLevel(o.level);
    report = gner::EvaluateLabels(Gold(gold, level),
                                  level == gner::Level::kInner ? pred_inner : pred_outer,
                                  stray);
  }
  WriteText(o.output, o.table ? report.ToConllTable() : report.ToText());
  return 0;
}

int RunPredict(const std::string& model_path, const std::string& embeddings) {
  RequireFile(model_path);
  auto model = gner::LoadModel(model_path);
  auto store = LoadEmbeddings(embeddings, model.config().embedding_kind);
  std::string line;
  while (std::getline(std::cin, line)) {
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string t; words >> t;) tokens.push_back(t);
    if (tokens.empty()) {
      std::cout << '\n';
      continue;
    }
    auto labels = gner::Predict(model, store, tokens);
    for (size_t i = 0; i < labels.size(); ++i) std::cout << (i ? " " : "") << labels[i];
    std::cout << '\n';
  }
  return 0;
}

gner::NerServer* g_server = nullptr;

void StopServer(int) {
  if (g_server) g_server->Stop();
}

int RunServe(const std::string& registry_path, const std::vector<std::string>& models,
             const std::string& embeddings, std::string host, int port) {
  gner::ModelRegistry registry;
  if (!registry_path.empty()) {
    RequireFile(registry_path);
    registry = gner::ModelRegistry::FromConfigFile(registry_path);
  }
  for (const std::string& spec : models) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) throw Error("--model expects name=path, got '" + spec + "'");
    if (embeddings.empty()) throw Error("--model needs --embeddings");
    RequireFile(spec.substr(eq + 1));
    RequireFile(embeddings);
    registry.Load(spec.substr(0, eq), spec.substr(eq + 1), embeddings);
  }
  if (registry.empty()) throw Error("serve: no models registered");
  gner::NerServer server(registry);
  int bound = server.Bind(host, port);
  g_server = &server;
  std::signal(SIGINT, StopServer);
  std::signal(SIGTERM, StopServer);
  std::cerr << "serving " << registry.Names().size() << " model(s) on " << host << ":"
            << bound << "\n";
  server.Listen();
  g_server = nullptr;
  return 0;
}

int RunSplitOov(const std::string& data, const std::string& format,
                const std::string& schema, const std::string& embeddings,
                const std::string& kind, const std::string& out_prefix) {
  auto test = LoadCorpus(data, format, schema);
  auto store = LoadEmbeddings(embeddings, gner::EmbeddingKindFromName(kind));
  auto split = gner::SplitOovIv(test, store);
  std::cout << "iv " << split.in_vocabulary.size() << "\noov "
            << split.out_of_vocabulary.size() << "\n";
  if (!out_prefix.empty()) {
    auto write = [&](const std::string& suffix, const std::vector<Sentence>& part) {
      WriteText(out_prefix + suffix,
                format == "conll" ? gner::FormatConll(part) : gner::FormatGermEval(part));
    };
    write(".iv", split.in_vocabulary);
    write(".oov", split.out_of_vocabulary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural named-entity recognition: train, evaluate, predict, serve"};
  app.require_subcommand(1);

  std::string config, output = "model.mner", report;
  std::optional<uint64_t> seed;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config file");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--output", output, "Model file to write");
  train->add_option("--report", report, "Training report (JSON lines)");
  train->add_option("--seed", seed, "Override the config seed");

  EvalOptions eval;
  auto* evaluate = app.add_subcommand("evaluate", "Chunk precision, recall and F1");
  evaluate->add_option("--gold", eval.gold, "Gold corpus")->required();
  evaluate->add_option("--pred", eval.pred, "Predicted corpus in the same format");
  evaluate->add_option("--model", eval.model, "Model to predict with instead of --pred");
  evaluate->add_option("--inner-model", eval.inner_model, "Inner-level model (combined)");
  evaluate->add_option("--embeddings", eval.embeddings, "Embedding file for --model");
  evaluate->add_option("--format", eval.format, "germeval or conll");
  evaluate->add_option("--schema", eval.schema, "germeval, conll or combined");
  evaluate->add_option("--level", eval.level, "outer, inner or combined");
  evaluate->add_flag("--strict", eval.strict, "Discard chunks that start with I-");
  evaluate->add_flag("--average", eval.average, "Combined score as mean of level F1s");
  evaluate->add_flag("--table", eval.table, "conlleval-style table output");
  evaluate->add_option("--output", eval.output, "Report file (default stdout)");

  std::string model_path, embeddings;
  auto* predict = app.add_subcommand("predict", "Label sentences read from stdin");
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--embeddings", embeddings, "Embedding file")->required();

  std::string registry_path, host = "127.0.0.1";
  int port = 8080;
  if (const char* h = std::getenv("GNER_HOST")) host = h;
  if (const char* p = std::getenv("GNER_PORT")) port = std::atoi(p);
  std::vector<std::string> serve_models;
  auto* serve = app.add_subcommand("serve", "Run the JSON inference service");
  serve->add_option("--registry", registry_path, "Registry config file");
  serve->add_option("--model", serve_models, "name=path, repeatable");
  serve->add_option("--embeddings", embeddings, "Embedding file for --model entries");
  serve->add_option("--host", host, "Bind address (env GNER_HOST)");
  serve->add_option("--port", port, "Port (env GNER_PORT)");

  std::string data, format = "germeval", schema = "germeval", kind = "fasttext", prefix;
  auto* split = app.add_subcommand("split-oov", "Split a test set by vocabulary coverage");
  split->add_option("--data", data, "Test corpus")->required();
  split->add_option("--format", format, "germeval or conll");
  split->add_option("--schema", schema, "Label schema");
  split->add_option("--embeddings", embeddings, "Embedding file")->required();
  split->add_option("--kind", kind, "Embedding kind");
  split->add_option("--output-prefix", prefix, "Writes <prefix>.iv and <prefix>.oov");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*train) return RunTrain(config, output, report, seed);
    if (*evaluate) return RunEvaluate(eval);
    if (*predict) return RunPredict(model_path, embeddings);
    if (*serve) return RunServe(registry_path, serve_models, embeddings, host, port);
    if (*split) return RunSplitOov(data, format, schema, embeddings, kind, prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
