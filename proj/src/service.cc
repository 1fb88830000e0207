#include "gner/service.h"

#include <chrono>
#include <fstream>

#include "httplib.h"

namespace gner {

std::string MapLabelCombined(std::string_view label) {
  static const LabelSchema germeval = LabelSchema::GermEval();
  static const LabelSchema combined = LabelSchema::Combined();
  if (!germeval.Contains(label) && !combined.Contains(label)) {
    throw Error("cannot map unknown label '" + std::string(label) + "'");
  }
  ParsedTag tag = ParseTag(label);
  if (tag.prefix == 'O') return "O";
  if (tag.entity_class.ends_with("part")) return "O";
  if (tag.entity_class.ends_with("deriv")) return std::string(1, tag.prefix) + "-MISC";
  return std::string(label);
}

void MapSentencesCombined(std::vector<Sentence>& sentences) {
  for (Sentence& s : sentences) {
    for (auto& l : s.outer_labels) l = MapLabelCombined(l);
    for (auto& l : s.inner_labels) l = MapLabelCombined(l);
  }
}

void ModelRegistry::Add(std::string name, NerModel model,
                        std::shared_ptr<const EmbeddingStore> store) {
  if (!store) throw Error("model '" + name + "' has no embedding store");
  if (store->dim() != model.config().word_dim) {
    throw Error("model '" + name + "' expects " + std::to_string(model.config().word_dim) +
                "-dimensional embeddings, store has " + std::to_string(store->dim()));
  }
  RegisteredModel entry{name, std::make_shared<const NerModel>(std::move(model)),
                        std::move(store)};
  models_[std::move(name)] = std::move(entry);
}

void ModelRegistry::Load(const std::string& name, const std::string& model_path,
                         const std::string& embedding_path) {
  NerModel model = LoadModel(model_path);
  auto& store = stores_[embedding_path];
  if (!store) {
    store = std::make_shared<const EmbeddingStore>(
        EmbeddingStore::Load(embedding_path, model.config().embedding_kind));
  }
  Add(name, std::move(model), store);
}

ModelRegistry ModelRegistry::FromConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read registry config '" + path + "'");
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  ModelRegistry registry;
  if (!config.contains("models") || !config["models"].is_array()) {
    throw Error(path + ": expected a \"models\" array");
  }
  for (const auto& m : config["models"]) {
    registry.Load(m.at("name").get<std::string>(), m.at("model").get<std::string>(),
                  m.at("embeddings").get<std::string>());
  }
  if (registry.empty()) throw Error(path + ": no models configured");
  return registry;
}

const RegisteredModel* ModelRegistry::Find(std::string_view name) const {
  auto it = models_.find(name);
  return it == models_.end() ? nullptr : &it->second;
}

std::vector<std::string> ModelRegistry::Names() const {
  std::vector<std::string> names;
  for (const auto& [name, entry] : models_) names.push_back(name);
  return names;
}

namespace {

HttpReply Fail(int status, std::string message) {
  return {status, {{"error", std::move(message)}}};
}

}  // namespace

HttpReply HandleNerRequest(const ModelRegistry& registry, std::string_view body) {
  const auto start = std::chrono::steady_clock::now();
  nlohmann::json request = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (request.is_discarded()) return Fail(400, "request body is not valid JSON");
  if (!request.is_object()) return Fail(400, "request must be a JSON object");
  if (!request.contains("model") || !request["model"].is_string()) {
    return Fail(400, "\"model\" must be a string");
  }
  if (!request.contains("sentences") || !request["sentences"].is_array()) {
    return Fail(400, "\"sentences\" must be a list of token lists");
  }
  std::vector<std::vector<std::string>> sentences;
  for (size_t i = 0; i < request["sentences"].size(); ++i) {
    const auto& s = request["sentences"][i];
    if (!s.is_array()) {
      return Fail(400, "sentence " + std::to_string(i) + " must be a list of tokens");
    }
    if (s.empty()) return Fail(400, "sentence " + std::to_string(i) + " is empty");
    std::vector<std::string> tokens;
    for (const auto& t : s) {
      if (!t.is_string() || t.get_ref<const std::string&>().empty()) {
        return Fail(400, "sentence " + std::to_string(i) +
                             " contains a token that is not a non-empty string");
      }
      tokens.push_back(t.get<std::string>());
    }
    sentences.push_back(std::move(tokens));
  }

  const std::string name = request["model"].get<std::string>();
  const RegisteredModel* entry = registry.Find(name);
  if (!entry) {
    HttpReply reply = Fail(404, "unknown model '" + name + "'");
    reply.body["available"] = registry.Names();
    return reply;
  }
  nlohmann::json labels = nlohmann::json::array();
  try {
    for (const auto& tokens : sentences) {
      labels.push_back(Predict(*entry->model, *entry->store, tokens));
    }
  } catch (const Error& e) {
    return Fail(500, e.what());
  }
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                        start)
                  .count();
  return {200, {{"model", name}, {"labels", std::move(labels)}, {"timing_ms", ms}}};
}

HttpReply HandleModelsRequest(const ModelRegistry& registry) {
  nlohmann::json models = nlohmann::json::array();
  for (const std::string& name : registry.Names()) {
    const RegisteredModel* m = registry.Find(name);
    models.push_back({{"name", name},
                      {"char_variant", CharVariantName(m->model->config().char_variant)},
                      {"labels", m->model->schema().labels()}});
  }
  return {200, {{"models", std::move(models)}}};
}

struct NerServer::Impl {
  const ModelRegistry& registry;
  httplib::Server server;

  explicit Impl(const ModelRegistry& r) : registry(r) {
    auto send = [](httplib::Response& res, const HttpReply& reply) {
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    };
    server.Post("/ner", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, HandleNerRequest(registry, req.body));
    });
    server.Get("/models", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, HandleModelsRequest(registry));
    });
    server.Get("/health", [send](const httplib::Request&, httplib::Response& res) {
      send(res, {200, {{"status", "ok"}}});
    });
  }
};

NerServer::NerServer(const ModelRegistry& registry)
    : impl_(std::make_unique<Impl>(registry)) {}

NerServer::~NerServer() { Stop(); }

int NerServer::Bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                        : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void NerServer::Listen() { impl_->server.listen_after_bind(); }

void NerServer::Stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace gner
