#ifndef GNER_SERVICE_H_
#define GNER_SERVICE_H_

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gner/model.h"

namespace gner {

// B/I-Xderiv -> B/I-MISC, B/I-Xpart -> O, everything else unchanged.
// Accepts labels of the GermEval and combined schemas, so mapping twice is
// the same as mapping once.
std::string MapLabelCombined(std::string_view label);
// Maps outer and inner labels of every sentence.
void MapSentencesCombined(std::vector<Sentence>& sentences);

struct RegisteredModel {
  std::string name;
  std::shared_ptr<const NerModel> model;
  std::shared_ptr<const EmbeddingStore> store;
};

// Name -> model and embedding binding. Filled before serving, read-only
// afterwards.
class ModelRegistry {
 public:
  void Add(std::string name, NerModel model, std::shared_ptr<const EmbeddingStore> store);
  // Loads the model file and the embedding file. Embedding files already
  // loaded for another entry are shared.
  void Load(const std::string& name, const std::string& model_path,
            const std::string& embedding_path);
  // {"models": [{"name", "model", "embeddings"}, ...]}
  static ModelRegistry FromConfigFile(const std::string& path);

  const RegisteredModel* Find(std::string_view name) const;
  std::vector<std::string> Names() const;
  bool empty() const { return models_.empty(); }

 private:
  std::map<std::string, RegisteredModel, std::less<>> models_;
  std::map<std::string, std::shared_ptr<const EmbeddingStore>> stores_;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// POST /ner body -> reply. 400 for malformed requests or empty sentences,
// 404 with the model list for unknown models.
HttpReply HandleNerRequest(const ModelRegistry& registry, std::string_view body);
HttpReply HandleModelsRequest(const ModelRegistry& registry);

class NerServer {
 public:
  explicit NerServer(const ModelRegistry& registry);
  ~NerServer();
  NerServer(const NerServer&) = delete;
  NerServer& operator=(const NerServer&) = delete;

  // Throws when the address cannot be bound. Port 0 picks a free port.
  int Bind(const std::string& host, int port);
  // Blocks until Stop().
  void Listen();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gner

#endif  // GNER_SERVICE_H_
