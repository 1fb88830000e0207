#include "gner/json_io.h"

#include <set>

namespace gner {

nlohmann::json ModelConfigToJson(const ModelConfig& config) {
  return {
      {"char_variant", CharVariantName(config.char_variant)},
      {"word_dim", config.word_dim},
      {"casing_dim", config.casing_dim},
      {"char_emb_dim", config.char_emb_dim},
      {"char_cnn_filters", config.char_cnn_filters},
      {"char_lstm_cells", config.char_lstm_cells},
      {"token_lstm_cells", config.token_lstm_cells},
      {"dropout", config.dropout},
      {"label_schema", config.label_schema.entity_classes()},
      {"embedding_kind", EmbeddingKindName(config.embedding_kind)},
  };
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig base) {
  if (!j.is_object()) throw Error("model config must be an object");
  static const std::set<std::string> known = {
      "char_variant", "word_dim",         "casing_dim", "char_emb_dim",
      "char_cnn_filters", "char_lstm_cells", "token_lstm_cells", "dropout",
      "label_schema", "embedding_kind"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("unknown model config key '" + key + "'");
  }
  ModelConfig c = std::move(base);
  if (j.contains("char_variant")) {
    c.char_variant = CharVariantFromName(j["char_variant"].get<std::string>());
  }
  auto size_field = [&](const char* key, size_t& field) {
    if (j.contains(key)) field = j[key].get<size_t>();
  };
  size_field("word_dim", c.word_dim);
  size_field("casing_dim", c.casing_dim);
  size_field("char_emb_dim", c.char_emb_dim);
  size_field("char_cnn_filters", c.char_cnn_filters);
  size_field("char_lstm_cells", c.char_lstm_cells);
  size_field("token_lstm_cells", c.token_lstm_cells);
  if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
  if (j.contains("label_schema")) {
    const auto& s = j["label_schema"];
    c.label_schema = s.is_string() ? LabelSchema::ByName(s.get<std::string>())
                                   : LabelSchema(s.get<std::vector<std::string>>());
  }
  if (j.contains("embedding_kind")) {
    c.embedding_kind = EmbeddingKindFromName(j["embedding_kind"].get<std::string>());
  }
  return c;
}

}  // namespace gner
