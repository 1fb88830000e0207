#ifndef GNER_JSON_IO_H_
#define GNER_JSON_IO_H_

#include "json.hpp"

#include "gner/model.h"

namespace gner {

nlohmann::json ModelConfigToJson(const ModelConfig& config);
// Keys absent from `j` keep the value from `base`. Unknown keys are errors.
ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig base);

}  // namespace gner

#endif  // GNER_JSON_IO_H_
