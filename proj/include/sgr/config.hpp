// SPDX-License-Identifier: Apache-2.0
//
// JSON mapping of the configuration structs. Field names mirror the C++
// members; readers start from a base value and override only the keys present.
#pragma once

#include <json.hpp>

#include "sgr/model.hpp"
#include "sgr/preprocess.hpp"

namespace sgr {

struct TrainConfig;

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, ModelSpec base = {});

nlohmann::json to_json(const PreprocessConfig& config);
PreprocessConfig preprocess_config_from_json(const nlohmann::json& j, PreprocessConfig base = {});

nlohmann::json to_json(const AugmentSpec& spec);
AugmentSpec augment_spec_from_json(const nlohmann::json& j, AugmentSpec base = {});

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base);

}  // namespace sgr
