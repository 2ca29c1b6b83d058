#pragma once

#include <json.hpp>

#include "fsep/embed.hpp"
#include "fsep/train.hpp"

namespace fsep::detail {

nlohmann::json spec_to_json(const EmbedderSpec& spec);
EmbedderSpec spec_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

}  // namespace fsep::detail
