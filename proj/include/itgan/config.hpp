#pragma once

#include <nlohmann/json.hpp>

#include "itgan/losses.hpp"
#include "itgan/nn.hpp"
#include "itgan/trainer.hpp"

namespace itgan {

// JSON field names follow the struct members exactly. Parsing starts from
// defaults and rejects unknown keys, so a partial object is an override.

nlohmann::json to_json(const ArchConfig& a);
nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const LossReport& r);

void merge_json(const nlohmann::json& j, ArchConfig& a);
void merge_json(const nlohmann::json& j, LossWeights& w);
void merge_json(const nlohmann::json& j, TrainConfig& c);
LossReport report_from_json(const nlohmann::json& j);

}  // namespace itgan
