// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// JSON forms of the configuration structs. Reading overlays the fields that
// are present onto the target, so defaults survive for omitted keys; unknown
// keys and type mismatches raise ConfigError naming the key.

#pragma once

#include <nlohmann/json.hpp>

#include "klflow/inference.hpp"
#include "klflow/trainer.hpp"
#include "klflow/transformer.hpp"

namespace klflow {

void to_json(nlohmann::json& j, const TransformerConfig& c);
void from_json(const nlohmann::json& j, TransformerConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const InferenceConfig& c);
void from_json(const nlohmann::json& j, InferenceConfig& c);

}  // namespace klflow
