// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container.
//
// File layout:
//   bytes 0..7   magic "KLFMCKPT"
//   bytes 8..11  little-endian u32 manifest length L
//   next L bytes JSON manifest:
//                  {"tensors": [{"name", "dtype": "f32"|"f64", "shape",
//                                "byte_offset", "byte_length"}, ...],
//                   "metadata": {...}}
//   remainder    concatenated little-endian tensor payload; offsets are
//                relative to the start of the payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/transformer.hpp"

namespace klflow {

inline constexpr char kCheckpointMagic[8] = {'K', 'L', 'F', 'M', 'C', 'K', 'P', 'T'};

struct NamedTensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::variant<std::vector<float>, std::vector<double>> values;

    std::string dtype() const { return values.index() == 0 ? "f32" : "f64"; }
    std::size_t element_count() const;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    nlohmann::json metadata = nlohmann::json::object();

    const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Reads and validates the whole file before returning; throws FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(const ParamSet<T>& params, nlohmann::json metadata);

/// Extract parameters for `cfg`; missing tensors or wrong shapes raise a
/// FormatError naming the tensor. Stored precision is converted to T.
template <typename T>
ParamSet<T> params_from_checkpoint(const Checkpoint& ckpt, const TransformerConfig& cfg);

}  // namespace klflow
