// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "klflow/errors.hpp"

namespace klflow {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::size_t NamedTensor::element_count() const {
    return std::visit([](const auto& v) { return v.size(); }, values);
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : ckpt.tensors) {
        std::int64_t expected = 1;
        for (auto d : t.shape) expected *= d;
        if (expected != static_cast<std::int64_t>(t.element_count())) {
            throw InputError("tensor " + t.name + " shape does not match its value count");
        }
        const std::uint64_t bytes = t.element_count() * (t.values.index() == 0 ? 4 : 8);
        manifest["tensors"].push_back({{"name", t.name},
                                       {"dtype", t.dtype()},
                                       {"shape", t.shape},
                                       {"byte_offset", offset},
                                       {"byte_length", bytes}});
        offset += bytes;
    }
    manifest["metadata"] = ckpt.metadata;
    const std::string header = manifest.dump();
    if (header.size() > 0xFFFFFFFFULL) throw InputError("checkpoint manifest too large");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const auto len = static_cast<std::uint32_t>(header.size());
    char len_bytes[4];
    std::memcpy(len_bytes, &len, 4);
    out.write(len_bytes, 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : ckpt.tensors) {
        std::visit(
            [&](const auto& v) {
                out.write(reinterpret_cast<const char*>(v.data()),
                          static_cast<std::streamsize>(v.size() * sizeof(v[0])));
            },
            t.values);
    }
    if (!out) throw InputError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw FormatError("bad checkpoint magic in " + path.string());
    }
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    if (12ULL + len > bytes.size()) throw FormatError("truncated checkpoint manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
        throw FormatError("checkpoint manifest lacks a tensor list");
    }
    const std::size_t payload_start = 12ULL + len;
    const std::size_t payload_size = bytes.size() - payload_start;

    Checkpoint ckpt;
    ckpt.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& entry : manifest["tensors"]) {
        NamedTensor t;
        try {
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto dtype = entry.at("dtype").get<std::string>();
            const auto offset = entry.at("byte_offset").get<std::uint64_t>();
            const auto length = entry.at("byte_length").get<std::uint64_t>();
            std::uint64_t count = 1;
            for (auto d : t.shape) {
                if (d < 0) throw FormatError("negative dimension in tensor " + t.name);
                count *= static_cast<std::uint64_t>(d);
            }
            const std::uint64_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
            if (width == 0) throw FormatError("unknown dtype '" + dtype + "' for tensor " + t.name);
            if (count * width != length) throw FormatError("byte length mismatch for tensor " + t.name);
            if (offset + length > payload_size) throw FormatError("tensor " + t.name + " runs past end of file");
            const char* src = bytes.data() + payload_start + offset;
            if (width == 4) {
                std::vector<float> v(count);
                std::memcpy(v.data(), src, length);
                t.values = std::move(v);
            } else {
                std::vector<double> v(count);
                std::memcpy(v.data(), src, length);
                t.values = std::move(v);
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed manifest entry" + (t.name.empty() ? "" : " for tensor " + t.name) +
                              ": " + e.what());
        }
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

template <typename T>
Checkpoint make_checkpoint(const ParamSet<T>& params, nlohmann::json metadata) {
    Checkpoint ckpt;
    ckpt.metadata = std::move(metadata);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& m = params.tensors[i];
        NamedTensor t;
        t.name = params.specs[i].name;
        t.shape = {m.rows(), m.cols()};
        t.values = std::vector<T>(m.data(), m.data() + m.size());
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

template <typename T>
ParamSet<T> params_from_checkpoint(const Checkpoint& ckpt, const TransformerConfig& cfg) {
    auto params = ParamSet<T>::zeros(cfg);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& spec = params.specs[i];
        const NamedTensor* t = ckpt.find(spec.name);
        if (t == nullptr) throw FormatError("checkpoint is missing tensor " + spec.name);
        if (t->shape != std::vector<std::int64_t>{spec.rows, spec.cols}) {
            throw FormatError("shape mismatch for tensor " + spec.name + ": expected [" +
                              std::to_string(spec.rows) + ", " + std::to_string(spec.cols) + "]");
        }
        auto& m = params.tensors[i];
        std::visit(
            [&](const auto& v) {
                for (std::size_t k = 0; k < v.size(); ++k) m.data()[k] = static_cast<T>(v[k]);
            },
            t->values);
    }
    return params;
}

template Checkpoint make_checkpoint<float>(const ParamSet<float>&, nlohmann::json);
template Checkpoint make_checkpoint<double>(const ParamSet<double>&, nlohmann::json);
template ParamSet<float> params_from_checkpoint<float>(const Checkpoint&, const TransformerConfig&);
template ParamSet<double> params_from_checkpoint<double>(const Checkpoint&, const TransformerConfig&);

}  // namespace klflow
