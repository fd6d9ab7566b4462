// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "klflow/errors.hpp"

namespace klflow {

TransformerDenoiser::TransformerDenoiser(TransformerConfig cfg, ParamSet<float> params)
    : net_(std::move(cfg)), params_(std::move(params)) {}

LogitMatrix TransformerDenoiser::predict(const SequenceState& state) const {
    return net_.forward(params_, state).cast<double>();
}

void TabularDenoiser::Config::validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size", "must be at least 2");
    if (seq_len < 1) throw ConfigError("seq_len", "must be positive");
    if (grid_resolution < 1) throw ConfigError("grid_resolution", "must be positive");
    if (time_buckets < 1) throw ConfigError("time_buckets", "must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta", "must lie in (0, 1)");
    if (!(pseudo_count >= 0.0)) throw ConfigError("pseudo_count", "must be nonnegative");
}

TabularDenoiser::TabularDenoiser(Config cfg) : cfg_(cfg) {
    cfg_.validate();
    SmoothingConfig s{cfg_.beta, cfg_.vocab_size, 0.0};
    gap_ = s.log_high() - s.log_low();
}

std::vector<int> TabularDenoiser::cell_of(const SequenceState& state) const {
    if (state.seq_len() != cfg_.seq_len || state.vocab_size() != cfg_.vocab_size) {
        throw InputError("tabular denoiser expects a " + std::to_string(cfg_.seq_len) + " x " +
                         std::to_string(cfg_.vocab_size) + " state");
    }
    const int v = cfg_.vocab_size;
    const int r = cfg_.grid_resolution;
    std::vector<int> key;
    key.reserve(static_cast<std::size_t>(cfg_.seq_len * (v - 1) + 1));
    std::vector<double> q(static_cast<std::size_t>(v));
    for (int k = 0; k < cfg_.seq_len; ++k) {
        const auto row = state.logits.row(k);
        if (state.t >= 1.0) {
            std::fill(q.begin(), q.end(), 0.0);
            q[static_cast<std::size_t>(argmax(std::span<const double>(row.data(), q.size())))] = 1.0;
        } else {
            const double inv = 1.0 / (1.0 - state.t);
            for (int i = 0; i < v; ++i) q[static_cast<std::size_t>(i)] = row(i) * inv;
            softmax_inplace(q);
        }
        for (int i = 0; i + 1 < v; ++i) {
            key.push_back(std::min(r - 1, static_cast<int>(q[static_cast<std::size_t>(i)] * r)));
        }
    }
    const double kappa = state.t >= 1.0 ? 1.0 : -std::expm1(-gap_ * state.t / (1.0 - state.t));
    key.push_back(std::min(cfg_.time_buckets - 1, static_cast<int>(kappa * cfg_.time_buckets)));
    return key;
}

void TabularDenoiser::observe(const SequenceState& state, std::span<const int> targets) {
    if (static_cast<int>(targets.size()) != cfg_.seq_len) throw InputError("target length mismatch");
    const auto key = cell_of(state);
    auto& counts = table_[key];
    const auto v = static_cast<std::size_t>(cfg_.vocab_size);
    if (counts.empty()) counts.assign(v * static_cast<std::size_t>(cfg_.seq_len), 0.0);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        if (targets[k] < 0 || targets[k] >= cfg_.vocab_size) throw InputError("target token out of range");
        counts[k * v + static_cast<std::size_t>(targets[k])] += 1.0;
    }
    ++observations_;
}

LogitMatrix TabularDenoiser::probabilities(const SequenceState& state) const {
    const auto key = cell_of(state);
    const int v = cfg_.vocab_size;
    LogitMatrix p = LogitMatrix::Constant(cfg_.seq_len, v, 1.0 / v);
    const auto it = table_.find(key);
    if (it == table_.end()) return p;
    for (int k = 0; k < cfg_.seq_len; ++k) {
        double total = 0.0;
        for (int i = 0; i < v; ++i) total += it->second[static_cast<std::size_t>(k * v + i)] + cfg_.pseudo_count;
        if (total <= 0.0) continue;
        for (int i = 0; i < v; ++i) {
            p(k, i) = (it->second[static_cast<std::size_t>(k * v + i)] + cfg_.pseudo_count) / total;
        }
    }
    return p;
}

LogitMatrix TabularDenoiser::predict(const SequenceState& state) const {
    LogitMatrix out = probabilities(state);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out.data()[i] = out.data()[i] > 0.0 ? std::max(-1000.0, std::log(out.data()[i])) : -1000.0;
    }
    return out;
}

double denoiser_cross_entropy(const Denoiser& model, const SequenceState& state, std::span<const int> targets) {
    return denoising_loss(model.predict(state), targets);
}

}  // namespace klflow
