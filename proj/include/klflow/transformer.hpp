// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Bidirectional transformer denoiser with explicit forward and backward passes.
//
// The network reads a SequenceState (S x V logits at time t), embeds each
// row's probability vector through the token embedding matrix, adds learned
// absolute positions, runs pre-norm transformer blocks without a causal mask
// and emits S x V logits over the clean token at every position.
//
// Time enters through one of three strategies:
//   layer_norm_modulation  per-block shift/scale after each normalization,
//                          produced from the time vector (zero-initialized);
//   time_token             the time vector is prepended as an extra position
//                          and stripped from the output;
//   additive               the time vector is added to every position.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "klflow/simplex.hpp"

namespace klflow {

enum class TimeConditioning { layer_norm_modulation, time_token, additive };

std::string to_string(TimeConditioning strategy);
/// Throws ConfigError for unknown names.
TimeConditioning parse_time_conditioning(std::string_view name);

struct TransformerConfig {
    int layers = 4;
    int heads = 4;
    int embed_dim = 128;
    int vocab_size = 256;
    int max_seq_len = 64;
    int mlp_ratio = 4;
    TimeConditioning time_conditioning = TimeConditioning::layer_norm_modulation;

    void validate() const;
    int head_dim() const { return embed_dim / heads; }

    bool operator==(const TransformerConfig&) const = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
};

/// Every tensor the configuration requires, in canonical order.
std::vector<ParamSpec> parameter_inventory(const TransformerConfig& cfg);

template <typename T>
struct ParamSet {
    std::vector<ParamSpec> specs;
    std::vector<Mat<T>> tensors;

    static ParamSet zeros(const TransformerConfig& cfg);

    std::size_t size() const noexcept { return tensors.size(); }
    std::size_t scalar_count() const;
    /// Index of a named tensor, or -1.
    int find(std::string_view name) const;

    void set_zero();
    /// this += scale * other
    void add_scaled(const ParamSet& other, T scale);
    double squared_norm() const;
    bool all_finite() const;

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        out.specs = specs;
        out.tensors.reserve(tensors.size());
        for (const auto& m : tensors) out.tensors.push_back(m.template cast<U>());
        return out;
    }
};

enum class InitMode {
    /// Output head and modulation weights start at zero.
    standard,
    /// Every tensor random; used by gradient checks.
    dense,
};

template <typename T>
ParamSet<T> init_params(const TransformerConfig& cfg, std::uint64_t seed,
                        InitMode mode = InitMode::standard);

/// Sinusoidal embedding of t (scaled to [0, 1000]) with `dim` features.
std::vector<double> sinusoidal_time_embedding(double t, int dim);

template <typename T>
class Transformer {
public:
    explicit Transformer(TransformerConfig cfg);

    const TransformerConfig& config() const noexcept { return cfg_; }

    /// S x V output logits. Throws InputError on shape mismatch and
    /// NumericError naming the layer on non-finite activations.
    Mat<T> forward(const ParamSet<T>& params, const SequenceState& state) const;

    /// Row k of the input embedding: softmax(state row k) * E + pos[k].
    Mat<T> input_embed(const ParamSet<T>& params, const SequenceState& state) const;

    /// Masked mean cross-entropy of the output against `targets`; adds
    /// `weight` times its gradient into `grad`. Positions with mask 0 are
    /// excluded; an empty mask means all positions count.
    T loss_and_gradient(const ParamSet<T>& params, const SequenceState& state,
                        std::span<const int> targets, std::span<const std::uint8_t> mask,
                        ParamSet<T>& grad, T weight = T(1)) const;

private:
    struct Index;
    struct Cache;

    Mat<T> run_forward(const ParamSet<T>& params, const SequenceState& state, Cache* cache) const;
    void check_params(const ParamSet<T>& params) const;

    TransformerConfig cfg_;
    std::vector<int> layer_base_;
    int tail_base_ = 0;
};

/// Masked mean of -log softmax(row)[target]; rows with mask 0 are skipped.
double denoising_loss(const LogitMatrix& logits, std::span<const int> targets,
                      std::span<const std::uint8_t> mask = {});
/// d loss / d logits for denoising_loss.
LogitMatrix denoising_loss_grad(const LogitMatrix& logits, std::span<const int> targets,
                                std::span<const std::uint8_t> mask = {});

extern template class Transformer<float>;
extern template class Transformer<double>;
extern template struct ParamSet<float>;
extern template struct ParamSet<double>;

}  // namespace klflow
