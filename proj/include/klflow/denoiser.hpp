// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "klflow/simplex.hpp"
#include "klflow/transformer.hpp"

namespace klflow {

/// Maps a noisy state to S x V logits of the per-position clean-token marginals.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual int vocab_size() const = 0;
    /// Largest sequence length accepted by predict.
    virtual int max_seq_len() const = 0;
    virtual LogitMatrix predict(const SequenceState& state) const = 0;
};

/// Single-precision transformer behind the Denoiser interface.
class TransformerDenoiser final : public Denoiser {
public:
    TransformerDenoiser(TransformerConfig cfg, ParamSet<float> params);

    int vocab_size() const override { return net_.config().vocab_size; }
    int max_seq_len() const override { return net_.config().max_seq_len; }
    LogitMatrix predict(const SequenceState& state) const override;

    const ParamSet<float>& params() const noexcept { return params_; }

private:
    Transformer<float> net_;
    ParamSet<float> params_;
};

/// Histogram estimator for tiny instances.
///
/// Each position of x_t is reduced to its tempered point
/// q = softmax(center(l_t) / (1 - t)), binned on a simplex grid of
/// `grid_resolution` cells per axis, and t is reduced to
/// kappa = 1 - exp(-D t / (1 - t)) with D = log_high - log_low, binned into
/// `time_buckets` intervals. The cell key concatenates the bins of all
/// positions with the time bin; each cell keeps per-position target counts.
class TabularDenoiser final : public Denoiser {
public:
    struct Config {
        int vocab_size = 3;
        int seq_len = 1;
        int grid_resolution = 16;
        int time_buckets = 16;
        double beta = 0.01;
        /// Added to every count when reading a row out; 0 gives the raw frequencies.
        double pseudo_count = 0.0;

        void validate() const;
    };

    explicit TabularDenoiser(Config cfg);

    int vocab_size() const override { return cfg_.vocab_size; }
    int max_seq_len() const override { return cfg_.seq_len; }
    /// Log-probabilities, floored at -1000; unvisited cells give uniform rows.
    LogitMatrix predict(const SequenceState& state) const override;

    void observe(const SequenceState& state, std::span<const int> targets);
    /// Probability rows for the cell containing `state`.
    LogitMatrix probabilities(const SequenceState& state) const;

    std::vector<int> cell_of(const SequenceState& state) const;
    std::size_t num_cells() const noexcept { return table_.size(); }
    std::size_t num_observations() const noexcept { return observations_; }
    const Config& config() const noexcept { return cfg_; }

private:
    Config cfg_;
    double gap_ = 0.0;
    std::map<std::vector<int>, std::vector<double>> table_;
    std::size_t observations_ = 0;
};

/// Per-position cross-entropy of `model` against `targets` (mean over positions).
double denoiser_cross_entropy(const Denoiser& model, const SequenceState& state, std::span<const int> targets);

}  // namespace klflow
