// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Geometry of the probability simplex under the KL geodesic.
//
// A categorical distribution x over V tokens is carried in logit space
// l = log x (defined up to an additive constant). The KL geodesic between
// x0 and x1 is the straight line in logit space,
//
//     x_t = softmax((1 - t) * l0 + t * l1),
//
// so every path, velocity and update in this library is computed on logits
// and only materialized as probabilities at the boundaries.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

#include "klflow/rng.hpp"

namespace klflow {

/// Row-major S x V matrix of per-position logits.
using LogitMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Smallest value accepted as the argument of a logarithm.
inline constexpr double kMinProbability = 1e-300;

struct SimplexPoint {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

struct LogitVector {
    std::vector<double> logits;

    std::size_t size() const noexcept { return logits.size(); }
    double operator[](std::size_t i) const { return logits[i]; }
};

struct SmoothingConfig {
    double beta = 0.01;
    int vocab_size = 2;
    /// Denominator of the uniform smoothing mass; 0 means vocab_size.
    double denominator = 0.0;

    void validate() const;

    double uniform_mass() const { return beta / (denominator > 0.0 ? denominator : vocab_size); }
    /// log of the probability assigned to the hot token.
    double log_high() const;
    /// log of the probability assigned to every other token.
    double log_low() const;
};

/// S x V logits plus the flow time t.
struct SequenceState {
    LogitMatrix logits;
    double t = 0.0;

    int seq_len() const noexcept { return static_cast<int>(logits.rows()); }
    int vocab_size() const noexcept { return static_cast<int>(logits.cols()); }
    void validate() const;
};

double log_sum_exp(std::span<const double> values);
void softmax_inplace(std::span<double> values);
/// Index of the largest entry; ties resolve to the lowest index.
int argmax(std::span<const double> values);
/// Inverse-CDF draw from nonnegative weights (normalized internally).
int sample_categorical(std::span<const double> weights, Rng& rng);

SimplexPoint softmax(const LogitVector& l);
/// Elementwise log; throws DomainError on any entry <= kMinProbability.
LogitVector log_point(const SimplexPoint& x);
/// Shift so that the logits are exact log-probabilities.
LogitVector canonicalize(LogitVector l);

LogitMatrix row_softmax(const LogitMatrix& logits);
/// Per-row argmax of a logit matrix.
std::vector<int> decode_argmax(const LogitMatrix& logits);

/// (1 - beta) * delta_token + (beta / V) * 1.
SimplexPoint smooth_onehot(int token_id, const SmoothingConfig& cfg);
/// log of smooth_onehot, computed without materializing probabilities.
LogitVector smooth_onehot_logits(int token_id, const SmoothingConfig& cfg);

/// Draw from Dirichlet(1, ..., 1), the uniform distribution on the simplex.
SimplexPoint sample_dirichlet_uniform(int vocab_size, Rng& rng);
/// Log of a Dirichlet(1, ..., 1) draw; same RNG consumption as the point form.
LogitVector sample_dirichlet_uniform_logits(int vocab_size, Rng& rng);

SimplexPoint kl_geodesic(const SimplexPoint& x0, const SimplexPoint& x1, double t);
LogitVector logit_interp(const LogitVector& l0, const LogitVector& l1, double t);

/// d x_t / dt = (diag(x_t) - x_t x_t^T)(l1 - l0), tangent to the simplex.
std::vector<double> path_velocity_simplex(const SimplexPoint& x_t, const LogitVector& l0,
                                          const LogitVector& l1);
/// d l_t / dt = l1 - l0.
LogitVector logit_velocity(const LogitVector& l0, const LogitVector& l1);

}  // namespace klflow
