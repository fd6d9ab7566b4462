// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "klflow/errors.hpp"

namespace klflow {

void SmoothingConfig::validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta", "must lie in (0, 1)");
    if (vocab_size < 2) throw ConfigError("vocab_size", "must be at least 2");
    if (denominator < 0.0) throw ConfigError("smoothing_denominator", "must be positive");
}

double SmoothingConfig::log_high() const { return std::log(1.0 - beta + uniform_mass()); }

double SmoothingConfig::log_low() const { return std::log(uniform_mass()); }

void SequenceState::validate() const {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("state time must lie in [0, 1]");
    if (logits.rows() < 1 || logits.cols() < 2) throw InputError("state must be S x V with V >= 2");
    if (!logits.allFinite()) throw NumericError("state logits are not finite");
}

double log_sum_exp(std::span<const double> values) {
    const double m = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - m);
    return m + std::log(acc);
}

void softmax_inplace(std::span<double> values) {
    const double m = *std::max_element(values.begin(), values.end());
    double acc = 0.0;
    for (double& v : values) {
        v = std::exp(v - m);
        acc += v;
    }
    for (double& v : values) v /= acc;
}

int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

int sample_categorical(std::span<const double> weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InputError("categorical weights must have positive mass");
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = static_cast<int>(i);
        if (u < acc) return last_positive;
    }
    return last_positive;
}

SimplexPoint softmax(const LogitVector& l) {
    SimplexPoint x{l.logits};
    softmax_inplace(x.probs);
    return x;
}

LogitVector log_point(const SimplexPoint& x) {
    LogitVector l;
    l.logits.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > kMinProbability)) {
            throw DomainError("log of non-interior simplex point (entry " + std::to_string(i) +
                              " = " + std::to_string(x[i]) + ")");
        }
        l.logits.push_back(std::log(x[i]));
    }
    return l;
}

LogitVector canonicalize(LogitVector l) {
    const double lse = log_sum_exp(l.logits);
    for (double& v : l.logits) v -= lse;
    return l;
}

LogitMatrix row_softmax(const LogitMatrix& logits) {
    LogitMatrix out = logits;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        softmax_inplace(std::span<double>(out.row(r).data(), static_cast<std::size_t>(out.cols())));
    }
    return out;
}

std::vector<int> decode_argmax(const LogitMatrix& logits) {
    std::vector<int> tokens(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        tokens[static_cast<std::size_t>(r)] =
            argmax(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
    }
    return tokens;
}

namespace {

void check_token(int token_id, int vocab_size) {
    if (token_id < 0 || token_id >= vocab_size) {
        throw InputError("token id " + std::to_string(token_id) + " outside [0, " +
                         std::to_string(vocab_size) + ")");
    }
}

void check_same_size(std::size_t a, std::size_t b) {
    if (a != b) throw InputError("simplex arguments differ in dimension");
}

}  // namespace

SimplexPoint smooth_onehot(int token_id, const SmoothingConfig& cfg) {
    cfg.validate();
    check_token(token_id, cfg.vocab_size);
    const double low = cfg.uniform_mass();
    SimplexPoint x{std::vector<double>(static_cast<std::size_t>(cfg.vocab_size), low)};
    x.probs[static_cast<std::size_t>(token_id)] = 1.0 - cfg.beta + low;
    return x;
}

LogitVector smooth_onehot_logits(int token_id, const SmoothingConfig& cfg) {
    cfg.validate();
    check_token(token_id, cfg.vocab_size);
    LogitVector l{std::vector<double>(static_cast<std::size_t>(cfg.vocab_size), cfg.log_low())};
    l.logits[static_cast<std::size_t>(token_id)] = cfg.log_high();
    return l;
}

SimplexPoint sample_dirichlet_uniform(int vocab_size, Rng& rng) {
    if (vocab_size < 2) throw InputError("Dirichlet sample needs V >= 2");
    SimplexPoint x{std::vector<double>(static_cast<std::size_t>(vocab_size))};
    double total = 0.0;
    for (double& v : x.probs) {
        v = rng.exponential();
        total += v;
    }
    for (double& v : x.probs) v /= total;
    return x;
}

LogitVector sample_dirichlet_uniform_logits(int vocab_size, Rng& rng) {
    if (vocab_size < 2) throw InputError("Dirichlet sample needs V >= 2");
    LogitVector l{std::vector<double>(static_cast<std::size_t>(vocab_size))};
    double total = 0.0;
    for (double& v : l.logits) {
        v = rng.exponential();
        total += v;
    }
    const double log_total = std::log(total);
    for (double& v : l.logits) {
        if (!(v > kMinProbability)) throw DomainError("Dirichlet draw underflowed");
        v = std::log(v) - log_total;
    }
    return l;
}

SimplexPoint kl_geodesic(const SimplexPoint& x0, const SimplexPoint& x1, double t) {
    check_same_size(x0.size(), x1.size());
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("geodesic time must lie in [0, 1]");
    return softmax(logit_interp(log_point(x0), log_point(x1), t));
}

LogitVector logit_interp(const LogitVector& l0, const LogitVector& l1, double t) {
    check_same_size(l0.size(), l1.size());
    LogitVector out{std::vector<double>(l0.size())};
    for (std::size_t i = 0; i < l0.size(); ++i) out.logits[i] = (1.0 - t) * l0[i] + t * l1[i];
    return out;
}

std::vector<double> path_velocity_simplex(const SimplexPoint& x_t, const LogitVector& l0,
                                          const LogitVector& l1) {
    check_same_size(x_t.size(), l0.size());
    check_same_size(l0.size(), l1.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        if (!(x_t[i] > kMinProbability)) throw DomainError("path velocity at a non-interior point");
    }
    // (diag(x) - x x^T) d = x * (d - <x, d>)
    double mean = 0.0;
    for (std::size_t i = 0; i < x_t.size(); ++i) mean += x_t[i] * (l1[i] - l0[i]);
    std::vector<double> v(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) v[i] = x_t[i] * ((l1[i] - l0[i]) - mean);
    return v;
}

LogitVector logit_velocity(const LogitVector& l0, const LogitVector& l1) {
    check_same_size(l0.size(), l1.size());
    LogitVector out{std::vector<double>(l0.size())};
    for (std::size_t i = 0; i < l0.size(); ++i) out.logits[i] = l1[i] - l0[i];
    return out;
}

}  // namespace klflow
