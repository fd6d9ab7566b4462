// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/config_io.hpp"

#include <initializer_list>
#include <string>

#include "klflow/errors.hpp"

namespace klflow {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool found = false;
        for (const char* k : known) found = found || it.key() == k;
        if (!found) throw ConfigError(it.key(), "unknown field");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key, "has the wrong type");
    }
}

std::string read_string(const json& j, const char* key, const std::string& fallback) {
    std::string s = fallback;
    read(j, key, s);
    return s;
}

}  // namespace

void to_json(json& j, const TransformerConfig& c) {
    j = {{"layers", c.layers},
         {"heads", c.heads},
         {"embed_dim", c.embed_dim},
         {"vocab_size", c.vocab_size},
         {"max_seq_len", c.max_seq_len},
         {"mlp_ratio", c.mlp_ratio},
         {"time_conditioning", to_string(c.time_conditioning)}};
}

void from_json(const json& j, TransformerConfig& c) {
    check_keys(j, {"layers", "heads", "embed_dim", "vocab_size", "max_seq_len", "mlp_ratio", "time_conditioning"});
    read(j, "layers", c.layers);
    read(j, "heads", c.heads);
    read(j, "embed_dim", c.embed_dim);
    read(j, "vocab_size", c.vocab_size);
    read(j, "max_seq_len", c.max_seq_len);
    read(j, "mlp_ratio", c.mlp_ratio);
    c.time_conditioning = parse_time_conditioning(read_string(j, "time_conditioning", to_string(c.time_conditioning)));
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"steps", c.steps},
         {"lr", c.lr},
         {"lr_warmup_steps", c.lr_warmup_steps},
         {"beta", c.beta},
         {"t_distribution", to_string(c.t_distribution)},
         {"seed", c.seed},
         {"checkpoint_every", c.checkpoint_every},
         {"eval_every", c.eval_every},
         {"threads", c.threads},
         {"weight_by_inverse_time", c.weight_by_inverse_time},
         {"grad_clip", c.grad_clip},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps}};
}

void from_json(const json& j, TrainConfig& c) {
    check_keys(j, {"batch_size", "steps", "lr", "lr_warmup_steps", "beta", "t_distribution", "seed",
                   "checkpoint_every", "eval_every", "threads", "weight_by_inverse_time", "grad_clip", "adam_beta1",
                   "adam_beta2", "adam_eps"});
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "lr", c.lr);
    read(j, "lr_warmup_steps", c.lr_warmup_steps);
    read(j, "beta", c.beta);
    c.t_distribution = parse_time_distribution(read_string(j, "t_distribution", to_string(c.t_distribution)));
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "eval_every", c.eval_every);
    read(j, "threads", c.threads);
    read(j, "weight_by_inverse_time", c.weight_by_inverse_time);
    read(j, "grad_clip", c.grad_clip);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_eps", c.adam_eps);
}

void to_json(json& j, const InferenceConfig& c) {
    j = {{"scheme", to_string(c.scheme)},
         {"steps", c.steps},
         {"step_size", c.step_size},
         {"beta", c.beta},
         {"top_k", c.top_k},
         {"t_star", c.t_star},
         {"seed", c.seed},
         {"smoothing_denominator", c.smoothing_denominator}};
}

void from_json(const json& j, InferenceConfig& c) {
    check_keys(j, {"scheme", "steps", "step_size", "beta", "top_k", "t_star", "seed", "smoothing_denominator"});
    c.scheme = parse_scheme(read_string(j, "scheme", to_string(c.scheme)));
    read(j, "steps", c.steps);
    read(j, "step_size", c.step_size);
    read(j, "beta", c.beta);
    read(j, "top_k", c.top_k);
    read(j, "t_star", c.t_star);
    read(j, "seed", c.seed);
    read(j, "smoothing_denominator", c.smoothing_denominator);
}

}  // namespace klflow
