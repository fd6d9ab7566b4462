// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <string>

#include "klflow/config_io.hpp"
#include "klflow/errors.hpp"

using namespace klflow;
using nlohmann::json;

namespace {

std::string error_of(const json& j, auto target) {
    try {
        from_json(j, target);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(ConfigIo, TransformerRoundTrip) {
    TransformerConfig c;
    c.layers = 3;
    c.heads = 2;
    c.embed_dim = 24;
    c.vocab_size = 11;
    c.max_seq_len = 9;
    c.mlp_ratio = 2;
    c.time_conditioning = TimeConditioning::time_token;
    const json j = c;
    EXPECT_EQ(j.at("time_conditioning"), "time_token");
    EXPECT_EQ(j.get<TransformerConfig>(), c);
}

TEST(ConfigIo, TrainRoundTrip) {
    TrainConfig c;
    c.batch_size = 5;
    c.steps = 77;
    c.lr = 1.5e-3;
    c.seed = 1ull << 40;
    c.weight_by_inverse_time = true;
    c.adam_beta2 = 0.999;
    const json j = c;
    TrainConfig back;
    from_json(j, back);
    EXPECT_EQ(json(back), j);
    EXPECT_EQ(back.seed, 1ull << 40);
}

TEST(ConfigIo, InferenceRoundTrip) {
    InferenceConfig c;
    c.scheme = Scheme::semi_sampling;
    c.steps = 64;
    c.top_k = 3;
    c.t_star = 0.5;
    c.smoothing_denominator = 12.0;
    const json j = c;
    EXPECT_EQ(j.at("scheme"), "semi_sampling");
    InferenceConfig back;
    from_json(j, back);
    EXPECT_EQ(json(back), j);
}

TEST(ConfigIo, MissingFieldsKeepCurrentValues) {
    TrainConfig c;
    c.steps = 123;
    from_json(json{{"lr", 0.01}}, c);
    EXPECT_EQ(c.steps, 123);
    EXPECT_DOUBLE_EQ(c.lr, 0.01);

    InferenceConfig inf;
    from_json(json::object(), inf);
    EXPECT_EQ(inf.scheme, Scheme::hybrid);
    EXPECT_DOUBLE_EQ(inf.t_star, 0.28);
}

TEST(ConfigIo, UnknownKeyNamed) {
    const auto msg = error_of(json{{"stepz", 3}}, TrainConfig{});
    EXPECT_NE(msg.find("stepz"), std::string::npos);
    EXPECT_FALSE(error_of(json{{"depth", 3}}, TransformerConfig{}).empty());
}

TEST(ConfigIo, WrongTypeNamed) {
    EXPECT_NE(error_of(json{{"steps", "many"}}, InferenceConfig{}).find("steps"), std::string::npos);
    EXPECT_NE(error_of(json{{"weight_by_inverse_time", "yes"}}, TrainConfig{}).find("weight_by_inverse_time"),
              std::string::npos);
    EXPECT_FALSE(error_of(json::array(), TrainConfig{}).empty());
}

TEST(ConfigIo, BadEnumNamesField) {
    EXPECT_NE(error_of(json{{"scheme", "euler"}}, InferenceConfig{}).find("scheme"), std::string::npos);
    EXPECT_NE(error_of(json{{"t_distribution", "beta"}}, TrainConfig{}).find("t_distribution"), std::string::npos);
    EXPECT_FALSE(error_of(json{{"time_conditioning", "film"}}, TransformerConfig{}).empty());
}
