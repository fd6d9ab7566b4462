// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Corpus-level metrics for generated text: pooled unigram entropy, a
// perplexity proxy under an in-repo order-2 Markov reference, and total
// variation between empirical n-gram distributions.

#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/corpus.hpp"

namespace klflow {

struct EvalReport {
    double entropy_nats = 0.0;
    double ref_perplexity = 0.0;
    double unigram_tv = 0.0;
    double bigram_tv = 0.0;
    std::size_t num_sequences = 0;

    nlohmann::json to_json() const;
};

/// Shannon entropy (nats) of the pooled token frequencies; pad positions skipped.
double unigram_entropy(const CorpusStore& corpus);

/// Empirical distribution of n consecutive unpadded tokens within sequences,
/// flattened over V^n cells (first token most significant).
std::vector<double> empirical_ngram(const CorpusStore& corpus, int n, int vocab_size);

/// Half the L1 distance.
double total_variation(std::span<const double> p, std::span<const double> q);

/// TV between the order-n empirical distributions of two corpora (n = 1 or 2).
double distribution_tv(const CorpusStore& generated, const CorpusStore& real, int order, int vocab_size);

/// Order-2 Markov model with add-one smoothing. The first token of a
/// sequence is scored by the unigram model and the second by the bigram
/// model; later tokens use the trigram model.
class MarkovReference {
public:
    static MarkovReference fit(const CorpusStore& corpus, int vocab_size);

    int vocab_size() const noexcept { return vocab_size_; }
    /// Natural-log probability of token `next` given up to two previous tokens.
    double log_prob(std::span<const int> history, int next) const;
    /// Sum of log-probabilities over unpadded tokens and their count.
    std::pair<double, std::size_t> log_likelihood(const CorpusStore& corpus) const;
    /// exp(mean negative log-likelihood per token).
    double perplexity(const CorpusStore& corpus) const;

private:
    int vocab_size_ = 0;
    std::vector<double> unigram_;
    std::unordered_map<std::uint64_t, double> bigram_;
    std::unordered_map<std::uint64_t, double> bigram_context_;
    std::unordered_map<std::uint64_t, double> trigram_;
    std::unordered_map<std::uint64_t, double> trigram_context_;
    double token_total_ = 0.0;
};

EvalReport evaluate(const CorpusStore& generated, const CorpusStore& real, const MarkovReference& ref);

}  // namespace klflow
