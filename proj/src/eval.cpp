// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/eval.hpp"

#include <cmath>

#include "klflow/errors.hpp"

namespace klflow {

nlohmann::json EvalReport::to_json() const {
    return {{"entropy_nats", entropy_nats},
            {"ref_perplexity", ref_perplexity},
            {"unigram_tv", unigram_tv},
            {"bigram_tv", bigram_tv},
            {"num_sequences", num_sequences}};
}

double unigram_entropy(const CorpusStore& corpus) {
    if (corpus.real_token_count() == 0) throw InputError("entropy of an empty corpus");
    std::unordered_map<int, double> counts;
    for (std::size_t i = 0; i < corpus.num_sequences(); ++i) {
        const auto seq = corpus.sequence(i);
        const auto mask = corpus.mask(i);
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (mask[k] != 0) counts[seq[k]] += 1.0;
        }
    }
    const auto total = static_cast<double>(corpus.real_token_count());
    double h = 0.0;
    for (const auto& [token, c] : counts) h -= (c / total) * std::log(c / total);
    return h;
}

std::vector<double> empirical_ngram(const CorpusStore& corpus, int n, int vocab_size) {
    if (n < 1 || n > 3) throw InputError("n-gram order must be 1, 2 or 3");
    std::size_t cells = 1;
    for (int i = 0; i < n; ++i) cells *= static_cast<std::size_t>(vocab_size);
    std::vector<double> dist(cells, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < corpus.num_sequences(); ++i) {
        const auto seq = corpus.sequence(i);
        const auto mask = corpus.mask(i);
        for (std::size_t k = 0; k + static_cast<std::size_t>(n) <= seq.size(); ++k) {
            std::size_t cell = 0;
            bool real = true;
            for (int j = 0; j < n; ++j) {
                const auto pos = k + static_cast<std::size_t>(j);
                if (mask[pos] == 0 || seq[pos] < 0 || seq[pos] >= vocab_size) {
                    real = false;
                    break;
                }
                cell = cell * static_cast<std::size_t>(vocab_size) + static_cast<std::size_t>(seq[pos]);
            }
            if (!real) continue;
            dist[cell] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) throw InputError("corpus has no complete n-grams");
    for (double& d : dist) d /= total;
    return dist;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InputError("distributions differ in support size");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

double distribution_tv(const CorpusStore& generated, const CorpusStore& real, int order, int vocab_size) {
    if (order != 1 && order != 2) throw InputError("distribution_tv order must be 1 or 2");
    return total_variation(empirical_ngram(generated, order, vocab_size), empirical_ngram(real, order, vocab_size));
}

namespace {

std::uint64_t key2(int a, int b) { return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b); }

std::uint64_t key3(int a, int b, int c) {
    return (static_cast<std::uint64_t>(a) << 42) | (static_cast<std::uint64_t>(b) << 21) | static_cast<std::uint64_t>(c);
}

double lookup(const std::unordered_map<std::uint64_t, double>& m, std::uint64_t k) {
    const auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
}

}  // namespace

MarkovReference MarkovReference::fit(const CorpusStore& corpus, int vocab_size) {
    if (vocab_size < 1 || vocab_size >= (1 << 20)) throw InputError("reference vocabulary size out of range");
    MarkovReference ref;
    ref.vocab_size_ = vocab_size;
    ref.unigram_.assign(static_cast<std::size_t>(vocab_size), 0.0);
    for (std::size_t i = 0; i < corpus.num_sequences(); ++i) {
        const auto seq = corpus.sequence(i);
        const auto mask = corpus.mask(i);
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (mask[k] == 0) continue;
            if (seq[k] < 0 || seq[k] >= vocab_size) throw InputError("token outside reference vocabulary");
            ref.unigram_[static_cast<std::size_t>(seq[k])] += 1.0;
            ref.token_total_ += 1.0;
            if (k >= 1 && mask[k - 1] != 0) {
                ref.bigram_[key2(seq[k - 1], seq[k])] += 1.0;
                ref.bigram_context_[static_cast<std::uint64_t>(seq[k - 1])] += 1.0;
            }
            if (k >= 2 && mask[k - 1] != 0 && mask[k - 2] != 0) {
                ref.trigram_[key3(seq[k - 2], seq[k - 1], seq[k])] += 1.0;
                ref.trigram_context_[key2(seq[k - 2], seq[k - 1])] += 1.0;
            }
        }
    }
    return ref;
}

double MarkovReference::log_prob(std::span<const int> history, int next) const {
    const double v = vocab_size_;
    if (history.empty()) {
        return std::log((unigram_[static_cast<std::size_t>(next)] + 1.0) / (token_total_ + v));
    }
    if (history.size() == 1) {
        const double num = lookup(bigram_, key2(history[0], next)) + 1.0;
        const double den = lookup(bigram_context_, static_cast<std::uint64_t>(history[0])) + v;
        return std::log(num / den);
    }
    const int a = history[history.size() - 2];
    const int b = history[history.size() - 1];
    const double num = lookup(trigram_, key3(a, b, next)) + 1.0;
    const double den = lookup(trigram_context_, key2(a, b)) + v;
    return std::log(num / den);
}

std::pair<double, std::size_t> MarkovReference::log_likelihood(const CorpusStore& corpus) const {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < corpus.num_sequences(); ++i) {
        const auto seq = corpus.sequence(i);
        const auto mask = corpus.mask(i);
        std::size_t run_start = 0;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (mask[k] == 0) {
                run_start = k + 1;
                continue;
            }
            if (seq[k] < 0 || seq[k] >= vocab_size_) throw InputError("token outside reference vocabulary");
            const std::size_t ctx = std::min<std::size_t>(2, k - run_start);
            total += log_prob(seq.subspan(k - ctx, ctx), seq[k]);
            ++count;
        }
    }
    return {total, count};
}

double MarkovReference::perplexity(const CorpusStore& corpus) const {
    const auto [ll, n] = log_likelihood(corpus);
    if (n == 0) throw InputError("perplexity of an empty corpus");
    return std::exp(-ll / static_cast<double>(n));
}

EvalReport evaluate(const CorpusStore& generated, const CorpusStore& real, const MarkovReference& ref) {
    EvalReport r;
    r.num_sequences = generated.num_sequences();
    r.entropy_nats = unigram_entropy(generated);
    r.ref_perplexity = ref.perplexity(generated);
    r.unigram_tv = distribution_tv(generated, real, 1, ref.vocab_size());
    r.bigram_tv = distribution_tv(generated, real, 2, ref.vocab_size());
    return r;
}

}  // namespace klflow
