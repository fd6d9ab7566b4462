// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/run.hpp"

#include <fstream>
#include <sstream>

#include "klflow/checkpoint.hpp"
#include "klflow/config_io.hpp"
#include "klflow/errors.hpp"

namespace klflow {

namespace {

using json = nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& prefix) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<T>();
    } catch (const json::exception&) {
        throw ConfigError(prefix + key, "has the wrong type");
    }
}

std::string escape_line(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else out += c;
    }
    return out;
}

std::string unescape_line(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            out += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::vector<std::vector<int>> text_documents(const std::string& text, const Vocab& vocab) {
    std::vector<std::vector<int>> docs;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) docs.push_back(vocab.encode(line));
    }
    return docs;
}

// Prefix a nested ConfigError's field with the section name.
template <typename F>
void in_section(const std::string& section, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError(section + "." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
}

}  // namespace

void to_json(json& j, const CorpusSpec& c) {
    j = {{"path", c.path},
         {"heldout_path", c.heldout_path},
         {"vocab_mode", to_string(c.vocab_mode)},
         {"seq_len", c.seq_len},
         {"toy", c.toy},
         {"num_sequences", c.num_sequences},
         {"sample_seed", c.sample_seed},
         {"heldout_sequences", c.heldout_sequences},
         {"heldout_seed", c.heldout_seed}};
}

void from_json(const json& j, CorpusSpec& c) {
    if (!j.is_object()) throw ConfigError("corpus", "expected a JSON object");
    static const char* known[] = {"path", "heldout_path", "vocab_mode", "seq_len", "toy", "num_sequences",
                                  "sample_seed", "heldout_sequences", "heldout_seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool found = false;
        for (const char* k : known) found = found || it.key() == k;
        if (!found) throw ConfigError("corpus." + it.key(), "unknown field");
    }
    const std::string p = "corpus.";
    read(j, "path", c.path, p);
    read(j, "heldout_path", c.heldout_path, p);
    std::string mode = to_string(c.vocab_mode);
    read(j, "vocab_mode", mode, p);
    in_section("corpus", [&] { c.vocab_mode = parse_vocab_mode(mode); });
    read(j, "seq_len", c.seq_len, p);
    if (j.contains("toy")) c.toy = j.at("toy");
    read(j, "num_sequences", c.num_sequences, p);
    read(j, "sample_seed", c.sample_seed, p);
    read(j, "heldout_sequences", c.heldout_sequences, p);
    read(j, "heldout_seed", c.heldout_seed, p);
}

void to_json(json& j, const RunConfig& c) {
    j = {{"corpus", c.corpus},
         {"model", c.model},
         {"train", c.train},
         {"inference", c.inference},
         {"output_dir", c.output_dir},
         {"eval_sequences", c.eval_sequences}};
}

void from_json(const json& j, RunConfig& c) {
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "corpus" && k != "model" && k != "train" && k != "inference" && k != "output_dir" &&
            k != "eval_sequences") {
            throw ConfigError(k, "unknown field");
        }
    }
    if (j.contains("corpus")) from_json(j.at("corpus"), c.corpus);
    if (j.contains("model")) in_section("model", [&] { from_json(j.at("model"), c.model); });
    if (j.contains("train")) in_section("train", [&] { from_json(j.at("train"), c.train); });
    if (j.contains("inference")) in_section("inference", [&] { from_json(j.at("inference"), c.inference); });
    read(j, "output_dir", c.output_dir, "");
    read(j, "eval_sequences", c.eval_sequences, "");
}

int RunData::model_vocab_size() const {
    if (language) return language->vocab_size;
    return vocab->model_vocab_size();
}

int RunData::pad_id() const { return vocab ? vocab->pad_id() : -1; }

std::string RunData::format(std::span<const int> tokens) const {
    if (vocab) return escape_line(vocab->decode_text(tokens));
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += std::to_string(tokens[i]);
    }
    return out;
}

std::vector<int> RunData::parse(const std::string& line) const {
    if (vocab) return vocab->encode(unescape_line(line));
    std::vector<int> out;
    std::istringstream in(line);
    std::string item;
    while (in >> item) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || v < 0 || v >= language->vocab_size) {
            throw InputError("not a token id of the toy language: '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path, const std::string& field) {
    if (path.empty()) throw ConfigError(field, "is required");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(field, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunData load_run_data(const CorpusSpec& spec) {
    if (spec.seq_len < 1) throw ConfigError("corpus.seq_len", "must be positive");
    RunData data;
    if (spec.is_toy()) {
        const json& t = spec.toy;
        if (!t.is_object()) throw ConfigError("corpus.toy", "expected a JSON object");
        try {
            if (t.contains("transitions")) {
                data.language = MarkovToyLanguage::from_json(t);
            } else {
                data.language = MarkovToyLanguage::random(t.value("V", 16), t.value("order", 2),
                                                          t.value("seed", std::uint64_t{0}), t.value("support", 3),
                                                          t.value("floor_mass", 0.03));
            }
        } catch (const ConfigError& e) {
            throw ConfigError("corpus.toy", e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("corpus.toy", e.what());
        }
        if (spec.num_sequences == 0) throw ConfigError("corpus.num_sequences", "must be positive");
        Rng train_rng(spec.sample_seed);
        data.train = sample_toy_corpus(*data.language, spec.num_sequences, spec.seq_len, train_rng);
        Rng held_rng(spec.heldout_seed);
        data.heldout = sample_toy_corpus(*data.language, std::max<std::size_t>(1, spec.heldout_sequences),
                                         spec.seq_len, held_rng);
        return data;
    }
    const std::string text = read_text_file(spec.path, "corpus.path");
    if (spec.vocab_mode == VocabMode::byte) {
        data.vocab = Vocab::bytes();
    } else {
        std::string joined;
        for (char c : text) {
            if (c != '\n' && c != '\r') joined += c;
        }
        data.vocab = Vocab::build(joined, VocabMode::character);
    }
    const auto docs = text_documents(text, *data.vocab);
    if (docs.empty()) throw ConfigError("corpus.path", "contains no text");
    data.train = CorpusStore::from_documents(docs, spec.seq_len, data.vocab->pad_id());
    if (spec.heldout_path.empty()) {
        data.heldout = data.train;
    } else {
        const auto held_docs = text_documents(read_text_file(spec.heldout_path, "corpus.heldout_path"), *data.vocab);
        if (held_docs.empty()) throw ConfigError("corpus.heldout_path", "contains no text");
        data.heldout = CorpusStore::from_documents(held_docs, spec.seq_len, data.vocab->pad_id());
    }
    return data;
}

RunConfig resolve_run_config(const json& doc, const RunData& data) {
    RunConfig cfg;
    from_json(doc, cfg);
    const json model = doc.contains("model") ? doc.at("model") : json::object();
    if (!model.contains("vocab_size")) cfg.model.vocab_size = data.model_vocab_size();
    if (!model.contains("max_seq_len")) cfg.model.max_seq_len = cfg.corpus.seq_len;
    if (cfg.model.vocab_size != data.model_vocab_size()) {
        throw ConfigError("model.vocab_size", "corpus needs " + std::to_string(data.model_vocab_size()));
    }
    if (cfg.model.max_seq_len < cfg.corpus.seq_len) {
        throw ConfigError("model.max_seq_len", "shorter than corpus.seq_len");
    }
    in_section("model", [&] { cfg.model.validate(); });
    in_section("train", [&] { cfg.train.validate(); });
    in_section("inference", [&] { cfg.inference.validate(cfg.model.vocab_size); });
    if (cfg.eval_sequences == 0) throw ConfigError("eval_sequences", "must be positive");
    return cfg;
}

CorpusStore corpus_from_sequences(const std::vector<std::vector<int>>& sequences, int seq_len, int pad_id) {
    CorpusStore store(seq_len);
    std::vector<int> window(static_cast<std::size_t>(seq_len));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(seq_len));
    for (const auto& seq : sequences) {
        for (std::size_t k = 0; k < window.size(); ++k) {
            const bool real = k < seq.size() && seq[k] != pad_id;
            window[k] = k < seq.size() ? seq[k] : std::max(pad_id, 0);
            mask[k] = real ? 1 : 0;
        }
        store.add_sequence(window, mask);
    }
    return store;
}

EvalReport evaluate_sequences(const std::vector<std::vector<int>>& sequences, const RunData& data) {
    const auto generated = corpus_from_sequences(sequences, data.heldout.seq_len(), data.pad_id());
    const auto ref = MarkovReference::fit(data.heldout, data.model_vocab_size());
    return evaluate(generated, data.heldout, ref);
}

TrainRunResult train_run(json doc, std::function<void(int, double)> on_log) {
    namespace fs = std::filesystem;
    if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");
    RunConfig parsed;
    from_json(doc, parsed);
    for (std::string* p : {&parsed.corpus.path, &parsed.corpus.heldout_path}) {
        if (!p->empty()) *p = fs::absolute(*p).lexically_normal().string();
    }
    if (!parsed.corpus.is_toy() && parsed.corpus.path.empty()) throw ConfigError("corpus.path", "is required");
    if (!parsed.corpus.is_toy() && !fs::exists(parsed.corpus.path)) {
        throw ConfigError("corpus.path", "file not found: " + parsed.corpus.path);
    }
    doc["corpus"] = parsed.corpus;
    const RunData data = load_run_data(parsed.corpus);
    TrainRunResult out;
    out.config = resolve_run_config(doc, data);

    const fs::path out_dir = out.config.output_dir;
    fs::create_directories(out_dir);
    json resolved = out.config;
    {
        std::ofstream f(out_dir / "config.json");
        if (!f) throw ConfigError("output_dir", "cannot write " + (out_dir / "config.json").string());
        f << resolved.dump(2) << '\n';
    }

    TrainOptions opts;
    opts.output_dir = out_dir;
    json meta_run = resolved;
    meta_run.erase("output_dir");
    opts.extra_metadata = {{"run", meta_run}};
    if (data.vocab) opts.extra_metadata["vocab"] = data.vocab->to_json();
    if (data.language) opts.extra_metadata["toy_language"] = data.language->to_json();
    opts.on_log = std::move(on_log);
    out.train = train(data.train, out.config.train, out.config.model, opts);
    return out;
}

LoadedModel load_model(const std::string& path, bool with_corpus) {
    namespace fs = std::filesystem;
    if (path.empty()) throw ConfigError("checkpoint", "is required");
    if (!fs::exists(path)) throw ConfigError("checkpoint", "file not found: " + path);
    Checkpoint ck;
    try {
        ck = load_checkpoint(path);
    } catch (const FormatError& e) {
        throw ConfigError("checkpoint", e.what());
    }
    LoadedModel m;
    m.path = fs::absolute(path);
    if (!ck.metadata.contains("run")) throw ConfigError("checkpoint", "no run configuration in metadata");
    m.run_json = ck.metadata.at("run");
    from_json(m.run_json, m.run);
    if (with_corpus) {
        m.data = load_run_data(m.run.corpus);
    } else if (ck.metadata.contains("vocab")) {
        m.data.vocab = Vocab::from_json(ck.metadata.at("vocab"));
    } else if (ck.metadata.contains("toy_language")) {
        m.data.language = MarkovToyLanguage::from_json(ck.metadata.at("toy_language"));
    } else {
        throw ConfigError("checkpoint", "no tokenizer in metadata");
    }
    ParamSet<float> params;
    try {
        params = params_from_checkpoint<float>(ck, m.run.model);
    } catch (const FormatError& e) {
        throw ConfigError("checkpoint", e.what());
    }
    m.denoiser = std::make_unique<TransformerDenoiser>(m.run.model, std::move(params));
    return m;
}

}  // namespace klflow
