// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train, generate, eval, oracle-check, sweep.
// Exit codes: 0 success, 1 oracle check ran but failed, 2 input or
// configuration error, 3 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "klflow/config_io.hpp"
#include "klflow/errors.hpp"
#include "klflow/oracle.hpp"
#include "klflow/run.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace klflow;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json read_json_file(const std::string& path, const std::string& field) {
    const std::string text = read_text_file(path, field);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(field, "invalid JSON in '" + path + "': " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// A flag value is JSON when it parses as JSON, otherwise a bare string.
json flag_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return text;
    }
}

// One string option per JSON field of `defaults`; values land in doc[section].
struct FieldFlags {
    std::string section;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app, const json& defaults, const std::string& group,
                const std::vector<std::string>& skip = {}) {
        for (auto it = defaults.begin(); it != defaults.end(); ++it) {
            const std::string key = it.key();
            if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
            std::string names = "--" + key;
            std::string dashed = key;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != key) names += ",--" + dashed;
            app->add_option_function<std::string>(names, [this, key](const std::string& v) { values[key] = v; },
                                                  section + "." + key)
                ->group(group);
        }
    }

    void apply(json& doc) const {
        for (const auto& [key, text] : values) doc[section][key] = flag_value(text);
    }
};

// --set a.b=value for anything without a dedicated flag.
void apply_sets(json& doc, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key=value, got '" + s + "'");
        json* node = &doc;
        std::string path = s.substr(0, eq);
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string part = path.substr(start, dot - start);
            if (dot == std::string::npos) {
                (*node)[part] = flag_value(s.substr(eq + 1));
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
}

ClampMask parse_clamp(const std::string& spec, int seq_len, int vocab_size) {
    ClampMask mask;
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        try {
            if (eq == std::string::npos) throw std::invalid_argument(item);
            mask.fixed.emplace_back(std::stoi(item.substr(0, eq)), std::stoi(item.substr(eq + 1)));
        } catch (const std::exception&) {
            throw ConfigError("clamp", "expected position=token pairs, got '" + item + "'");
        }
    }
    try {
        mask.validate(seq_len, vocab_size);
    } catch (const InputError& e) {
        throw ConfigError("clamp", e.what());
    }
    return mask;
}

ClampMask parse_clamp_text(const std::string& tmpl, const std::string& free_char, const RunData& data, int seq_len) {
    if (!data.vocab) throw ConfigError("clamp_text", "requires a text corpus; use --clamp with token ids");
    if (free_char.size() != 1) throw ConfigError("free_char", "must be a single ASCII character");
    ClampMask mask;
    int pos = 0;
    for (char32_t cp : utf8_decode(tmpl)) {
        const std::string piece = utf8_encode(std::span<const char32_t>(&cp, 1));
        const auto ids = piece == free_char ? std::vector<int>(1, -1) : data.vocab->encode(piece);
        for (int id : ids) {
            if (id >= 0) mask.fixed.emplace_back(pos, id);
            ++pos;
        }
    }
    if (pos > seq_len) throw ConfigError("clamp_text", "longer than the sequence length " + std::to_string(seq_len));
    return mask;
}

json clamp_to_json(const ClampMask& mask) {
    json arr = json::array();
    for (const auto& [p, t] : mask.fixed) arr.push_back({p, t});
    return arr;
}

std::vector<std::vector<int>> tokens_of(const std::vector<Trajectory>& trajs) {
    std::vector<std::vector<int>> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) out.push_back(t.tokens);
    return out;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string output_dir;
    std::vector<std::string> sets;
    FieldFlags corpus{"corpus", {}};
    FieldFlags model{"model", {}};
    FieldFlags train{"train", {}};
};

int cmd_train(const TrainArgs& a) {
    json doc = a.config.empty() ? json::object() : read_json_file(a.config, "config");
    if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");
    a.corpus.apply(doc);
    a.model.apply(doc);
    a.train.apply(doc);
    apply_sets(doc, a.sets);
    if (!a.output_dir.empty()) doc["output_dir"] = a.output_dir;

    const auto result = train_run(doc, [](int step, double loss) {
        std::cerr << "step " << step << " loss " << std::setprecision(6) << loss << '\n';
    });
    std::cout << json{{"checkpoint", result.train.checkpoint_path.string()},
                      {"initial_loss", result.train.initial_loss},
                      {"final_loss", result.train.final_loss},
                      {"steps", result.config.train.steps}}
                     .dump()
              << '\n';
    return 0;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string config;
    std::string checkpoint;
    std::string out = "-";
    std::string trajectory;
    std::string clamp;
    std::string clamp_text;
    std::string free_char = "?";
    std::optional<std::size_t> count;
    int threads = 1;
    std::vector<std::string> sets;
    FieldFlags inference{"inference", {}};
};

// Settings for one generation run; the emitted snapshot has the same shape.
struct GenerateJob {
    LoadedModel model;
    InferenceConfig inference;
    std::size_t count = 16;
    ClampMask clamp;
    json snapshot;
};

GenerateJob prepare_generate(const GenerateArgs& a, bool with_corpus) {
    json doc = a.config.empty() ? json::object() : read_json_file(a.config, "config");
    if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const auto& k = it.key();
        if (k != "checkpoint" && k != "count" && k != "inference" && k != "clamp") throw ConfigError(k, "unknown field");
    }
    if (!a.checkpoint.empty()) doc["checkpoint"] = a.checkpoint;
    if (a.count) doc["count"] = *a.count;
    GenerateJob job;
    job.model = load_model(doc.value("checkpoint", std::string()), with_corpus);

    json inf = job.model.run_json.value("inference", json::object());
    if (doc.contains("inference")) inf.update(doc.at("inference"));
    doc["inference"] = inf;
    a.inference.apply(doc);
    apply_sets(doc, a.sets);
    job.inference = InferenceConfig{};
    try {
        from_json(doc.at("inference"), job.inference);
    } catch (const ConfigError& e) {
        throw ConfigError("inference." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
    try {
        job.inference.validate(job.model.run.model.vocab_size);
    } catch (const ConfigError& e) {
        throw ConfigError("inference." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }

    try {
        job.count = doc.value("count", job.model.run.eval_sequences);
    } catch (const json::exception&) {
        throw ConfigError("count", "must be a positive integer");
    }
    if (job.count == 0) throw ConfigError("count", "must be positive");

    const int seq_len = job.model.run.corpus.seq_len;
    const int v = job.model.run.model.vocab_size;
    if (!a.clamp.empty() && !a.clamp_text.empty()) throw ConfigError("clamp", "give either --clamp or --clamp-text");
    if (!a.clamp.empty()) {
        job.clamp = parse_clamp(a.clamp, seq_len, v);
    } else if (!a.clamp_text.empty()) {
        job.clamp = parse_clamp_text(a.clamp_text, a.free_char, job.model.data, seq_len);
    } else if (doc.contains("clamp")) {
        try {
            for (const auto& pair : doc.at("clamp")) job.clamp.fixed.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
        } catch (const json::exception&) {
            throw ConfigError("clamp", "expected [[position, token], ...]");
        }
        try {
            job.clamp.validate(seq_len, v);
        } catch (const InputError& e) {
            throw ConfigError("clamp", e.what());
        }
    }
    job.snapshot = {{"checkpoint", job.model.path.string()},
                    {"count", job.count},
                    {"inference", job.inference},
                    {"clamp", clamp_to_json(job.clamp)}};
    return job;
}

void write_lines(const std::string& out, const std::vector<Trajectory>& trajs, const RunData& data) {
    std::ostringstream buf;
    for (const auto& t : trajs) buf << data.format(t.tokens) << '\n';
    if (out == "-") {
        std::cout << buf.str();
        return;
    }
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InputError("cannot write " + out);
    f << buf.str();
}

int cmd_generate(const GenerateArgs& a) {
    auto job = prepare_generate(a, false);
    const int seq_len = job.model.run.corpus.seq_len;
    const bool record = !a.trajectory.empty();
    auto trajs = generate(*job.model.denoiser, job.inference, seq_len, job.count, job.clamp, false, a.threads);
    write_lines(a.out, trajs, job.model.data);
    if (a.out != "-") write_json_file(a.out + ".config.json", job.snapshot);
    if (record) {
        // Only the first trajectory is recorded; it uses stream index 0.
        Rng rng = Rng::derived(job.inference.seed, 0);
        const auto first = run_inference(*job.model.denoiser, job.inference, seq_len, rng, job.clamp, true);
        std::ofstream f(a.trajectory);
        if (!f) throw InputError("cannot write " + a.trajectory);
        write_trajectory_csv(f, first, job.model.data.vocab ? &*job.model.data.vocab : nullptr);
    }
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;
    std::string config;
    std::string generated;
    std::string json_out;
    std::string csv_out;
};

void append_csv(const std::string& path, const std::string& header, const std::string& row) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
    std::ofstream f(p, std::ios::app);
    if (!f) throw InputError("cannot write " + path);
    if (fresh) f << header << '\n';
    f << row << '\n';
}

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

int cmd_eval(const EvalArgs& a) {
    RunData data;
    if (!a.config.empty()) {
        RunConfig run;
        from_json(read_json_file(a.config, "config"), run);
        data = load_run_data(run.corpus);
    } else if (!a.checkpoint.empty()) {
        data = std::move(load_model(a.checkpoint, true).data);
    } else {
        throw ConfigError("checkpoint", "give --checkpoint or --config to locate the reference corpus");
    }
    const std::string text = read_text_file(a.generated, "generated");
    std::vector<std::vector<int>> seqs;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        try {
            seqs.push_back(data.parse(line));
        } catch (const InputError& e) {
            throw ConfigError("generated", e.what());
        }
    }
    if (seqs.empty()) throw ConfigError("generated", "contains no sequences");
    const auto report = evaluate_sequences(seqs, data);
    const json j = report.to_json();
    std::cout << j.dump(2) << '\n';
    if (!a.json_out.empty()) write_json_file(a.json_out, j);
    if (!a.csv_out.empty()) {
        append_csv(a.csv_out, "generated,entropy_nats,ref_perplexity,unigram_tv,bigram_tv,num_sequences",
                   a.generated + ',' + num(report.entropy_nats) + ',' + num(report.ref_perplexity) + ',' +
                       num(report.unigram_tv) + ',' + num(report.bigram_tv) + ',' +
                       std::to_string(report.num_sequences));
    }
    return 0;
}

// ---------------------------------------------------------------- oracle-check

struct OracleArgs {
    std::string instance;
    std::size_t samples = 1000000;
    int grid = 8;
    int time_buckets = 8;
    double pseudo_count = 0.5;
    std::size_t points = 200;
    std::uint64_t seed = 1;
    int ode_steps = 256;
    std::size_t trajectories = 100000;
    double max_mean_tv = 0.05;
    double max_max_tv = 0.15;
    double max_ode_tv = 0.03;
    std::string out;
};

int cmd_oracle(const OracleArgs& a) {
    TinyInstance inst{3, 1, {0.5, 0.3, 0.2}, 0.01};
    if (!a.instance.empty()) {
        try {
            inst = TinyInstance::from_json(read_json_file(a.instance, "instance"));
        } catch (const InputError& e) {
            throw ConfigError("instance", e.what());
        }
    }
    try {
        inst.validate();
    } catch (const InputError& e) {
        throw ConfigError("instance", e.what());
    }
    TabularDenoiser::Config tcfg;
    tcfg.grid_resolution = a.grid;
    tcfg.time_buckets = a.time_buckets;
    tcfg.pseudo_count = a.pseudo_count;
    const auto tab = fit_tabular(inst, tcfg, a.samples, a.seed);
    const auto rep = validate_proposition1(inst, tab, a.points);
    const auto ode = exact_ode_distribution(inst, a.ode_steps, a.trajectories, a.seed + 1);
    double ode_tv = 0.0;
    for (std::size_t i = 0; i < ode.size(); ++i) ode_tv += 0.5 * std::abs(ode[i] - inst.p1[i]);
    const bool pass = rep.mean_tv <= a.max_mean_tv && rep.max_tv <= a.max_max_tv && ode_tv <= a.max_ode_tv;
    const json j = {{"instance", inst.to_json()},
                    {"resolution", a.grid},
                    {"time_buckets", a.time_buckets},
                    {"samples", a.samples},
                    {"points", rep.points},
                    {"mean_tv", rep.mean_tv},
                    {"max_tv", rep.max_tv},
                    {"ode_steps", a.ode_steps},
                    {"ode_trajectories", a.trajectories},
                    {"ode_tv", ode_tv},
                    {"pass", pass}};
    std::cout << j.dump(2) << '\n';
    if (!a.out.empty()) write_json_file(a.out, j);
    return pass ? 0 : kExitCheckFailed;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    GenerateArgs gen;
    std::string axis;
    std::string values;
    std::string out = "sweep.csv";
};

int cmd_sweep(const SweepArgs& a) {
    if (a.axis != "t_star" && a.axis != "top_k" && a.axis != "nfe") {
        throw ConfigError("axis", "expected t_star, top_k or nfe");
    }
    std::vector<std::string> raw;
    std::vector<double> values;
    {
        std::istringstream in(a.values);
        std::string item;
        while (std::getline(in, item, ',')) {
            if (item.empty()) continue;
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(item, &used);
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("values", "not a number: '" + item + "'");
            }
            if (std::find(values.begin(), values.end(), v) != values.end()) {
                std::cerr << "warning: duplicate sweep value " << item << " ignored\n";
                continue;
            }
            if (a.axis != "t_star" && v != std::floor(v)) throw ConfigError("values", a.axis + " values must be integers");
            values.push_back(v);
            raw.push_back(item);
        }
    }
    if (values.size() < 2) throw ConfigError("values", "need at least two distinct values");

    auto job = prepare_generate(a.gen, true);
    if (a.axis == "t_star" && job.inference.scheme != Scheme::hybrid) {
        std::cerr << "warning: t_star only affects the hybrid scheme (current: " << to_string(job.inference.scheme) << ")\n";
    }
    const int seq_len = job.model.run.corpus.seq_len;
    for (std::size_t i = 0; i < values.size(); ++i) {
        InferenceConfig cfg = job.inference;
        if (a.axis == "t_star") cfg.t_star = values[i];
        if (a.axis == "top_k") cfg.top_k = static_cast<int>(values[i]);
        if (a.axis == "nfe") cfg.steps = static_cast<int>(values[i]);
        try {
            cfg.validate(job.model.run.model.vocab_size);
        } catch (const ConfigError& e) {
            throw ConfigError("values", e.what());
        }
        const auto trajs = generate(*job.model.denoiser, cfg, seq_len, job.count, job.clamp, false, a.gen.threads);
        const auto rep = evaluate_sequences(tokens_of(trajs), job.model.data);
        append_csv(a.out, "value,entropy,ref_perplexity,unigram_tv,bigram_tv",
                   raw[i] + ',' + num(rep.entropy_nats) + ',' + num(rep.ref_perplexity) + ',' + num(rep.unigram_tv) +
                       ',' + num(rep.bigram_tv));
        std::cerr << a.axis << '=' << raw[i] << " ref_perplexity " << rep.ref_perplexity << '\n';
    }
    json snap = job.snapshot;
    snap["axis"] = a.axis;
    snap["values"] = values;
    write_json_file(a.out + ".config.json", snap);
    return 0;
}

void add_generate_options(CLI::App* sub, GenerateArgs& g) {
    sub->add_option("--config", g.config, "generation config JSON (as emitted next to outputs)");
    sub->add_option("--checkpoint", g.checkpoint, "model checkpoint");
    sub->add_option("--count", g.count, "number of sequences");
    sub->add_option("--clamp", g.clamp, "fixed positions as pos=token,pos=token");
    sub->add_option("--clamp-text,--clamp_text", g.clamp_text, "template text; the free character marks open positions");
    sub->add_option("--free-char,--free_char", g.free_char, "placeholder for open positions in --clamp-text");
    sub->add_option("--threads", g.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub->add_option("--set", g.sets, "override any field: key.path=value");
    g.inference.attach(sub, json(InferenceConfig{}), "Inference");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete flow matching on the probability simplex"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a denoiser and write a checkpoint");
    train_cmd->add_option("--config", train_args.config, "run config JSON");
    train_cmd->add_option("--output-dir,--output_dir", train_args.output_dir, "output directory");
    train_cmd->add_option("--set", train_args.sets, "override any field: key.path=value");
    train_cmd->add_option_function<std::string>(
        "--corpus", [&](const std::string& v) { train_args.corpus.values["path"] = json(v).dump(); }, "corpus text file");
    train_args.corpus.attach(train_cmd, json(CorpusSpec{}), "Corpus", {"toy"});
    train_args.model.attach(train_cmd, json(TransformerConfig{}), "Model");
    train_args.train.attach(train_cmd, json(TrainConfig{}), "Training");

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "sample sequences from a checkpoint");
    add_generate_options(gen_cmd, gen_args);
    gen_cmd->add_option("--out", gen_args.out, "output text file, one sequence per line ('-' for stdout)");
    gen_cmd->add_option("--trajectory", gen_args.trajectory, "CSV dump of the first trajectory");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score generated sequences against the held-out corpus");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint whose run config names the corpus");
    eval_cmd->add_option("--config", eval_args.config, "run config JSON naming the corpus");
    eval_cmd->add_option("--generated", eval_args.generated, "generated sequences, one per line")->required();
    eval_cmd->add_option("--json", eval_args.json_out, "write the report as JSON");
    eval_cmd->add_option("--csv", eval_args.csv_out, "append a CSV row");

    OracleArgs oracle_args;
    auto* oracle_cmd = app.add_subcommand("oracle-check", "compare a tabular denoiser with the exact posterior");
    oracle_cmd->add_option("--instance", oracle_args.instance, "tiny instance JSON {V, S, p1, beta}");
    oracle_cmd->add_option("--samples", oracle_args.samples, "training samples for the tabular denoiser");
    oracle_cmd->add_option("--grid", oracle_args.grid, "simplex bins per axis");
    oracle_cmd->add_option("--time-buckets,--time_buckets", oracle_args.time_buckets, "time bins");
    oracle_cmd->add_option("--pseudo-count,--pseudo_count", oracle_args.pseudo_count, "count added to every cell");
    oracle_cmd->add_option("--points", oracle_args.points, "evaluation states");
    oracle_cmd->add_option("--seed", oracle_args.seed, "random seed");
    oracle_cmd->add_option("--ode-steps,--ode_steps", oracle_args.ode_steps, "Euler steps of the exact ODE");
    oracle_cmd->add_option("--trajectories", oracle_args.trajectories, "exact ODE trajectories");
    oracle_cmd->add_option("--max-mean-tv", oracle_args.max_mean_tv, "pass threshold");
    oracle_cmd->add_option("--max-max-tv", oracle_args.max_max_tv, "pass threshold");
    oracle_cmd->add_option("--max-ode-tv", oracle_args.max_ode_tv, "pass threshold");
    oracle_cmd->add_option("--out", oracle_args.out, "write the report as JSON");

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "evaluate generation over one inference parameter");
    add_generate_options(sweep_cmd, sweep_args.gen);
    sweep_cmd->add_option("--axis", sweep_args.axis, "t_star, top_k or nfe")->required();
    sweep_cmd->add_option("--values", sweep_args.values, "comma-separated values")->required();
    sweep_cmd->add_option("--out", sweep_args.out, "CSV file (rows are appended)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_args);
        if (*gen_cmd) return cmd_generate(gen_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*oracle_cmd) return cmd_oracle(oracle_args);
        if (*sweep_cmd) return cmd_sweep(sweep_args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}
