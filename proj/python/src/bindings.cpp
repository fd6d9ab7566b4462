// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/config_io.hpp"
#include "klflow/errors.hpp"
#include "klflow/inference.hpp"
#include "klflow/oracle.hpp"
#include "klflow/run.hpp"
#include "klflow/simplex.hpp"

namespace py = pybind11;
using json = nlohmann::json;
using namespace klflow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) {
    if (a.ndim() != 1) throw InputError("expected a 1-d array");
    return {a.data(), a.data() + a.size()};
}

Array from_vec(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

LogitMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw InputError("expected a 2-d array");
    LogitMatrix m(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), m.data());
    return m;
}

Array from_matrix(const LogitMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

class Model {
public:
    Model(const std::string& path, bool with_corpus) : m_(load_model(path, with_corpus)), with_corpus_(with_corpus) {}

    int vocab_size() const { return m_.run.model.vocab_size; }
    int seq_len() const { return m_.run.corpus.seq_len; }
    std::string run_config() const { return m_.run_json.dump(); }

    std::vector<std::vector<int>> generate(std::size_t count, const std::string& overrides,
                                           const std::vector<std::pair<int, int>>& clamp, int threads) const {
        json inf = m_.run_json.value("inference", json::object());
        inf.merge_patch(json::parse(overrides));
        InferenceConfig cfg;
        from_json(inf, cfg);
        cfg.validate(vocab_size());
        ClampMask mask{clamp};
        mask.validate(seq_len(), vocab_size());
        std::vector<Trajectory> trajs;
        {
            py::gil_scoped_release release;
            trajs = klflow::generate(*m_.denoiser, cfg, seq_len(), count, mask, false, threads);
        }
        std::vector<std::vector<int>> out;
        for (auto& t : trajs) out.push_back(std::move(t.tokens));
        return out;
    }

    Array predict(const Array& logits, double t) const {
        return from_matrix(m_.denoiser->predict(SequenceState{to_matrix(logits), t}));
    }

    std::string format(const std::vector<int>& tokens) const { return m_.data.format(tokens); }
    std::vector<int> parse(const std::string& line) const { return m_.data.parse(line); }

    std::string evaluate(const std::vector<std::vector<int>>& sequences) const {
        if (!with_corpus_) throw ConfigError("checkpoint", "load with the corpus to evaluate");
        return evaluate_sequences(sequences, m_.data).to_json().dump();
    }

private:
    LoadedModel m_;
    bool with_corpus_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "klflow native core";

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
    static py::exception<FormatError> format_error(m, "FormatError", PyExc_ValueError);
    static py::exception<DomainError> domain_error(m, "DomainError", PyExc_ValueError);
    static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const InputError& e) {
            py::set_error(input_error, e.what());
        } catch (const FormatError& e) {
            py::set_error(format_error, e.what());
        } catch (const DomainError& e) {
            py::set_error(domain_error, e.what());
        } catch (const NumericError& e) {
            py::set_error(numeric_error, e.what());
        }
    });

    m.def("kl_geodesic", [](const Array& x0, const Array& x1, double t) {
        return from_vec(kl_geodesic({to_vec(x0)}, {to_vec(x1)}, t).probs);
    }, py::arg("x0"), py::arg("x1"), py::arg("t"));
    m.def("path_velocity", [](const Array& x0, const Array& x1, double t) {
        const SimplexPoint a{to_vec(x0)}, b{to_vec(x1)};
        return from_vec(path_velocity_simplex(kl_geodesic(a, b, t), log_point(a), log_point(b)));
    }, py::arg("x0"), py::arg("x1"), py::arg("t"));
    m.def("smooth_onehot", [](int token, int vocab_size, double beta) {
        return from_vec(smooth_onehot(token, SmoothingConfig{beta, vocab_size, 0.0}).probs);
    }, py::arg("token"), py::arg("vocab_size"), py::arg("beta") = 0.01);
    m.def("sample_top_k", [](const Array& probs, int k, std::size_t draws, std::uint64_t seed) {
        const auto p = to_vec(probs);
        Rng rng(seed);
        std::vector<int> out(draws);
        for (auto& x : out) x = sample_top_k(p, k, rng);
        return out;
    }, py::arg("probs"), py::arg("k"), py::arg("draws"), py::arg("seed") = 0);
    m.def("exact_posterior", [](const std::string& instance, const Array& logits, double t) {
        const auto inst = TinyInstance::from_json(json::parse(instance));
        return from_matrix(exact_posterior(inst, SequenceState{to_matrix(logits), t}));
    }, py::arg("instance"), py::arg("logits"), py::arg("t"));
    m.def("exact_ode_distribution", [](const std::string& instance, int steps, std::size_t trajectories,
                                       std::uint64_t seed) {
        const auto inst = TinyInstance::from_json(json::parse(instance));
        py::gil_scoped_release release;
        return exact_ode_distribution(inst, steps, trajectories, seed);
    }, py::arg("instance"), py::arg("steps"), py::arg("trajectories"), py::arg("seed") = 0);

    m.def("train_run", [](const std::string& doc) {
        TrainRunResult r;
        {
            py::gil_scoped_release release;
            r = train_run(json::parse(doc));
        }
        json out = {{"checkpoint", r.train.checkpoint_path.string()},
                    {"initial_loss", r.train.initial_loss},
                    {"final_loss", r.train.final_loss},
                    {"batch_losses", r.train.batch_losses},
                    {"config", r.config}};
        return out.dump();
    }, py::arg("doc"));

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&, bool>(), py::arg("path"), py::arg("with_corpus") = false)
        .def_property_readonly("vocab_size", &Model::vocab_size)
        .def_property_readonly("seq_len", &Model::seq_len)
        .def("run_config", &Model::run_config)
        .def("generate", &Model::generate, py::arg("count"), py::arg("overrides"), py::arg("clamp"),
             py::arg("threads"))
        .def("predict", &Model::predict, py::arg("logits"), py::arg("t"))
        .def("format", &Model::format, py::arg("tokens"))
        .def("parse", &Model::parse, py::arg("line"))
        .def("evaluate", &Model::evaluate, py::arg("sequences"));
}
