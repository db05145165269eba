#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gpfq/alphabet.hpp"
#include "gpfq/io.hpp"
#include "gpfq/network.hpp"
#include "gpfq/quantize.hpp"
#include "gpfq/theory.hpp"

namespace py = pybind11;
using namespace gpfq;

PYBIND11_MODULE(_gpfq_core, m) {
    m.doc() = "Greedy path-following post-training weight quantization";

    py::register_exception<DegenerateAlphabetError>(m, "DegenerateAlphabetError");

    py::class_<Alphabet>(m, "Alphabet")
        .def_readonly("radius", &Alphabet::radius)
        .def_readonly("levels", &Alphabet::levels)
        .def_readonly("elements", &Alphabet::elements);

    py::class_<NeuronQuantizationResult>(m, "NeuronQuantizationResult")
        .def_readonly("codes", &NeuronQuantizationResult::codes)
        .def_readonly("final_error", &NeuronQuantizationResult::final_error)
        .def_readonly("trajectory_sup", &NeuronQuantizationResult::trajectory_sup)
        .def_readonly("state_norm_trace", &NeuronQuantizationResult::state_norm_trace);

    m.def("build_alphabet", &build_alphabet, py::arg("levels"), py::arg("radius"));
    m.def("radius_from_weights", &radius_from_weights, py::arg("weights"),
          py::arg("c_alpha"));
    m.def("scalar_quantize", &scalar_quantize, py::arg("z"), py::arg("alphabet"));
    m.def("quantize_neuron_first_layer", &quantize_neuron_first_layer, py::arg("w"),
          py::arg("data_columns"), py::arg("alphabet"), py::arg("record_trace") = false);
    m.def("quantize_neuron_hidden_layer", &quantize_neuron_hidden_layer, py::arg("w"),
          py::arg("analog_columns"), py::arg("quantized_columns"), py::arg("alphabet"),
          py::arg("record_trace") = false);
    m.def("msq_quantize", &msq_quantize, py::arg("weights"), py::arg("alphabet"));
    m.def(
        "exhaustive_optimal_quantize",
        [](const Eigen::VectorXd& w, const Eigen::MatrixXd& x, const Alphabet& a) {
            const auto res = exhaustive_optimal_quantize(w, x, a);
            return py::make_tuple(res.codes, res.error);
        },
        py::arg("w"), py::arg("data_columns"), py::arg("alphabet"));

    // file-level entry point mirroring `gpfq quantize`
    m.def(
        "quantize_model_file",
        [](const std::string& model_path, const std::string& data_path, int levels,
           double c_alpha, const std::string& out_path, int threads) {
            const NetworkModel model = load_model(model_path);
            const auto [batch, shape] = load_data(data_path);
            QuantizeNetworkOptions options;
            options.levels = levels;
            options.c_alpha = c_alpha;
            options.threads = threads;
            const auto [quantized, report] = quantize_network(model, batch, options);
            save_model(quantized, out_path);
            py::list layers;
            for (const auto& entry : report.layers) {
                py::dict d;
                d["layer"] = entry.layer_index;
                d["kind"] = entry.kind;
                d["alphabet_radius"] = entry.alphabet_radius;
                d["levels"] = entry.levels;
                d["error"] = entry.error;
                d["relative_error"] = entry.relative_error;
                layers.append(d);
            }
            return layers;
        },
        py::arg("model_path"), py::arg("data_path"), py::arg("levels"),
        py::arg("c_alpha"), py::arg("out_path"), py::arg("threads") = 1);

    m.def(
        "level_set_check",
        [](int trials, uint64_t seed) {
            return level_set_check(trials, seed).dump();
        },
        py::arg("trials"), py::arg("seed"));
    m.def(
        "special_case_suite",
        [](uint64_t seed) { return special_case_suite(seed).dump(); }, py::arg("seed"));
}
