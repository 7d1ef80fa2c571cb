// python surface for the quasar core: weight management, quantization,
// generation, drafting, and the perf model.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quasar/bench.hpp"
#include "quasar/perfmodel.hpp"
#include "quasar/quant.hpp"
#include "quasar/specdec.hpp"
#include "quasar/tokenizer.hpp"

namespace py = pybind11;
using namespace quasar;

namespace {

py::dict metrics_dict(const DecodeMetrics& m) {
    py::dict d;
    d["steps"] = m.steps;
    d["total_tokens"] = m.total_tokens;
    d["mean_acceptance_length"] = m.mean_acceptance_length;
    d["acceptance_rate"] = m.acceptance_rate;
    d["drafted_tokens"] = m.drafted_tokens;
    d["accepted_tokens"] = m.accepted_tokens;
    d["draft_time_s"] = m.draft_time_s;
    d["verify_time_s"] = m.verify_time_s;
    d["other_time_s"] = m.other_time_s;
    d["weight_bytes_loaded"] = m.weight_bytes_loaded;
    d["tokens_per_second"] = m.tokens_per_second;
    return d;
}

py::dict result_dict(const GenerateResult& r) {
    py::dict d;
    d["tokens"] = r.tokens;
    d["metrics"] = metrics_dict(r.metrics);
    return d;
}

}  // namespace

PYBIND11_MODULE(_quasar, m) {
    m.doc() = "speculative decoding engine with a quantized verifier";

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("d_ff", &ModelConfig::d_ff)
        .def_readwrite("max_seq_len", &ModelConfig::max_seq_len)
        .def("validate", &ModelConfig::validate);

    py::class_<ModelWeights>(m, "ModelWeights")
        .def_property_readonly("config", [](const ModelWeights& w) { return w.config; });

    py::class_<CalibrationStats>(m, "CalibrationStats")
        .def_readonly("sample_count", &CalibrationStats::sample_count);

    py::class_<SmoothingFactors>(m, "SmoothingFactors")
        .def_readonly("alpha", &SmoothingFactors::alpha);

    py::class_<QuantizedModel>(m, "QuantizedModel")
        .def_property_readonly("config", [](const QuantizedModel& q) { return q.config; })
        .def_readonly("smoothing_alpha", &QuantizedModel::smoothing_alpha);

    m.def("generate_synthetic_weights", &generate_synthetic_weights, py::arg("config"),
          py::arg("seed"));
    m.def("save_weights", &save_weights, py::arg("weights"), py::arg("path"));
    m.def("load_weights", &load_weights, py::arg("path"));
    m.def("drop_layers", &drop_layers, py::arg("weights"), py::arg("retain_fraction"));

    m.def("calibrate", &calibrate, py::arg("weights"), py::arg("corpus"));
    m.def("compute_smoothing", &compute_smoothing, py::arg("stats"), py::arg("weights"),
          py::arg("alpha"));
    m.def("smooth_and_quantize", &smooth_and_quantize, py::arg("weights"),
          py::arg("smoothing"));
    m.def("save_quantized", &save_quantized, py::arg("model"), py::arg("path"));
    m.def("load_quantized", &load_quantized, py::arg("path"));

    m.def(
        "vanilla_generate",
        [](const ModelWeights& w, const std::vector<Token>& prompt, int max_new_tokens,
           double temperature, uint64_t seed) {
            return result_dict(
                vanilla_generate(Verifier(w), prompt, max_new_tokens, {temperature, seed}));
        },
        py::arg("weights"), py::arg("prompt"), py::arg("max_new_tokens") = 64,
        py::arg("temperature") = 0.0, py::arg("seed") = 0);
    m.def(
        "vanilla_generate_quantized",
        [](const QuantizedModel& q, const std::vector<Token>& prompt, int max_new_tokens,
           double temperature, uint64_t seed) {
            return result_dict(
                vanilla_generate(Verifier(q), prompt, max_new_tokens, {temperature, seed}));
        },
        py::arg("model"), py::arg("prompt"), py::arg("max_new_tokens") = 64,
        py::arg("temperature") = 0.0, py::arg("seed") = 0);
    m.def(
        "speculative_generate",
        [](const ModelWeights& w, const std::vector<Token>& prompt, int max_new_tokens,
           double temperature, uint64_t seed, int k_min, int k_max, int gamma) {
            DrafterConfig dc{k_min, k_max, gamma};
            return result_dict(speculative_generate(Verifier(w), dc, prompt, max_new_tokens,
                                                    {temperature, seed}));
        },
        py::arg("weights"), py::arg("prompt"), py::arg("max_new_tokens") = 64,
        py::arg("temperature") = 0.0, py::arg("seed") = 0, py::arg("k_min") = 1,
        py::arg("k_max") = 4, py::arg("gamma") = 5);
    m.def(
        "speculative_generate_quantized",
        [](const QuantizedModel& q, const std::vector<Token>& prompt, int max_new_tokens,
           double temperature, uint64_t seed, int k_min, int k_max, int gamma) {
            DrafterConfig dc{k_min, k_max, gamma};
            return result_dict(speculative_generate(Verifier(q), dc, prompt, max_new_tokens,
                                                    {temperature, seed}));
        },
        py::arg("model"), py::arg("prompt"), py::arg("max_new_tokens") = 64,
        py::arg("temperature") = 0.0, py::arg("seed") = 0, py::arg("k_min") = 1,
        py::arg("k_max") = 4, py::arg("gamma") = 5);
    m.def(
        "speculative_generate_with_draft_model",
        [](const ModelWeights& w, const ModelWeights& draft, int gamma,
           const std::vector<Token>& prompt, int max_new_tokens, double temperature,
           uint64_t seed) {
            return result_dict(speculative_generate_with_draft_model(
                Verifier(w), draft, gamma, prompt, max_new_tokens, {temperature, seed}));
        },
        py::arg("weights"), py::arg("draft_model"), py::arg("gamma"), py::arg("prompt"),
        py::arg("max_new_tokens") = 64, py::arg("temperature") = 0.0, py::arg("seed") = 0);

    m.def(
        "propose",
        [](const std::vector<Token>& context, int k_min, int k_max, int gamma) {
            DraftProposal p = propose(context, DrafterConfig{k_min, k_max, gamma});
            py::dict d;
            d["tokens"] = p.tokens;
            d["match_len"] = p.match_len;
            d["match_pos"] = p.match_pos;
            return d;
        },
        py::arg("context"), py::arg("k_min") = 1, py::arg("k_max") = 4, py::arg("gamma") = 5);

    m.def(
        "softmax_temperature",
        [](const std::vector<float>& logits, double temperature) {
            return softmax_temperature(logits, temperature).probs();
        },
        py::arg("logits"), py::arg("temperature"));

    py::class_<PerfParams>(m, "PerfParams")
        .def(py::init<>())
        .def_readwrite("param_count", &PerfParams::param_count)
        .def_readwrite("bytes_per_weight", &PerfParams::bytes_per_weight)
        .def_readwrite("bandwidth_bytes_per_s", &PerfParams::bandwidth_bytes_per_s)
        .def_readwrite("t_compute_s", &PerfParams::t_compute_s)
        .def_readwrite("t_draft_s", &PerfParams::t_draft_s)
        .def_readwrite("gamma", &PerfParams::gamma)
        .def_readwrite("acceptance_rate", &PerfParams::acceptance_rate);
    m.def("verify_latency", &verify_latency, py::arg("params"));
    m.def("throughput", &throughput, py::arg("params"));
    m.def("speedup_ratio", &speedup_ratio, py::arg("quantized"), py::arg("baseline"));

    m.def(
        "encode", [](const std::string& text, bool add_bos) {
            return ByteTokenizer::encode(text, add_bos);
        },
        py::arg("text"), py::arg("add_bos") = true);
    m.def(
        "decode",
        [](const std::vector<Token>& tokens) { return ByteTokenizer::decode(tokens); },
        py::arg("tokens"));
    m.attr("BOS") = ByteTokenizer::kBos;
    m.attr("EOS") = ByteTokenizer::kEos;
    m.attr("VOCAB_SIZE") = ByteTokenizer::kVocabSize;

    py::register_exception<shape_error>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
}
