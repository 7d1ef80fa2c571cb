// quasar command line: weight generation, calibration, generation, the
// benchmark matrix, and the analytical perf model.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "quasar/bench.hpp"
#include "quasar/perfmodel.hpp"
#include "quasar/quant.hpp"
#include "quasar/specdec.hpp"
#include "quasar/tokenizer.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw quasar::io_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json_file(const std::string& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw quasar::format_error(path + ": invalid json");
    return j;
}

quasar::ModelConfig config_from_json(const json& j) {
    quasar::ModelConfig cfg;
    cfg.vocab_size = j.value("vocab_size", quasar::ByteTokenizer::kVocabSize);
    cfg.d_model = j.value("d_model", 64);
    cfg.n_layers = j.value("n_layers", 4);
    cfg.n_heads = j.value("n_heads", 4);
    cfg.d_ff = j.value("d_ff", 256);
    cfg.max_seq_len = j.value("max_seq_len", 512);
    cfg.validate();
    return cfg;
}

// a model file is either raw float ("QZR1") or quantized ("QZQ1")
bool file_is_quantized(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw quasar::io_error("cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    return std::string(magic, 4) == "QZQ1";
}

int cmd_gen_weights(const std::string& config_path, uint64_t seed,
                    const std::string& out_path) {
    quasar::ModelConfig cfg =
        config_path.empty() ? config_from_json(json::object()) : config_from_json(parse_json_file(config_path));
    quasar::ModelWeights w = quasar::generate_synthetic_weights(cfg, seed);
    quasar::save_weights(w, out_path);
    std::cout << "wrote " << out_path << " (vocab " << cfg.vocab_size << ", d_model "
              << cfg.d_model << ", layers " << cfg.n_layers << ")\n";
    return 0;
}

int cmd_calibrate(const std::string& model_path, const std::string& corpus_path,
                  double alpha, const std::string& out_path) {
    quasar::ModelWeights w = quasar::load_weights(model_path);
    auto corpus = quasar::ingest_corpus(corpus_path);
    if (corpus.empty()) throw quasar::input_error("calibration corpus is empty");
    quasar::CalibrationStats stats = quasar::calibrate(w, corpus);
    quasar::SmoothingFactors s =
        quasar::compute_smoothing(stats, w, static_cast<float>(alpha));
    quasar::QuantizedModel qm = quasar::smooth_and_quantize(w, s);
    quasar::save_quantized(qm, out_path);
    std::cout << "wrote " << out_path << " (alpha " << alpha << ", " << corpus.size()
              << " calibration prompts)\n";
    return 0;
}

ordered_json metrics_to_json(const quasar::DecodeMetrics& m) {
    ordered_json j;
    j["steps"] = m.steps;
    j["total_tokens"] = m.total_tokens;
    j["mean_acceptance_length"] = m.mean_acceptance_length;
    j["acceptance_rate"] = m.acceptance_rate;
    j["drafted_tokens"] = m.drafted_tokens;
    j["accepted_tokens"] = m.accepted_tokens;
    j["draft_time_s"] = m.draft_time_s;
    j["verify_time_s"] = m.verify_time_s;
    j["other_time_s"] = m.other_time_s;
    j["weight_bytes_loaded"] = m.weight_bytes_loaded;
    j["tokens_per_second"] = m.tokens_per_second;
    return j;
}

int cmd_generate(const std::string& model_path, const std::string& prompt_path,
                 const std::string& method, double temperature, int gamma, int k_min,
                 int k_max, int max_new_tokens, uint64_t seed, bool no_timings) {
    bool quantized = file_is_quantized(model_path);
    quasar::ModelWeights fp;
    quasar::QuantizedModel qm;
    if (quantized)
        qm = quasar::load_quantized(model_path);
    else
        fp = quasar::load_weights(model_path);
    quasar::Verifier verifier = quantized ? quasar::Verifier(qm) : quasar::Verifier(fp);

    std::string text = read_file(prompt_path);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    std::vector<quasar::Token> prompt = quasar::ByteTokenizer::encode(text);

    quasar::SamplingConfig sampling{temperature, seed};
    quasar::GenerateResult result;
    if (method == "vanilla") {
        result = quasar::vanilla_generate(verifier, prompt, max_new_tokens, sampling);
    } else if (method == "ngram" || method == "quasar") {
        if (method == "quasar" && !quantized)
            throw quasar::config_error("method quasar requires a quantized (qzq1) model");
        quasar::DrafterConfig dc{k_min, k_max, gamma};
        result = quasar::speculative_generate(verifier, dc, prompt, max_new_tokens, sampling);
    } else {
        throw quasar::input_error("unknown method \"" + method +
                                  "\" (expected vanilla, ngram, or quasar)");
    }

    if (no_timings) {
        result.metrics.draft_time_s = 0.0;
        result.metrics.verify_time_s = 0.0;
        result.metrics.other_time_s = 0.0;
        result.metrics.tokens_per_second = 0.0;
    }

    ordered_json out;
    out["text"] = quasar::ByteTokenizer::decode(result.tokens);
    out["tokens"] = result.tokens;
    out["metrics"] = metrics_to_json(result.metrics);
    // raw byte-level output need not be valid utf-8; tokens stay lossless
    std::cout << out.dump(2, ' ', false, ordered_json::error_handler_t::replace) << "\n";
    return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_path,
              const std::string& format, int jobs_override) {
    quasar::RunConfig cfg = quasar::run_config_from_json(parse_json_file(config_path));
    if (jobs_override > 0) cfg.jobs = jobs_override;
    quasar::RunReport report = quasar::run_matrix(cfg);
    quasar::emit_report(report, format, out_path);
    std::cout << "wrote " << out_path << " (" << report.records.size() << " records, "
              << report.summary.size() << " cells)\n";
    return 0;
}

// params file: {"quantized": {...}, "baseline": {...}}, each a PerfParams object
int cmd_perf_model(const std::string& params_path) {
    json j = parse_json_file(params_path);
    if (!j.contains("quantized") || !j.contains("baseline"))
        throw quasar::input_error(params_path +
                                  ": expected \"quantized\" and \"baseline\" param objects");
    quasar::PerfParams q = quasar::perf_params_from_json(j["quantized"]);
    quasar::PerfParams base = quasar::perf_params_from_json(j["baseline"]);
    std::printf("baseline:  T_verify = %.9g s   S = %.9g tokens/s\n",
                quasar::verify_latency(base), quasar::throughput(base));
    std::printf("quantized: T_verify = %.9g s   S = %.9g tokens/s\n",
                quasar::verify_latency(q), quasar::throughput(q));
    std::printf("speedup = %.9g\n", quasar::speedup_ratio(q, base));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasar: speculative decoding with a quantized verifier"};
    app.require_subcommand(1);

    std::string config_path, out_path, model_path, corpus_path, prompt_path, params_path;
    std::string method = "vanilla";
    std::string format = "json";
    uint64_t seed = 0;
    double alpha = 0.5;
    double temperature = 0.0;
    int gamma = 5, k_min = 1, k_max = 4, max_new_tokens = 128;
    int jobs = 0;
    bool no_timings = false;

    CLI::App* gen = app.add_subcommand("gen-weights", "generate synthetic model weights");
    gen->add_option("--config", config_path, "model config json (defaults used if omitted)");
    gen->add_option("--seed", seed, "rng seed");
    gen->add_option("--out", out_path, "output .qzr1 path")->required();

    CLI::App* cal = app.add_subcommand("calibrate", "calibrate and quantize a model");
    cal->add_option("--model", model_path, "input .qzr1 path")->required();
    cal->add_option("--corpus", corpus_path, "calibration corpus (text or jsonl)")->required();
    cal->add_option("--alpha", alpha, "smoothing strength in [0,1]");
    cal->add_option("--out", out_path, "output .qzq1 path")->required();

    CLI::App* run = app.add_subcommand("generate", "generate tokens from a prompt");
    run->add_option("--model", model_path, "model path (.qzr1 or .qzq1)")->required();
    run->add_option("--prompt-file", prompt_path, "file holding the prompt text")->required();
    run->add_option("--method", method, "vanilla | ngram | quasar");
    run->add_option("--temperature", temperature, "sampling temperature (0 = greedy)");
    run->add_option("--gamma", gamma, "draft length");
    run->add_option("--k-min", k_min, "min lookup n-gram size");
    run->add_option("--k-max", k_max, "max lookup n-gram size");
    run->add_option("--max-new-tokens", max_new_tokens, "tokens to generate");
    run->add_option("--seed", seed, "sampling seed");
    run->add_flag("--no-timings", no_timings, "zero wall-clock metrics in the output");

    CLI::App* bench = app.add_subcommand("bench", "run the benchmark matrix");
    bench->add_option("--config", config_path, "bench config json")->required();
    bench->add_option("--out", out_path, "report output path")->required();
    bench->add_option("--format", format, "json | csv");
    bench->add_option("--jobs", jobs, "worker threads (overrides config)");

    CLI::App* perf = app.add_subcommand("perf-model", "evaluate the analytical perf model");
    perf->add_option("--params", params_path, "perf params json")->required();

    int rc = 0;
    gen->callback([&] { rc = cmd_gen_weights(config_path, seed, out_path); });
    cal->callback([&] { rc = cmd_calibrate(model_path, corpus_path, alpha, out_path); });
    run->callback([&] {
        rc = cmd_generate(model_path, prompt_path, method, temperature, gamma, k_min, k_max,
                          max_new_tokens, seed, no_timings);
    });
    bench->callback([&] { rc = cmd_bench(config_path, out_path, format, jobs); });
    perf->callback([&] { rc = cmd_perf_model(params_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
