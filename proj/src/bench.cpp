#include "quasar/bench.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "quasar/perfmodel.hpp"
#include "quasar/quant.hpp"
#include "quasar/tokenizer.hpp"

namespace quasar {

using nlohmann::json;
using nlohmann::ordered_json;

std::string method_name(Method m) {
    switch (m) {
        case Method::vanilla: return "vanilla";
        case Method::ngram_bf: return "ngram-bf";
        case Method::quasar: return "quasar";
        case Method::pruned_drafter: return "pruned-drafter";
    }
    return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
    if (name == "vanilla") return Method::vanilla;
    if (name == "ngram-bf") return Method::ngram_bf;
    if (name == "quasar") return Method::quasar;
    if (name == "pruned-drafter") return Method::pruned_drafter;
    return std::nullopt;
}

void RunConfig::validate() const {
    if (methods.empty()) throw config_error("bench: no methods configured");
    if (weights_path.empty()) throw config_error("bench: weights path required");
    if (corpus_path.empty()) throw config_error("bench: corpus path required");
    if (temperatures.empty()) throw config_error("bench: at least one temperature required");
    for (double t : temperatures)
        if (t < 0.0 || !std::isfinite(t))
            throw config_error("bench: temperatures must be finite and >= 0");
    if (max_new_tokens < 1) throw config_error("bench: max_new_tokens must be >= 1");
    if (jobs < 1) throw config_error("bench: jobs must be >= 1");
    for (Method m : methods) {
        if (m == Method::quasar && quantized_weights_path.empty())
            throw config_error("bench: quasar method requires quantized_weights");
        if (m == Method::pruned_drafter && retain_fractions.empty())
            throw config_error("bench: pruned-drafter method requires retain_fractions");
        if (m != Method::vanilla && gammas.empty())
            throw config_error("bench: at least one gamma required");
        if ((m == Method::ngram_bf || m == Method::quasar) && k_ranges.empty())
            throw config_error("bench: at least one k_range required");
    }
    for (int g : gammas)
        if (g < 1) throw config_error("bench: gamma must be >= 1");
    for (auto [lo, hi] : k_ranges)
        if (lo < 1 || hi < lo) throw config_error("bench: k_range must satisfy 1 <= k_min <= k_max");
    for (double r : retain_fractions)
        if (!(r > 0.0) || r > 1.0)
            throw config_error("bench: retain_fraction must be in (0, 1]");
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    try {
        for (const auto& name : j.at("methods")) {
            auto m = method_from_name(name.get<std::string>());
            if (!m) throw config_error("bench: unknown method \"" +
                                       name.get<std::string>() + "\"");
            cfg.methods.push_back(*m);
        }
        cfg.weights_path = j.at("weights").get<std::string>();
        cfg.quantized_weights_path = j.value("quantized_weights", std::string());
        cfg.corpus_path = j.at("corpus").get<std::string>();
        if (j.contains("temperatures"))
            cfg.temperatures = j.at("temperatures").get<std::vector<double>>();
        if (j.contains("gammas")) cfg.gammas = j.at("gammas").get<std::vector<int>>();
        if (j.contains("k_ranges")) {
            cfg.k_ranges.clear();
            for (const auto& pair : j.at("k_ranges")) {
                if (!pair.is_array() || pair.size() != 2)
                    throw config_error("bench: k_ranges entries must be [k_min, k_max]");
                cfg.k_ranges.emplace_back(pair[0].get<int>(), pair[1].get<int>());
            }
        }
        if (j.contains("retain_fractions"))
            cfg.retain_fractions = j.at("retain_fractions").get<std::vector<double>>();
        cfg.max_new_tokens = j.value("max_new_tokens", 64);
        cfg.seed = j.value("seed", static_cast<uint64_t>(0));
        cfg.no_timings = j.value("no_timings", false);
        cfg.jobs = j.value("jobs", 1);
    } catch (const json::exception& e) {
        throw config_error(std::string("bench config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ordered_json run_config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["methods"] = ordered_json::array();
    for (Method m : cfg.methods) j["methods"].push_back(method_name(m));
    j["weights"] = cfg.weights_path;
    j["quantized_weights"] = cfg.quantized_weights_path;
    j["corpus"] = cfg.corpus_path;
    j["temperatures"] = cfg.temperatures;
    j["gammas"] = cfg.gammas;
    j["k_ranges"] = ordered_json::array();
    for (auto [lo, hi] : cfg.k_ranges) j["k_ranges"].push_back(ordered_json::array({lo, hi}));
    j["retain_fractions"] = cfg.retain_fractions;
    j["max_new_tokens"] = cfg.max_new_tokens;
    j["seed"] = cfg.seed;
    j["no_timings"] = cfg.no_timings;
    j["jobs"] = cfg.jobs;
    return j;
}

// ---- corpus --------------------------------------------------------------

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::vector<Token>> ingest_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open corpus " + path);
    bool jsonl = ends_with(path, ".jsonl");

    std::vector<std::vector<Token>> prompts;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string text;
        if (jsonl) {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("prompt") ||
                !j["prompt"].is_string())
                throw input_error(path + " line " + std::to_string(line_no) +
                                  ": expected an object with a string \"prompt\" field");
            text = j["prompt"].get<std::string>();
            if (text.empty()) continue;
        } else {
            text = line;
        }
        prompts.push_back(ByteTokenizer::encode(text));
    }
    return prompts;
}

// ---- run matrix ------------------------------------------------------------

namespace {

struct Cell {
    Method method = Method::vanilla;
    size_t temp_index = 0;
    int gamma = 0;
    int k_min = 0;
    int k_max = 0;
    double retain_fraction = 0.0;
    int retain_index = -1;
};

uint64_t derive_run_seed(uint64_t base, size_t temp_index, size_t prompt_index) {
    PhiloxRng r(base, (static_cast<uint64_t>(temp_index) << 32) |
                          static_cast<uint64_t>(prompt_index));
    return r.next_u64();
}

double wall_seconds(const DecodeMetrics& m) {
    return m.draft_time_s + m.verify_time_s + m.other_time_s;
}

}  // namespace

RunReport run_matrix(const RunConfig& cfg) {
    cfg.validate();
    int jobs = cfg.jobs;
    if (const char* det = std::getenv("QUASAR_DETERMINISTIC"); det && det == std::string("1"))
        jobs = 1;

    ModelWeights weights = load_weights(cfg.weights_path);
    QuantizedModel quantized;
    bool need_quantized = false;
    bool need_pruned = false;
    for (Method m : cfg.methods) {
        need_quantized |= m == Method::quasar;
        need_pruned |= m == Method::pruned_drafter;
    }
    if (need_quantized) quantized = load_quantized(cfg.quantized_weights_path);
    std::vector<ModelWeights> pruned;
    if (need_pruned)
        for (double r : cfg.retain_fractions) pruned.push_back(drop_layers(weights, r));

    std::vector<std::vector<Token>> prompts = ingest_corpus(cfg.corpus_path);
    if (prompts.empty()) throw input_error("corpus " + cfg.corpus_path + " has no prompts");
    size_t n_prompts = prompts.size();

    // vanilla baseline cells always come first, one per temperature
    std::vector<Cell> cells;
    for (size_t ti = 0; ti < cfg.temperatures.size(); ++ti)
        cells.push_back(Cell{Method::vanilla, ti, 0, 0, 0, 0.0, -1});
    size_t n_vanilla_cells = cells.size();
    for (Method m : cfg.methods) {
        if (m == Method::vanilla) continue;  // already present
        for (size_t ti = 0; ti < cfg.temperatures.size(); ++ti) {
            for (int gamma : cfg.gammas) {
                if (m == Method::pruned_drafter) {
                    for (size_t ri = 0; ri < cfg.retain_fractions.size(); ++ri)
                        cells.push_back(Cell{m, ti, gamma, 0, 0, cfg.retain_fractions[ri],
                                             static_cast<int>(ri)});
                } else {
                    for (auto [lo, hi] : cfg.k_ranges)
                        cells.push_back(Cell{m, ti, gamma, lo, hi, 0.0, -1});
                }
            }
        }
    }

    RunReport report;
    report.config = cfg;
    report.records.resize(cells.size() * n_prompts);

    Verifier fp_verifier(weights);
    Verifier q_verifier(quantized);

    auto run_task = [&](size_t task) {
        const Cell& cell = cells[task / n_prompts];
        size_t pi = task % n_prompts;
        const std::vector<Token>& prompt = prompts[pi];
        uint64_t run_seed = derive_run_seed(cfg.seed, cell.temp_index, pi);
        SamplingConfig sampling{cfg.temperatures[cell.temp_index], run_seed};

        GenerateResult result;
        switch (cell.method) {
            case Method::vanilla:
                result = vanilla_generate(fp_verifier, prompt, cfg.max_new_tokens, sampling);
                break;
            case Method::ngram_bf:
            case Method::quasar: {
                DrafterConfig dc{cell.k_min, cell.k_max, cell.gamma};
                const Verifier& v = cell.method == Method::quasar ? q_verifier : fp_verifier;
                result = speculative_generate(v, dc, prompt, cfg.max_new_tokens, sampling);
                break;
            }
            case Method::pruned_drafter:
                result = speculative_generate_with_draft_model(
                    fp_verifier, pruned[static_cast<size_t>(cell.retain_index)], cell.gamma,
                    prompt, cfg.max_new_tokens, sampling);
                break;
        }

        RunRecord& rec = report.records[task];
        rec.method = cell.method;
        rec.temperature = cfg.temperatures[cell.temp_index];
        rec.gamma = cell.gamma;
        rec.k_min = cell.k_min;
        rec.k_max = cell.k_max;
        rec.retain_fraction = cell.retain_fraction;
        rec.prompt_index = static_cast<int>(pi);
        rec.run_seed = run_seed;
        rec.metrics = result.metrics;
    };

    auto run_range = [&](size_t begin, size_t end) {
        if (begin >= end) return;
        std::atomic<size_t> next{begin};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&] {
            while (true) {
                size_t task = next.fetch_add(1);
                if (task >= end) return;
                try {
                    run_task(task);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        size_t span = end - begin;
        int n_threads = std::min<size_t>(static_cast<size_t>(jobs), span);
        std::vector<std::thread> pool;
        for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
        worker();
        for (std::thread& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    };

    // baseline must finish before speedups can be computed against it
    run_range(0, n_vanilla_cells * n_prompts);
    run_range(n_vanilla_cells * n_prompts, report.records.size());

    // per-record speedup vs the vanilla run of the same (prompt, temperature)
    auto vanilla_record = [&](size_t temp_index, size_t pi) -> const RunRecord& {
        return report.records[temp_index * n_prompts + pi];
    };
    for (size_t c = 0; c < cells.size(); ++c) {
        for (size_t pi = 0; pi < n_prompts; ++pi) {
            RunRecord& rec = report.records[c * n_prompts + pi];
            double base_tps = vanilla_record(cells[c].temp_index, pi).metrics.tokens_per_second;
            rec.speedup = base_tps > 0.0 ? rec.metrics.tokens_per_second / base_tps : 0.0;
            // perf-model annotation: fit per-step times from this record
            const DecodeMetrics& m = rec.metrics;
            if (m.steps > 0) {
                rec.perf_t_draft_s = m.draft_time_s / static_cast<double>(m.steps);
                rec.perf_t_verify_s = m.verify_time_s / static_cast<double>(m.steps);
                double step_latency = rec.perf_t_draft_s + rec.perf_t_verify_s;
                if (step_latency > 0.0)
                    rec.perf_predicted_tokens_per_s =
                        (rec.gamma * m.acceptance_rate + 1.0) / step_latency;
            }
        }
    }

    // cell summaries
    for (size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        CellSummary s;
        s.method = cell.method;
        s.temperature = cfg.temperatures[cell.temp_index];
        s.gamma = cell.gamma;
        s.k_min = cell.k_min;
        s.k_max = cell.k_max;
        s.retain_fraction = cell.retain_fraction;
        uint64_t tokens = 0, steps = 0, drafted = 0, accepted = 0;
        double wall = 0.0, speedup_sum = 0.0;
        uint64_t base_tokens = 0;
        double base_wall = 0.0;
        for (size_t pi = 0; pi < n_prompts; ++pi) {
            const RunRecord& rec = report.records[c * n_prompts + pi];
            tokens += rec.metrics.total_tokens;
            steps += rec.metrics.steps;
            drafted += rec.metrics.drafted_tokens;
            accepted += rec.metrics.accepted_tokens;
            wall += wall_seconds(rec.metrics);
            speedup_sum += rec.speedup;
            const RunRecord& base = vanilla_record(cell.temp_index, pi);
            base_tokens += base.metrics.total_tokens;
            base_wall += wall_seconds(base.metrics);
        }
        s.mean_acceptance_length =
            steps > 0 ? static_cast<double>(tokens) / static_cast<double>(steps) : 0.0;
        s.mean_acceptance_rate =
            drafted > 0 ? static_cast<double>(accepted) / static_cast<double>(drafted) : 0.0;
        s.macro_speedup = speedup_sum / static_cast<double>(n_prompts);
        double cell_tps = wall > 0.0 ? static_cast<double>(tokens) / wall : 0.0;
        double base_tps = base_wall > 0.0 ? static_cast<double>(base_tokens) / base_wall : 0.0;
        s.micro_speedup = base_tps > 0.0 ? cell_tps / base_tps : 0.0;
        report.summary.push_back(s);
    }

    if (cfg.no_timings) {
        for (RunRecord& rec : report.records) {
            rec.metrics.draft_time_s = 0.0;
            rec.metrics.verify_time_s = 0.0;
            rec.metrics.other_time_s = 0.0;
            rec.metrics.tokens_per_second = 0.0;
            rec.speedup = 0.0;
            rec.perf_t_draft_s = 0.0;
            rec.perf_t_verify_s = 0.0;
            rec.perf_predicted_tokens_per_s = 0.0;
        }
        for (CellSummary& s : report.summary) {
            s.macro_speedup = 0.0;
            s.micro_speedup = 0.0;
        }
    }
    return report;
}

// ---- reports ---------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

ordered_json record_to_json(const RunRecord& r) {
    ordered_json j;
    j["method"] = method_name(r.method);
    j["temperature"] = r.temperature;
    j["gamma"] = r.gamma;
    j["k_min"] = r.k_min;
    j["k_max"] = r.k_max;
    j["retain_fraction"] = r.retain_fraction;
    j["prompt_index"] = r.prompt_index;
    j["run_seed"] = r.run_seed;
    j["steps"] = r.metrics.steps;
    j["total_tokens"] = r.metrics.total_tokens;
    j["mean_acceptance_length"] = r.metrics.mean_acceptance_length;
    j["acceptance_rate"] = r.metrics.acceptance_rate;
    j["drafted_tokens"] = r.metrics.drafted_tokens;
    j["accepted_tokens"] = r.metrics.accepted_tokens;
    j["draft_time_s"] = r.metrics.draft_time_s;
    j["verify_time_s"] = r.metrics.verify_time_s;
    j["other_time_s"] = r.metrics.other_time_s;
    j["weight_bytes_loaded"] = r.metrics.weight_bytes_loaded;
    j["tokens_per_second"] = r.metrics.tokens_per_second;
    j["speedup"] = r.speedup;
    j["perf"] = ordered_json{{"t_draft_s", r.perf_t_draft_s},
                             {"t_verify_s", r.perf_t_verify_s},
                             {"predicted_tokens_per_s", r.perf_predicted_tokens_per_s}};
    return j;
}

RunRecord record_from_json(const json& j) {
    RunRecord r;
    auto m = method_from_name(j.at("method").get<std::string>());
    if (!m) throw format_error("report: unknown method name");
    r.method = *m;
    r.temperature = j.at("temperature").get<double>();
    r.gamma = j.at("gamma").get<int>();
    r.k_min = j.at("k_min").get<int>();
    r.k_max = j.at("k_max").get<int>();
    r.retain_fraction = j.at("retain_fraction").get<double>();
    r.prompt_index = j.at("prompt_index").get<int>();
    r.run_seed = j.at("run_seed").get<uint64_t>();
    r.metrics.steps = j.at("steps").get<uint64_t>();
    r.metrics.total_tokens = j.at("total_tokens").get<uint64_t>();
    r.metrics.mean_acceptance_length = j.at("mean_acceptance_length").get<double>();
    r.metrics.acceptance_rate = j.at("acceptance_rate").get<double>();
    r.metrics.drafted_tokens = j.at("drafted_tokens").get<uint64_t>();
    r.metrics.accepted_tokens = j.at("accepted_tokens").get<uint64_t>();
    r.metrics.draft_time_s = j.at("draft_time_s").get<double>();
    r.metrics.verify_time_s = j.at("verify_time_s").get<double>();
    r.metrics.other_time_s = j.at("other_time_s").get<double>();
    r.metrics.weight_bytes_loaded = j.at("weight_bytes_loaded").get<uint64_t>();
    r.metrics.tokens_per_second = j.at("tokens_per_second").get<double>();
    r.speedup = j.at("speedup").get<double>();
    const json& perf = j.at("perf");
    r.perf_t_draft_s = perf.at("t_draft_s").get<double>();
    r.perf_t_verify_s = perf.at("t_verify_s").get<double>();
    r.perf_predicted_tokens_per_s = perf.at("predicted_tokens_per_s").get<double>();
    return r;
}

ordered_json summary_to_json(const CellSummary& s) {
    ordered_json j;
    j["method"] = method_name(s.method);
    j["temperature"] = s.temperature;
    j["gamma"] = s.gamma;
    j["k_min"] = s.k_min;
    j["k_max"] = s.k_max;
    j["retain_fraction"] = s.retain_fraction;
    j["mean_acceptance_length"] = s.mean_acceptance_length;
    j["mean_acceptance_rate"] = s.mean_acceptance_rate;
    j["macro_speedup"] = s.macro_speedup;
    j["micro_speedup"] = s.micro_speedup;
    return j;
}

CellSummary summary_from_json(const json& j) {
    CellSummary s;
    auto m = method_from_name(j.at("method").get<std::string>());
    if (!m) throw format_error("report: unknown method name");
    s.method = *m;
    s.temperature = j.at("temperature").get<double>();
    s.gamma = j.at("gamma").get<int>();
    s.k_min = j.at("k_min").get<int>();
    s.k_max = j.at("k_max").get<int>();
    s.retain_fraction = j.at("retain_fraction").get<double>();
    s.mean_acceptance_length = j.at("mean_acceptance_length").get<double>();
    s.mean_acceptance_rate = j.at("mean_acceptance_rate").get<double>();
    s.macro_speedup = j.at("macro_speedup").get<double>();
    s.micro_speedup = j.at("micro_speedup").get<double>();
    return s;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
    ordered_json j;
    j["schema_version"] = report.schema_version;
    j["config"] = run_config_to_json(report.config);
    j["records"] = ordered_json::array();
    for (const RunRecord& r : report.records) j["records"].push_back(record_to_json(r));
    j["summary"] = ordered_json::array();
    for (const CellSummary& s : report.summary) j["summary"].push_back(summary_to_json(s));
    return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw format_error("report: invalid json");
    RunReport report;
    try {
        report.schema_version = j.at("schema_version").get<int>();
        report.config = run_config_from_json(j.at("config"));
        for (const json& r : j.at("records")) report.records.push_back(record_from_json(r));
        for (const json& s : j.at("summary")) report.summary.push_back(summary_from_json(s));
    } catch (const json::exception& e) {
        throw format_error(std::string("report: ") + e.what());
    }
    return report;
}

std::string report_to_csv(const RunReport& report) {
    std::ostringstream out;
    out << "method,temperature,gamma,k_min,k_max,steps,total_tokens,L,acceptance_rate,"
           "tokens_per_second,speedup,weight_bytes_loaded\n";
    for (const RunRecord& r : report.records) {
        out << method_name(r.method) << ',' << fmt_double(r.temperature) << ',' << r.gamma
            << ',' << r.k_min << ',' << r.k_max << ',' << r.metrics.steps << ','
            << r.metrics.total_tokens << ',' << fmt_double(r.metrics.mean_acceptance_length)
            << ',' << fmt_double(r.metrics.acceptance_rate) << ','
            << fmt_double(r.metrics.tokens_per_second) << ',' << fmt_double(r.speedup) << ','
            << r.metrics.weight_bytes_loaded << '\n';
    }
    return out.str();
}

void emit_report(const RunReport& report, const std::string& format,
                 const std::string& path) {
    std::string body;
    if (format == "json") {
        body = report_to_json(report);
    } else if (format == "csv") {
        body = report_to_csv(report);
    } else {
        throw input_error("emit_report: format must be json or csv, got \"" + format + "\"");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << body;
    if (!out) throw io_error("write failed for " + path);
}

}  // namespace quasar
