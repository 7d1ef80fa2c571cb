#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "quasar/model.hpp"
#include "quasar/specdec.hpp"

namespace quasar {

// Benchmark harness: runs a matrix of {method, temperature, gamma, k-range,
// retain-fraction} cells over a prompt corpus and emits machine-readable
// reports. A vanilla baseline always runs per (prompt, temperature) so every
// record carries a speedup against it.

enum class Method {
    vanilla,
    ngram_bf,        // n-gram drafting, full-precision verifier
    quasar,          // n-gram drafting, quantized verifier
    pruned_drafter,  // layer-dropped model drafts, full-precision verifier
};

std::string method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

struct RunConfig {
    std::vector<Method> methods;
    std::string weights_path;
    std::string quantized_weights_path;  // required by the quasar method
    std::string corpus_path;
    std::vector<double> temperatures{0.0};
    std::vector<int> gammas{5};
    std::vector<std::pair<int, int>> k_ranges{{1, 4}};
    std::vector<double> retain_fractions;  // required by pruned-drafter
    int max_new_tokens = 64;
    uint64_t seed = 0;
    bool no_timings = false;  // zero all wall-clock-derived fields
    int jobs = 1;

    void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

struct RunRecord {
    Method method = Method::vanilla;
    double temperature = 0.0;
    int gamma = 0;       // 0 for vanilla
    int k_min = 0;       // 0 when the method has no lookup range
    int k_max = 0;
    double retain_fraction = 0.0;  // 0 unless pruned-drafter
    int prompt_index = 0;
    uint64_t run_seed = 0;  // the exact seed this run used
    DecodeMetrics metrics;
    double speedup = 0.0;  // tokens/s vs the vanilla run of same (prompt, temperature)
    // perf-model annotation fitted from this record's own timings
    double perf_t_draft_s = 0.0;   // per step
    double perf_t_verify_s = 0.0;  // per step
    double perf_predicted_tokens_per_s = 0.0;
};

// per-cell aggregate; both averaging conventions are reported and labeled
struct CellSummary {
    Method method = Method::vanilla;
    double temperature = 0.0;
    int gamma = 0;
    int k_min = 0;
    int k_max = 0;
    double retain_fraction = 0.0;
    double mean_acceptance_length = 0.0;  // micro: sum tokens / sum steps
    double mean_acceptance_rate = 0.0;    // micro: sum accepted / sum proposed
    double macro_speedup = 0.0;           // mean of per-prompt speedups
    double micro_speedup = 0.0;           // prompt-set wall-clock ratio
};

struct RunReport {
    int schema_version = 1;
    RunConfig config;
    std::vector<RunRecord> records;
    std::vector<CellSummary> summary;
};

// plain text: one prompt per line, empty lines skipped, byte-level tokens
// with a leading bos. jsonl (by .jsonl suffix): one object per line with a
// "prompt" string field.
std::vector<std::vector<Token>> ingest_corpus(const std::string& path);

RunReport run_matrix(const RunConfig& cfg);

std::string report_to_json(const RunReport& report);
std::string report_to_csv(const RunReport& report);
RunReport report_from_json(const std::string& text);

// format is "json" or "csv"
void emit_report(const RunReport& report, const std::string& format,
                 const std::string& path);

}  // namespace quasar
