#include <doctest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "quasar/bench.hpp"
#include "quasar/quant.hpp"
#include "quasar/tokenizer.hpp"

using namespace quasar;

namespace {

struct BenchFixture {
    std::filesystem::path dir;
    std::string weights_path, quantized_path, corpus_path;

    BenchFixture() {
        dir = std::filesystem::temp_directory_path() /
              ("quasar_bench_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);

        ModelConfig c;
        c.vocab_size = ByteTokenizer::kVocabSize;
        c.d_model = 16;
        c.n_layers = 2;
        c.n_heads = 2;
        c.d_ff = 24;
        c.max_seq_len = 128;
        ModelWeights w = generate_synthetic_weights(c, 61);
        weights_path = file("model.qzr1");
        save_weights(w, weights_path);

        std::vector<std::vector<Token>> cal = {ByteTokenizer::encode("ab ab ab"),
                                               ByteTokenizer::encode("xyz xyz")};
        QuantizedModel qm = smooth_and_quantize(w, compute_smoothing(calibrate(w, cal), w, 0.5f));
        quantized_path = file("model.qzq1");
        save_quantized(qm, quantized_path);

        corpus_path = file("corpus.txt");
        std::ofstream out(corpus_path, std::ios::binary);
        out << "ab ab ab ab ab\n";
        out << "the end. the end. the\n";
    }
    ~BenchFixture() { std::filesystem::remove_all(dir); }

    std::string file(const std::string& name) const { return (dir / name).string(); }

    RunConfig base_config() const {
        RunConfig cfg;
        cfg.methods = {Method::vanilla, Method::ngram_bf};
        cfg.weights_path = weights_path;
        cfg.quantized_weights_path = quantized_path;
        cfg.corpus_path = corpus_path;
        cfg.temperatures = {0.0};
        cfg.gammas = {4};
        cfg.k_ranges = {{1, 3}};
        cfg.max_new_tokens = 10;
        cfg.seed = 5;
        cfg.no_timings = true;
        cfg.jobs = 1;
        return cfg;
    }
};

}  // namespace

TEST_CASE("method names round trip") {
    for (Method m : {Method::vanilla, Method::ngram_bf, Method::quasar, Method::pruned_drafter})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK_FALSE(method_from_name("warp-drive").has_value());
}

TEST_CASE("corpus ingestion: plain text") {
    BenchFixture fx;
    std::string path = fx.file("lines.txt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "hello\n";
        out << "\n";                 // skipped
        out << "windows line\r\n";   // cr stripped
        out << "last";               // no trailing newline
    }
    auto prompts = ingest_corpus(path);
    REQUIRE(prompts.size() == 3);
    CHECK(prompts[0] == ByteTokenizer::encode("hello"));
    CHECK(prompts[1] == ByteTokenizer::encode("windows line"));
    CHECK(prompts[2] == ByteTokenizer::encode("last"));
    CHECK(prompts[0][0] == ByteTokenizer::kBos);
    CHECK_THROWS_AS(ingest_corpus(fx.file("missing.txt")), io_error);
}

TEST_CASE("corpus ingestion: jsonl") {
    BenchFixture fx;
    std::string path = fx.file("prompts.jsonl");
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"prompt": "alpha", "id": 1})" << "\n";
        out << R"({"prompt": "beta"})" << "\n";
    }
    auto prompts = ingest_corpus(path);
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[0] == ByteTokenizer::encode("alpha"));
    CHECK(prompts[1] == ByteTokenizer::encode("beta"));

    std::string bad = fx.file("bad.jsonl");
    {
        std::ofstream out(bad, std::ios::binary);
        out << R"({"prompt": "fine"})" << "\n";
        out << R"({"text": "wrong field"})" << "\n";
    }
    try {
        ingest_corpus(bad);
        FAIL("expected input_error");
    } catch (const input_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("run config validation") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.methods = {Method::quasar};
    cfg.quantized_weights_path.clear();
    CHECK_THROWS_AS(cfg.validate(), config_error);

    cfg = fx.base_config();
    cfg.methods = {Method::pruned_drafter};
    CHECK_THROWS_AS(cfg.validate(), config_error);  // no retain fractions
    cfg.retain_fractions = {0.5};
    CHECK_NOTHROW(cfg.validate());
    cfg.retain_fractions = {1.5};
    CHECK_THROWS_AS(cfg.validate(), config_error);

    cfg = fx.base_config();
    cfg.k_ranges = {{3, 1}};
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = fx.base_config();
    cfg.gammas = {0};
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = fx.base_config();
    cfg.temperatures = {-0.5};
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = fx.base_config();
    cfg.max_new_tokens = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("run config json round trip") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.methods = {Method::vanilla, Method::quasar, Method::pruned_drafter};
    cfg.retain_fractions = {1.0, 0.5};
    cfg.temperatures = {0.0, 0.9};
    RunConfig r = run_config_from_json(run_config_to_json(cfg));
    CHECK(r.methods == cfg.methods);
    CHECK(r.weights_path == cfg.weights_path);
    CHECK(r.quantized_weights_path == cfg.quantized_weights_path);
    CHECK(r.corpus_path == cfg.corpus_path);
    CHECK(r.temperatures == cfg.temperatures);
    CHECK(r.gammas == cfg.gammas);
    CHECK(r.k_ranges == cfg.k_ranges);
    CHECK(r.retain_fractions == cfg.retain_fractions);
    CHECK(r.max_new_tokens == cfg.max_new_tokens);
    CHECK(r.seed == cfg.seed);
    CHECK(r.no_timings == cfg.no_timings);
    CHECK(r.jobs == cfg.jobs);

    nlohmann::json bad = run_config_to_json(cfg);
    bad["methods"] = {"warp-drive"};
    CHECK_THROWS_AS(run_config_from_json(bad), config_error);
}

TEST_CASE("run matrix shape, vanilla baseline, and seeds") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    RunReport report = run_matrix(cfg);

    // one vanilla cell + one ngram cell, two prompts each
    REQUIRE(report.records.size() == 4);
    REQUIRE(report.summary.size() == 2);
    CHECK(report.schema_version == 1);

    const RunRecord& v0 = report.records[0];
    CHECK(v0.method == Method::vanilla);
    CHECK(v0.metrics.mean_acceptance_length == 1.0);
    CHECK(v0.metrics.steps == 10);
    CHECK(v0.gamma == 0);
    const RunRecord& n0 = report.records[2];
    CHECK(n0.method == Method::ngram_bf);
    CHECK(n0.prompt_index == 0);
    CHECK(n0.k_min == 1);
    CHECK(n0.k_max == 3);

    // the run seed is keyed by (temperature, prompt), not by cell
    CHECK(v0.run_seed == n0.run_seed);
    CHECK(report.records[1].run_seed != v0.run_seed);

    CHECK(report.summary[0].method == Method::vanilla);
    CHECK(report.summary[0].mean_acceptance_length == 1.0);
    CHECK(report.summary[1].mean_acceptance_length > 1.0);
}

TEST_CASE("identical configs give byte-identical reports") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    std::string a = report_to_json(run_matrix(cfg));
    std::string b = report_to_json(run_matrix(cfg));
    CHECK(a == b);
}

TEST_CASE("deterministic env flag forces a single worker") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    std::string baseline = report_to_json(run_matrix(cfg));

    setenv("QUASAR_DETERMINISTIC", "1", 1);
    cfg.jobs = 8;
    std::string forced = report_to_json(run_matrix(cfg));
    unsetenv("QUASAR_DETERMINISTIC");
    // with jobs forced to 1 the report must match the jobs=1 run exactly,
    // except for the recorded jobs count in the echoed config
    RunReport fr = report_from_json(forced);
    fr.config.jobs = 1;
    CHECK(report_to_json(fr) == baseline);
}

TEST_CASE("parallel execution yields the same records as serial") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    std::string serial = report_to_json(run_matrix(cfg));
    cfg.jobs = 4;
    RunReport par = run_matrix(cfg);
    par.config.jobs = 1;
    CHECK(report_to_json(par) == serial);
}

TEST_CASE("no_timings zeroes every wall-clock-derived field") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.no_timings = true;
    RunReport report = run_matrix(cfg);
    for (const RunRecord& r : report.records) {
        CHECK(r.metrics.draft_time_s == 0.0);
        CHECK(r.metrics.verify_time_s == 0.0);
        CHECK(r.metrics.other_time_s == 0.0);
        CHECK(r.metrics.tokens_per_second == 0.0);
        CHECK(r.speedup == 0.0);
        CHECK(r.perf_t_draft_s == 0.0);
        CHECK(r.perf_t_verify_s == 0.0);
        CHECK(r.perf_predicted_tokens_per_s == 0.0);
    }
    for (const CellSummary& s : report.summary) {
        CHECK(s.macro_speedup == 0.0);
        CHECK(s.micro_speedup == 0.0);
    }
}

TEST_CASE("with timings on, vanilla is its own baseline") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.no_timings = false;
    RunReport report = run_matrix(cfg);
    for (const RunRecord& r : report.records) {
        CHECK(r.metrics.tokens_per_second > 0.0);
        CHECK(r.speedup > 0.0);
        if (r.method == Method::vanilla) CHECK(r.speedup == 1.0);
        if (r.metrics.steps > 0) CHECK(r.perf_t_verify_s > 0.0);
    }
    for (const CellSummary& s : report.summary) {
        if (s.method == Method::vanilla) {
            CHECK(s.macro_speedup == 1.0);
            CHECK(s.micro_speedup == 1.0);
        } else {
            CHECK(s.macro_speedup > 0.0);
            CHECK(s.micro_speedup > 0.0);
        }
    }
}

TEST_CASE("quantized verifier streams exactly a quarter of the bytes per step") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.methods = {Method::vanilla, Method::quasar};
    RunReport report = run_matrix(cfg);
    REQUIRE(report.records.size() == 4);
    for (size_t pi = 0; pi < 2; ++pi) {
        const RunRecord& vr = report.records[pi];      // vanilla
        const RunRecord& qr = report.records[2 + pi];  // quasar
        REQUIRE(vr.method == Method::vanilla);
        REQUIRE(qr.method == Method::quasar);
        // per-step bytes: vanilla = 4 bytes/weight, quasar = 1
        CHECK(qr.metrics.weight_bytes_loaded * 4 * vr.metrics.steps ==
              vr.metrics.weight_bytes_loaded * qr.metrics.steps);
    }
}

TEST_CASE("pruned drafter cells carry their retain fraction") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.methods = {Method::pruned_drafter};
    cfg.retain_fractions = {1.0, 0.5};
    RunReport report = run_matrix(cfg);
    REQUIRE(report.records.size() == 6);  // vanilla baseline + 2 retain cells
    CHECK(report.records[0].method == Method::vanilla);
    const RunRecord& full = report.records[2];
    CHECK(full.method == Method::pruned_drafter);
    CHECK(full.retain_fraction == 1.0);
    CHECK(full.k_min == 0);
    // an identical drafter at T=0 drafts perfectly
    CHECK(full.metrics.acceptance_rate == 1.0);
    CHECK(report.records[4].retain_fraction == 0.5);
}

TEST_CASE("csv report has the documented header and one row per record") {
    BenchFixture fx;
    RunReport report = run_matrix(fx.base_config());
    std::string csv = report_to_csv(report);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "method,temperature,gamma,k_min,k_max,steps,total_tokens,L,acceptance_rate,"
          "tokens_per_second,speedup,weight_bytes_loaded");
    size_t rows = 0;
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        ++rows;
        size_t commas = 0;
        for (char ch : line) commas += ch == ',';
        CHECK(commas == 11);
    }
    CHECK(rows == report.records.size());
    CHECK(csv.substr(0, 7) == "method,");
}

TEST_CASE("json report round trips through the parser") {
    BenchFixture fx;
    RunConfig cfg = fx.base_config();
    cfg.methods = {Method::vanilla, Method::ngram_bf, Method::quasar};
    RunReport report = run_matrix(cfg);
    RunReport r = report_from_json(report_to_json(report));
    CHECK(r.schema_version == report.schema_version);
    REQUIRE(r.records.size() == report.records.size());
    REQUIRE(r.summary.size() == report.summary.size());
    for (size_t i = 0; i < r.records.size(); ++i) {
        CHECK(r.records[i].method == report.records[i].method);
        CHECK(r.records[i].run_seed == report.records[i].run_seed);
        CHECK(r.records[i].metrics.steps == report.records[i].metrics.steps);
        CHECK(r.records[i].metrics.weight_bytes_loaded ==
              report.records[i].metrics.weight_bytes_loaded);
        CHECK(r.records[i].metrics.mean_acceptance_length ==
              report.records[i].metrics.mean_acceptance_length);
    }
    // the round trip is exact: re-serialization is byte identical
    CHECK(report_to_json(r) == report_to_json(report));
    CHECK_THROWS_AS(report_from_json("not json at all"), format_error);
}

TEST_CASE("emit_report writes the requested format") {
    BenchFixture fx;
    RunReport report = run_matrix(fx.base_config());
    std::string jpath = fx.file("out.json");
    emit_report(report, "json", jpath);
    std::ifstream jin(jpath);
    std::string first;
    std::getline(jin, first);
    CHECK(first == "{");

    std::string cpath = fx.file("out.csv");
    emit_report(report, "csv", cpath);
    std::ifstream cin_(cpath);
    std::getline(cin_, first);
    CHECK(first.substr(0, 7) == "method,");

    CHECK_THROWS_AS(emit_report(report, "yaml", fx.file("out.yaml")), input_error);
}
