#include "doctest.h"

#include "tsflow/harness.hpp"
#include "tsflow/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace tsflow;
using namespace tsflow::harness;

namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& text) {
    std::size_t lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

// fresh scratch directory per section; reruns overwrite deterministically
fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("tsflow_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// a value-shrunk config so command tests stay fast: N = 16 with two signals,
// a stable sampler step, and a dit that still satisfies L d >= N + 1
ExperimentConfig small_config() {
    ExperimentConfig cfg = desk_default();
    cfg.seed = 5;
    cfg.data.N = 16;
    cfg.data.N_x = 12;
    cfg.data.index_seed = 3;
    cfg.data.delta = 1.0 / 16.0;
    cfg.data.per_signal = 2;
    cfg.data.signals = {{"linear-ramp", {0.8, 0.3}}, {"sine-mixture", {1.0, 0.8, 0.4}}};
    cfg.basis_n = 4;
    cfg.flow.alpha = 0.004;
    cfg.flow.T = 8;
    cfg.flow.ode_substeps = 8;
    cfg.dit = {2, 9, 1, 2, 1, 4, 40, 0.2, 8, 0.1};
    cfg.sample.series_id = 1;
    cfg.convergence.T_list = {2, 8};
    cfg.generalization.n_list = {2, 4};
    cfg.generalization.v_list = {0.0, 1e-4};
    cfg.generalization.num_resamples = 4;
    return cfg;
}

std::string expect_config_error(const std::string& text) {
    try {
        (void)config_from_json(text);
    } catch (const invalid_config& ex) {
        return ex.what();
    }
    FAIL("expected invalid_config for: ", text);
    return {};
}

}  // namespace

TEST_CASE("default config validates and round-trips through its canonical form") {
    const ExperimentConfig cfg = desk_default();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.seed == 2);
    CHECK(cfg.data.N == 32);
    CHECK(cfg.checks.empty());

    const std::string canonical = config_json(cfg);
    const ExperimentConfig reparsed = config_from_json(canonical);
    CHECK(config_json(reparsed) == canonical);
    CHECK(canonical.substr(0, 20) == "{\n  \"schema_version\"");
}

TEST_CASE("the shipped default config file matches the built-in defaults") {
    const std::string text = read_text(fs::path(TSFLOW_SOURCE_DIR) / "configs/default.json");
    const ExperimentConfig cfg = config_from_json(text);
    CHECK(config_json(cfg) == config_json(desk_default()));
}

TEST_CASE("parsing overlays partial documents onto the defaults") {
    const ExperimentConfig cfg =
        config_from_json(R"({"seed": 7, "flow": {"T": 16}, "basis": {"n": 6}})");
    CHECK(cfg.seed == 7);
    CHECK(cfg.flow.T == 16);
    CHECK(cfg.basis_n == 6);
    CHECK(cfg.data.N == 32);
    CHECK(cfg.flow.sigma_min == 0.5);
    CHECK(cfg.data.signals.size() == 4);
}

TEST_CASE("strict parsing rejects malformed documents and names the offender") {
    CHECK(expect_config_error("not json").find("invalid JSON") != std::string::npos);
    CHECK(expect_config_error("[1, 2]").find("object") != std::string::npos);
    CHECK(expect_config_error(R"({"bogus": 1})").find("bogus") != std::string::npos);
    CHECK(expect_config_error(R"({"data": {"bogus": 1}})").find("bogus") != std::string::npos);
    CHECK(expect_config_error(R"({"flow": {"alpha": "x"}})").find("flow.alpha") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"seed": -1})").find("seed") != std::string::npos);
    CHECK(expect_config_error(R"({"checks": ["nope"]})").find("nope") != std::string::npos);
    CHECK(expect_config_error(R"({"checks": ["dit", "dit"]})").find("duplicate") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"data": {"signals": [{"family": "linear-ramp"}]}})")
              .find("parameters") != std::string::npos);
    CHECK(expect_config_error(R"({"data": {"signals": [{"family": "square-wave",
                                   "parameters": [1.0]}]}})")
              .find("square-wave") != std::string::npos);
}

TEST_CASE("range validation names the violated constraint") {
    CHECK(expect_config_error(R"({"basis": {"n": 64}})").find("basis.n") != std::string::npos);
    CHECK(expect_config_error(R"({"data": {"N_x": 32}})").find("N_x") != std::string::npos);
    CHECK(expect_config_error(R"({"data": {"mode": "extrapolate"}})").find("mode") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"convergence": {"T_list": []}})").find("T_list") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"generalization": {"n_list": [4, 2]}})")
              .find("increasing") != std::string::npos);
    CHECK(expect_config_error(R"({"dit": {"L": 1, "d": 16}})").find("dit") != std::string::npos);
    CHECK(expect_config_error(R"({"sample": {"series_id": 32}})").find("series_id") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"sample": {"field": "magic"}})").find("field") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"predictor": {"kind": "mlp"}})").find("kind") !=
          std::string::npos);
    CHECK(expect_config_error(R"({"flow": {"alpha": 0.0}})").find("alpha") != std::string::npos);
    CHECK(expect_config_error(R"({"schema_version": 2})").find("schema_version") !=
          std::string::npos);
}

TEST_CASE("check selector runs exactly the named checks in canonical order") {
    ExperimentConfig cfg = small_config();
    cfg.checks = {"basis_correctness", "pinv_lemmas"};  // config order is ignored
    const VerificationReport report = run_checks(cfg);
    REQUIRE(report.checks.size() == 2);
    CHECK(report.checks[0].check_id == "pinv_lemmas");
    CHECK(report.checks[1].check_id == "basis_correctness");
    CHECK(report.checks[0].pass);
    CHECK(report.checks[1].pass);
    CHECK(report.overall_pass);
    CHECK(report.seed == cfg.seed);
    for (const CheckEntry& e : report.checks) {
        CHECK(!e.statement.empty());
        CHECK(e.runtime_ms >= 0.0);
        CHECK(!e.stats.empty());
    }

    // the CSV form omits runtimes and is byte-stable across reruns; the JSON
    // form is byte-stable once runtime_ms (its only wall-clock field) is zeroed
    VerificationReport rerun = run_checks(cfg);
    CHECK(report_csv(report) == report_csv(rerun));
    CHECK(report_csv(report).substr(0, 34) == "check_id,pass,lhs,rhs,stats,note\np");
    VerificationReport normalized = report;
    for (CheckEntry& e : normalized.checks) e.runtime_ms = 0.0;
    for (CheckEntry& e : rerun.checks) e.runtime_ms = 0.0;
    CHECK(report_json(normalized) == report_json(rerun));
}

TEST_CASE("report json carries every field of each check entry") {
    ExperimentConfig cfg = small_config();
    cfg.checks = {"pinv_lemmas"};
    const VerificationReport report = run_checks(cfg);
    const nlohmann::json j = nlohmann::json::parse(report_json(report));
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("seed") == cfg.seed);
    CHECK(j.at("precision") == "double");
    CHECK(j.at("overall_pass") == true);
    REQUIRE(j.at("checks").size() == 1);
    const auto& c = j.at("checks")[0];
    for (const char* key :
         {"check_id", "statement", "pass", "lhs", "rhs", "stats", "note", "runtime_ms"})
        CHECK(c.contains(key));
    CHECK(c.at("check_id") == "pinv_lemmas");
    CHECK(c.at("stats").is_object());
}

TEST_CASE("all_check_ids is the canonical nine-check order") {
    const auto& ids = all_check_ids();
    REQUIRE(ids.size() == 9);
    CHECK(ids.front() == "pinv_lemmas");
    CHECK(ids[4] == "gd_lemma_suite");
    CHECK(ids.back() == "dit");
}

TEST_CASE("data and basis commands write the documented artifacts") {
    const ExperimentConfig cfg = small_config();
    const fs::path dir = scratch_dir("data");

    CHECK(cmd_data(cfg, dir.string()) == 0);
    const std::string csv = read_text(dir / "dataset.csv");
    CHECK(csv.substr(0, 30) == "series_id,tau,value,is_input\n0");
    // 4 series of N = 16 points plus the header
    CHECK(line_count(csv) == 1 + 4 * 16);

    const nlohmann::json meta = nlohmann::json::parse(read_text(dir / "dataset.json"));
    CHECK(meta.at("N") == 16);
    CHECK(meta.at("I_x").size() == 12);
    CHECK(meta.at("I_y").size() == 4);
    CHECK(meta.at("series").size() == 4);
    CHECK(meta.at("series")[0].at("family") == "linear-ramp");

    CHECK(cmd_basis(cfg, dir.string()) == 0);
    const std::string basis = read_text(dir / "basis.csv");
    CHECK(basis.substr(0, 14) == "tau,P1,P2,P3,P");
    CHECK(line_count(basis) == 1 + 16);

    // rerunning produces byte-identical files
    const std::string before = read_text(dir / "dataset.csv");
    CHECK(cmd_data(cfg, dir.string()) == 0);
    CHECK(read_text(dir / "dataset.csv") == before);
}

TEST_CASE("sample command writes a trace and its error summary") {
    const ExperimentConfig cfg = small_config();
    const fs::path dir = scratch_dir("sample");
    CHECK(cmd_sample(cfg, dir.string()) == 0);

    const std::string trace = read_text(dir / "trace.csv");
    CHECK(trace.substr(0, 2) == "t,");
    CHECK(line_count(trace) == 1 + 1 + cfg.flow.T);  // header + initial state + T steps

    const nlohmann::json j = nlohmann::json::parse(read_text(dir / "sample.json"));
    CHECK(j.at("series_id") == 1);
    CHECK(j.at("field") == "drift");
    CHECK(j.at("noise_on") == false);
    CHECK(j.at("x1").size() == 4);
    CHECK(j.at("f_y").size() == 4);
    CHECK(j.at("squared_error").get<double>() >= 0.0);
    CHECK(j.at("predictor_risk").get<double>() >= 0.0);

    // rerunning with the same seed reproduces the trace byte for byte
    CHECK(cmd_sample(cfg, dir.string()) == 0);
    CHECK(read_text(dir / "trace.csv") == trace);

    // the zero field leaves the initial state untouched when noise is off
    ExperimentConfig zero_cfg = cfg;
    zero_cfg.sample.field = "zero";
    const fs::path zdir = scratch_dir("sample_zero");
    CHECK(cmd_sample(zero_cfg, zdir.string()) == 0);
    const std::string ztrace = read_text(zdir / "trace.csv");
    std::istringstream lines(ztrace);
    std::string header, first, line, last;
    std::getline(lines, header);
    std::getline(lines, first);
    while (std::getline(lines, line)) last = line;
    CHECK(first.substr(first.find(',')) == last.substr(last.find(',')));
}

TEST_CASE("default-config sample error stays within the predictor's risk") {
    const ExperimentConfig cfg = desk_default();
    const fs::path dir = scratch_dir("sample_default");
    CHECK(cmd_sample(cfg, dir.string()) == 0);
    const nlohmann::json j = nlohmann::json::parse(read_text(dir / "sample.json"));
    const double err = j.at("squared_error").get<double>();
    const double risk = j.at("predictor_risk").get<double>();
    CHECK(err <= risk + 1e-2);
}

TEST_CASE("oracle and kernel variants of the sample command run clean") {
    ExperimentConfig cfg = small_config();
    cfg.sample.field = "oracle";
    cfg.sample.noise_on = true;
    const fs::path dir = scratch_dir("sample_oracle");
    CHECK(cmd_sample(cfg, dir.string()) == 0);

    cfg.predictor.kind = "kernel";
    cfg.sample.field = "drift";
    cfg.sample.noise_on = false;
    CHECK(cmd_sample(cfg, dir.string()) == 0);
    const nlohmann::json j = nlohmann::json::parse(read_text(dir / "sample.json"));
    CHECK(j.at("field") == "drift");
}

TEST_CASE("converge and generalize commands write their tables") {
    const ExperimentConfig cfg = small_config();
    const fs::path dir = scratch_dir("tables");

    CHECK(cmd_converge(cfg, dir.string()) == 0);
    const std::string conv = read_text(dir / "convergence.csv");
    CHECK(conv.substr(0, 47) == "T,alpha,min_grad_norm_sq,steps_to_eps,diverged\n");
    CHECK(line_count(conv) == 1 + cfg.convergence.T_list.size());

    CHECK(cmd_generalize(cfg, dir.string()) == 0);
    const std::string risk = read_text(dir / "risk.csv");
    CHECK(risk.substr(0, 38) == "predictor,v,n,risk,num_samples,seed\nre");
    CHECK(line_count(risk) ==
          1 + cfg.generalization.n_list.size() * cfg.generalization.v_list.size());

    const std::string before = read_text(dir / "risk.csv");
    CHECK(cmd_generalize(cfg, dir.string()) == 0);
    CHECK(read_text(dir / "risk.csv") == before);
}

TEST_CASE("train-dit command reports progress through its exit code") {
    ExperimentConfig cfg = small_config();
    const fs::path dir = scratch_dir("train");

    CHECK(cmd_train_dit(cfg, dir.string()) == 0);
    const std::string loss = read_text(dir / "dit_loss.csv");
    CHECK(loss.substr(0, 10) == "step,loss\n");
    CHECK(line_count(loss) == std::size_t(1 + cfg.dit.steps + 1));
    const auto params = nlohmann::json::parse(read_text(dir / "dit_params.json"));
    CHECK(params.is_object());

    // zero steps cannot improve the loss, so the command reports failure
    cfg.dit.steps = 0;
    CHECK(cmd_train_dit(cfg, scratch_dir("train0").string()) == 3);
}

TEST_CASE("verify command writes reports and maps pass state to its exit code") {
    ExperimentConfig cfg = small_config();
    cfg.checks = {"pinv_lemmas", "basis_correctness"};
    const fs::path dir = scratch_dir("verify");
    CHECK(cmd_verify(cfg, dir.string()) == 0);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "report.csv"));
    const std::string csv = read_text(dir / "report.csv");
    CHECK(line_count(csv) == 1 + cfg.checks.size());
}

TEST_CASE("an unstable sampler step surfaces as divergence_error") {
    ExperimentConfig cfg = small_config();
    cfg.flow.alpha = 1.0;  // alpha T far beyond 2 / L1: the iteration explodes
    cfg.flow.T = 64;
    CHECK_THROWS_AS((void)cmd_sample(cfg, scratch_dir("diverge").string()), divergence_error);
}
