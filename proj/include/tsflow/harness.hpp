#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsflow/datamodel.hpp"
#include "tsflow/flow.hpp"
#include "tsflow/polybasis.hpp"
#include "tsflow/types.hpp"

namespace tsflow::harness {

// Config sections mirror the JSON document one to one. Parsing overlays a
// document onto desk_default(), so a config may name only the fields it
// changes; unknown keys are rejected.

struct SignalConfig {
    std::string family;  // family_name() spelling: "linear-ramp", ...
    std::vector<double> parameters;
};

struct DataConfig {
    Index N = 32;
    Index N_x = 24;
    std::string mode = "imputation";  // or "forecast"
    std::uint64_t index_seed = 215;
    double delta = 1.0 / 32.0;
    double noise_variance = 1e-4;
    Index per_signal = 8;
    std::vector<SignalConfig> signals;
};

struct PredictorConfig {
    std::string kind = "regularized";  // or "kernel"
    double bandwidth = 0.0;            // kernel only; <= 0 selects automatically
};

struct DitConfig {
    Index L = 2, d = 17, K = 1, h = 2, m = 1, r = 4;
    int steps = 200;
    double lr = 0.2;
    Index mc_batch = 32;
    double init_scale = 0.1;
};

struct SampleConfig {
    Index series_id = 0;
    std::string field = "drift";  // "zero" | "drift" | "oracle"
    bool noise_on = false;
};

struct ConvergenceConfig {
    std::vector<int> T_list{4, 16, 64, 256};
    double epsilon = 1e-3;
};

struct GeneralizationConfig {
    std::vector<Index> n_list{2, 4, 6, 8};
    std::vector<double> v_list{0.0, 1e-4, 1e-2};
    Index num_resamples = 64;
};

struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 2;
    std::vector<std::string> checks;  // subset of all_check_ids(); empty = all
    DataConfig data;
    Index basis_n = 8;
    PredictorConfig predictor;
    flow::FlowConfig flow;
    DitConfig dit;
    SampleConfig sample;
    ConvergenceConfig convergence;
    GeneralizationConfig generalization;

    // every range constraint of the referenced modules, enforced at load
    void validate() const;
};

// the toy problem every acceptance figure is quoted at
ExperimentConfig desk_default();

// strict parse: overlays the document onto desk_default(); unknown keys,
// wrong types, and out-of-range values raise invalid_config
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_json(const ExperimentConfig& cfg);  // canonical round-trip form

// materialized experiment inputs shared by the commands and checks
struct Problem {
    data::IndexSets sets;
    poly::PolynomialBasis basis;
    std::vector<data::SignalSpec> signals;
    data::Dataset dataset;
    flow::FlowContext ctx;
    double L1 = 0.0;
};
Problem build_problem(const ExperimentConfig& cfg);

struct CheckEntry {
    std::string check_id;
    std::string statement;  // plain-language property the check verifies
    bool pass = false;
    double lhs = 0.0;
    double rhs = 0.0;
    std::vector<std::pair<std::string, double>> stats;  // insertion-ordered
    std::string note;
    double runtime_ms = 0.0;
};

struct VerificationReport {
    int schema_version = 1;
    std::uint64_t seed = 0;
    bool overall_pass = false;
    std::vector<CheckEntry> checks;
};

// canonical check order: pinv_lemmas, basis_correctness, flow_identities,
// gd_equivalence, gd_lemma_suite, convergence, generalization, end_to_end, dit
const std::vector<std::string>& all_check_ids();

// run the selected checks (config order ignored; canonical order kept); a
// check that throws is reported failed with the message in `note`
VerificationReport run_checks(const ExperimentConfig& cfg);

// report.json carries runtime_ms and so is the one output exempt from
// byte-identical reruns; report.csv omits runtime and is byte-stable
std::string report_json(const VerificationReport& report);
std::string report_csv(const VerificationReport& report);

// column contracts: "tau,P1..Pn", "series_id,tau,value,is_input",
// "predictor,v,n,risk,num_samples,seed"
std::string basis_csv(const poly::PolynomialBasis& basis);
std::string dataset_csv(const data::Dataset& dataset, double delta);
std::string dataset_json(const ExperimentConfig& cfg, const data::Dataset& dataset);

// Commands write their artifacts under out_dir and return the process exit
// code (0 pass, 3 failed check); config and usage problems throw, and
// divergence_error escapes for the caller to map to exit 4.
int cmd_verify(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_data(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_basis(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_sample(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_train_dit(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_converge(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_generalize(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace tsflow::harness
