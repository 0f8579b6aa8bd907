// Command line front end. Exit codes: 0 success, 1 config error, 2 usage
// error, 3 failed checks, 4 sampler divergence.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "tsflow/harness.hpp"
#include "tsflow/types.hpp"

namespace {

struct SubArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common_options(CLI::App* sub, SubArgs& args) {
    sub->add_option("--config", args.config_path, "JSON config file (defaults apply if omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out_dir, "output directory for artifacts")
        ->capture_default_str();
    args.seed_opt = sub->add_option("--seed", args.seed, "override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace tsflow;

    CLI::App app{"flow-matching sampler experiment harness"};
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const harness::ExperimentConfig&, const std::string&);
    };
    const Command commands[] = {
        {"verify", "run the verification checks and write report.json / report.csv",
         harness::cmd_verify},
        {"data", "generate the dataset and write dataset.csv / dataset.json", harness::cmd_data},
        {"basis", "write the orthonormal polynomial basis as basis.csv", harness::cmd_basis},
        {"sample", "run the sampler on one series and write trace.csv / sample.json",
         harness::cmd_sample},
        {"train-dit", "train the transformer field and write dit_loss.csv / dit_params.json",
         harness::cmd_train_dit},
        {"converge", "run the step-count sweep and write convergence.csv",
         harness::cmd_converge},
        {"generalize", "sweep noise level and basis size, write risk.csv",
         harness::cmd_generalize},
    };

    SubArgs args[std::size(commands)];
    CLI::App* subs[std::size(commands)];
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        subs[i] = app.add_subcommand(commands[i].name, commands[i].help);
        add_common_options(subs[i], args[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (std::size_t i = 0; i < std::size(commands); ++i) {
        if (!subs[i]->parsed()) continue;
        try {
            harness::ExperimentConfig cfg = args[i].config_path.empty()
                                                ? harness::desk_default()
                                                : harness::load_config(args[i].config_path);
            if (args[i].seed_opt->count() > 0) cfg.seed = args[i].seed;
            cfg.validate();
            return commands[i].run(cfg, args[i].out_dir);
        } catch (const divergence_error& e) {
            std::fprintf(stderr, "error: sampler diverged: %s\n", e.what());
            return 4;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 1;
        }
    }
    return 2;
}
