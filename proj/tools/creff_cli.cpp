#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "creff/config.hpp"
#include "creff/errors.hpp"
#include "creff/experiment.hpp"

namespace {

creff::ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& sets) {
    creff::ExperimentConfig cfg = creff::parse_config(path, sets);
    if (const char* dir = std::getenv("CREFF_OUT_DIR")) {
        if (*dir != '\0') cfg.out_dir = dir;
    }
    return cfg;
}

// Exit codes: 0 fine, 1 the configuration is wrong, 2 the stage blew up.
template <typename F>
int guarded(const char* stage, F&& work) {
    try {
        work();
        return 0;
    } catch (const creff::ConfigError& e) {
        std::cerr << stage << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << stage << " failed: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated-learning simulator with gradient-matched "
                 "server-side features and classifier re-training"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("-c,--config", config_path, "config file (flat `key = value` lines)");
    app.add_option("-s,--set", sets, "override a config key, e.g. --set T=5");

    auto* run = app.add_subcommand("run", "execute one configured run");
    std::string resume;
    run->add_option("--resume", resume, "checkpoint file to continue from");

    auto* compare = app.add_subcommand("compare", "run several methods on the identical world");
    std::vector<std::string> method_names;
    compare->add_option("methods", method_names,
                        "two or more of: fedavg fedprox taunorm creff");

    auto* sweep = app.add_subcommand("sweep-m", "one creff run per bank size");
    std::vector<std::size_t> m_values;
    sweep->add_option("m", m_values, "bank sizes, e.g. 0 1 10 50");

    auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as idx files");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured test set");
    std::string checkpoint_path;
    eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();

    for (CLI::App* sub : {run, compare, sweep, gen, eval}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (run->parsed()) {
        return guarded("run", [&] {
            creff::cmd_run(load_config(config_path, sets), resume);
        });
    }
    if (compare->parsed()) {
        return guarded("compare", [&] {
            std::vector<creff::Method> methods;
            for (const std::string& name : method_names) {
                methods.push_back(creff::parse_method(name));
            }
            creff::cmd_compare(load_config(config_path, sets), methods, std::cout);
        });
    }
    if (sweep->parsed()) {
        return guarded("sweep-m", [&] {
            creff::cmd_sweep_m(load_config(config_path, sets), m_values, std::cout);
        });
    }
    if (gen->parsed()) {
        return guarded("gen-data", [&] {
            creff::cmd_gen_data(load_config(config_path, sets), std::cout);
        });
    }
    return guarded("eval", [&] {
        creff::cmd_eval(load_config(config_path, sets), checkpoint_path, std::cout);
    });
}
