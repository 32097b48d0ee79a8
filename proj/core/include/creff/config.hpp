#ifndef CREFF_CONFIG_HPP
#define CREFF_CONFIG_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "creff/creff.hpp"
#include "creff/fl.hpp"
#include "creff/metrics.hpp"

namespace creff {

// Everything a run needs, with defaults = the "desk_scale" preset: small
// enough to finish in seconds per run while exercising every protocol
// path. Key names in config files mirror the field names below, single
// letters included — they are the notation the whole artifact speaks
// (C classes, K clients, T rounds, m features per class, I feature steps,
// J re-training steps, IF imbalance factor).
struct ExperimentConfig {
    Method method = Method::fedavg;
    std::string preset = "desk_scale";

    // data world
    std::string data_source = "synthetic";  // synthetic | idx
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t C = 10;
    std::size_t input_dim = 32;
    std::size_t n_max = 500;
    double IF = 100.0;
    double alpha = 0.5;
    double separation = 6.0;
    double noise_sigma = 1.0;
    std::size_t test_per_class = 100;

    // federation
    std::size_t K = 20;
    double client_ratio = 0.4;
    std::size_t T = 30;

    // model
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t d = 32;

    // local optimization
    double lr_local = 0.1;
    std::size_t batch_size = 32;
    std::size_t local_epochs = 1;
    double mu = 0.01;  // fedprox
    double tau = 1.0;  // taunorm

    // server-side feature bank
    std::size_t m = 20;
    std::size_t I = 50;
    std::size_t J = 100;
    double lr_feature = 0.1;
    double lr_retrain = 0.1;
    RetrainInit retrain_init = RetrainInit::warm;

    // bookkeeping (not part of the experiment's identity)
    std::uint64_t master_seed = 1;
    GroupThresholds thresholds = GroupThresholds::imagenet_lt();
    std::string out_dir = "out";
    std::size_t checkpoint_every = 1;   // rounds between checkpoints; 0 = off
    std::size_t threads = 1;
    std::size_t stop_after_round = 0;   // stop after this many rounds; 0 = run all T
};

// Flat `key = value` text, one pair per line, `#` starts a comment. A
// `preset` key (desk_scale | paper) resets the base values and is applied
// before every other key, wherever it appears; later assignments win.
// `overrides` are extra key=value pairs (from the command line) applied
// after the file. Unknown keys, malformed values, and constraint
// violations throw ConfigError naming the key.
ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides);

// Constraint checks only (parse_config already calls this).
void validate_config(const ExperimentConfig& cfg);

// The world-defining keys and values in canonical order — what goes into
// checkpoints and summaries so a resumed run can prove it matches. Output
// knobs (out_dir, checkpoint cadence, threads, stop_after_round) are
// excluded on purpose: they may differ between the two halves of an
// interrupted run.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg);

const char* method_name(Method m);
Method parse_method(const std::string& name);  // throws ConfigError("method", ...)

// Shortest round-trip decimal form of a double (plain "nan"/"inf" for the
// non-finite values).
std::string format_double(double value);

}  // namespace creff

#endif  // CREFF_CONFIG_HPP
