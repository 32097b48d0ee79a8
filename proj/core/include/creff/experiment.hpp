#ifndef CREFF_EXPERIMENT_HPP
#define CREFF_EXPERIMENT_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "creff/checkpoint.hpp"
#include "creff/config.hpp"
#include "creff/creff.hpp"
#include "creff/fl.hpp"

namespace creff {

// Train/test data before partitioning. Synthetic worlds draw one mixture
// and split it so both sides share the same class means; idx worlds load
// the files and shape the training side to the long-tail profile.
struct RawData {
    LabeledDataset train;
    LabeledDataset test;
};

RawData build_datasets(const ExperimentConfig& cfg);

// The materialized experiment: partitioned clients, balanced test set,
// global training class counts, and the round-0 model. Every piece derives
// deterministically from the config (one master seed drives data, split,
// and weights).
struct World {
    std::vector<ClientState> clients;
    LabeledDataset testset;
    std::vector<std::size_t> train_counts;
    ModelParams init_model;
};

World build_world(const ExperimentConfig& cfg);

struct RunResult {
    std::vector<RoundReport> reports;
    ModelParams final_global;
    Matrix final_retrained;  // the method's output classifier (== final_global's
                             // classifier for methods without a second one)
};

// In-memory run: no files touched. Feature-dissimilarity diagnostics are
// filled for bank-carrying runs.
RunResult run_experiment(const ExperimentConfig& cfg);

// Full harness run: writes rounds.csv, summary.json and checkpoint.bin
// under cfg.out_dir, honors stop_after_round, and with `resume_from` set
// continues from that checkpoint (whose config echo must match cfg).
RunResult cmd_run(const ExperimentConfig& cfg, const std::string& resume_from = {});

// Runs each method on the identical world (same master seed) and prints a
// final-accuracy table with deltas against the first method; also writes
// compare.csv under cfg.out_dir. Needs >= 2 methods.
void cmd_compare(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                 std::ostream& out);

// One bank-size sweep: a creff run per m value on the identical world,
// final accuracy per m; writes sweep_m.csv under cfg.out_dir. Duplicate m
// values are dropped with a warning on stderr.
void cmd_sweep_m(const ExperimentConfig& cfg, const std::vector<std::size_t>& m_values,
                 std::ostream& out);

// Writes the config's synthetic train/test datasets as two idx file pairs
// under cfg.out_dir (train-images/-labels, test-images/-labels).
void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out);

// Evaluates a checkpoint's models on the config's test set; JSON to `out`.
void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              std::ostream& out);

// rounds.csv pieces, exposed so tests can pin the schema.
const char* rounds_csv_schema_stamp();  // first line of the file
const char* rounds_csv_header();        // second line
std::string rounds_csv_row(const RoundReport& report);

// summary.json for a finished run (schema_version, config echo, final
// round's numbers). NaN serializes as null.
std::string summary_json(const ExperimentConfig& cfg, const std::vector<RoundReport>& reports,
                         std::size_t rounds_before);

}  // namespace creff

#endif  // CREFF_EXPERIMENT_HPP
