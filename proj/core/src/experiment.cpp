#include "creff/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "creff/errors.hpp"
#include "creff/feature_probe.hpp"
#include "creff/rng.hpp"

namespace creff {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

RawData build_datasets(const ExperimentConfig& cfg) {
    const ClassProfile profile = longtail_profile(cfg.C, cfg.n_max, cfg.IF);
    if (cfg.data_source == "synthetic") {
        // Draw train and test from one mixture so both sides share the same
        // class means, then split off the long-tail training portion.
        ClassProfile combined = profile;
        for (std::size_t& c : combined.counts) c += cfg.test_per_class;
        const LabeledDataset all =
            synth_mixture(cfg.C, cfg.input_dim, combined, cfg.separation, cfg.noise_sigma,
                          derive_seed(cfg.master_seed, "data"));
        auto [train, test] = split_by_counts(all, profile.counts);
        return {std::move(train), std::move(test)};
    }

    LabeledDataset train_all = load_idx(cfg.train_images, cfg.train_labels);
    if (train_all.num_classes() != cfg.C) {
        throw ConfigError("C", "training data holds " + std::to_string(train_all.num_classes()) +
                                   " classes, config says " + std::to_string(cfg.C));
    }
    LabeledDataset train =
        apply_profile(train_all, profile, derive_seed(cfg.master_seed, "subsample"));
    LabeledDataset test = load_idx(cfg.test_images, cfg.test_labels);
    if (test.num_classes() != cfg.C) {
        throw ConfigError("C", "test data holds " + std::to_string(test.num_classes()) +
                                   " classes, config says " + std::to_string(cfg.C));
    }
    return {std::move(train), std::move(test)};
}

World build_world(const ExperimentConfig& cfg) {
    RawData data = build_datasets(cfg);

    World world;
    world.train_counts = data.train.class_counts;

    std::vector<std::size_t> dims;
    dims.push_back(data.train.input_dim());
    for (std::size_t h : cfg.hidden) dims.push_back(h);
    dims.push_back(cfg.d);
    RngStream init_rng(derive_seed(cfg.master_seed, "model-init"));
    world.init_model = init_model(dims, cfg.C, init_rng);

    const Partition part = dirichlet_partition(data.train.labels, cfg.K, cfg.alpha,
                                               derive_seed(cfg.master_seed, "partition"));
    world.clients.reserve(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        ClientState client;
        client.id = k;
        client.data = take_rows(data.train, part.client_indices[k], cfg.C);
        client.seed_base = derive_seed(cfg.master_seed, "client", k);
        world.clients.push_back(std::move(client));
    }
    world.testset = std::move(data.test);
    return world;
}

const char* rounds_csv_schema_stamp() { return "# rounds-schema-v1"; }

const char* rounds_csv_header() {
    return "round,acc_global,acc_retrained,acc_many,acc_medium,acc_few,"
           "match_loss_many,match_loss_medium,match_loss_few,"
           "feat_dissim_many,feat_dissim_medium,feat_dissim_few";
}

std::string rounds_csv_row(const RoundReport& report) {
    std::string row = std::to_string(report.round);
    auto add = [&row](double v) {
        row += ',';
        row += format_double(v);
    };
    add(report.eval_global.overall_acc);
    add(report.eval_retrained.overall_acc);
    // group columns follow the method's output model (the re-trained slot,
    // which mirrors the global model when there is no second classifier)
    add(report.eval_retrained.group_acc.many);
    add(report.eval_retrained.group_acc.medium);
    add(report.eval_retrained.group_acc.few);
    add(report.match_post.many);
    add(report.match_post.medium);
    add(report.match_post.few);
    add(report.feat_dissim.many);
    add(report.feat_dissim.medium);
    add(report.feat_dissim.few);
    return row;
}

namespace {

ordered_json group_json(const GroupValues& g) {
    return ordered_json{{"many", g.many}, {"medium", g.medium}, {"few", g.few}};
}

FedRunOpts fed_opts(const ExperimentConfig& cfg, std::size_t rounds) {
    FedRunOpts opts;
    opts.rounds = rounds;
    opts.client_ratio = cfg.client_ratio;
    opts.method = cfg.method;
    opts.local = {cfg.lr_local, cfg.batch_size, cfg.local_epochs, cfg.mu};
    opts.tau = cfg.tau;
    opts.master_seed = cfg.master_seed;
    opts.thresholds = cfg.thresholds;
    opts.num_threads = cfg.threads;
    return opts;
}

CreffRunOpts creff_opts(const ExperimentConfig& cfg, std::size_t rounds) {
    CreffRunOpts opts;
    opts.rounds = rounds;
    opts.client_ratio = cfg.client_ratio;
    opts.local = {cfg.lr_local, cfg.batch_size, cfg.local_epochs, cfg.mu};
    opts.feature_steps = cfg.I;
    opts.retrain_steps = cfg.J;
    opts.lr_feature = cfg.lr_feature;
    opts.lr_retrain = cfg.lr_retrain;
    opts.retrain_init = cfg.retrain_init;
    opts.master_seed = cfg.master_seed;
    opts.thresholds = cfg.thresholds;
    opts.num_threads = cfg.threads;
    return opts;
}

// Rounds this invocation executes: up to T, cut short by stop_after_round.
std::size_t rounds_from(const ExperimentConfig& cfg, std::size_t start) {
    std::size_t stop = cfg.T;
    if (cfg.stop_after_round > 0) stop = std::min(stop, cfg.stop_after_round);
    return stop > start ? stop - start : 0;
}

// A resumed run rebuilds which classes the bank has seen by replaying the
// (deterministic) client selections of the finished rounds.
std::vector<char> replay_seen(const ExperimentConfig& cfg, const World& world,
                              std::size_t upto) {
    std::vector<char> seen(cfg.C, 0);
    if (cfg.m == 0) return seen;  // bankless runs never mark classes
    for (std::size_t t = 0; t < upto; ++t) {
        for (std::size_t id :
             sample_clients(world.clients.size(), cfg.client_ratio, cfg.master_seed, t)) {
            const auto& counts = world.clients[id].data.class_counts;
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] > 0) seen[c] = 1;
            }
        }
    }
    return seen;
}

RunResult engine(const ExperimentConfig& cfg, const std::string& resume_from,
                 bool write_files) {
    std::optional<Checkpoint> resumed;
    std::size_t start_round = 0;
    if (!resume_from.empty()) {
        resumed = load_checkpoint(resume_from);
        if (resumed->config_echo != config_echo(cfg)) {
            throw ConfigError("resume", "checkpoint '" + resume_from +
                                            "' was written by a different configuration");
        }
        start_round = static_cast<std::size_t>(resumed->next_round);
    }

    World world = build_world(cfg);
    const std::size_t rounds = rounds_from(cfg, start_round);

    fs::path dir(cfg.out_dir);
    std::ofstream csv;
    std::string checkpoint_path;
    if (write_files) {
        fs::create_directories(dir);
        checkpoint_path = (dir / "checkpoint.bin").string();
        const std::string csv_path = (dir / "rounds.csv").string();

        // On resume, keep the finished rounds' rows and drop anything at or
        // past the resume point, so the finished file matches an
        // uninterrupted run byte for byte.
        std::vector<std::string> keep;
        if (start_round > 0) {
            std::ifstream existing(csv_path);
            std::string line;
            while (std::getline(existing, line)) {
                if (line.empty() || line[0] == '#' || line.rfind("round,", 0) == 0) continue;
                const std::size_t r = std::stoull(line.substr(0, line.find(',')));
                if (r < start_round) keep.push_back(line);
            }
        }
        csv.open(csv_path, std::ios::trunc);
        if (!csv) throw ParseError("cannot open '" + csv_path + "' for writing");
        csv << rounds_csv_schema_stamp() << '\n' << rounds_csv_header() << '\n';
        for (const std::string& line : keep) csv << line << '\n';
        csv.flush();
    }

    auto write_checkpoint = [&](const ModelParams& global, const Matrix& retrained,
                                const FeatureBank& bank, std::size_t next_round) {
        if (!write_files) return;
        Checkpoint out;
        out.config_echo = config_echo(cfg);
        out.global = global;
        out.retrained_classifier = retrained;
        out.bank = bank;
        out.master_seed = cfg.master_seed;
        out.next_round = next_round;
        save_checkpoint(checkpoint_path, out);
    };
    auto due = [&](std::size_t round) {
        return cfg.checkpoint_every > 0 && (round + 1) % cfg.checkpoint_every == 0;
    };

    auto last_tick = std::chrono::steady_clock::now();
    auto lap = [&last_tick]() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_tick).count();
        last_tick = now;
        return s;
    };

    RunResult result;
    if (cfg.method == Method::creff) {
        CreffState state;
        if (resumed) {
            state.model.global = std::move(resumed->global);
            state.model.retrained_classifier = std::move(resumed->retrained_classifier);
            state.bank = std::move(resumed->bank);
            state.class_seen = replay_seen(cfg, world, start_round);
        } else {
            state = init_creff_state(world.init_model, cfg.m, cfg.master_seed);
        }

        CreffObserver observer = [&](RoundReport& report, const CreffState& s) {
            if (s.bank.features_per_class > 0) {
                const auto means = gather_real_feature_means(s.model.global.extractor,
                                                             world.clients, cfg.C);
                report.feat_dissim =
                    feature_dissimilarity(s.bank, means, world.train_counts, cfg.thresholds);
            }
            report.wall_seconds = lap();
            if (write_files) {
                csv << rounds_csv_row(report) << '\n';
                csv.flush();
                if (due(report.round)) {
                    write_checkpoint(s.model.global, s.model.retrained_classifier, s.bank,
                                     report.round + 1);
                }
            }
            return true;
        };
        result.reports = run_creff(world.clients, state, world.testset, world.train_counts,
                                   creff_opts(cfg, rounds), start_round, observer);
        write_checkpoint(state.model.global, state.model.retrained_classifier, state.bank,
                         start_round + result.reports.size());
        result.final_retrained = std::move(state.model.retrained_classifier);
        result.final_global = std::move(state.model.global);
    } else {
        ModelParams model = resumed ? std::move(resumed->global) : world.init_model;
        FeatureBank no_bank;
        FedObserver observer = [&](RoundReport& report, const ModelParams& current) {
            report.wall_seconds = lap();
            if (write_files) {
                csv << rounds_csv_row(report) << '\n';
                csv.flush();
                if (due(report.round)) {
                    write_checkpoint(current, current.classifier, no_bank, report.round + 1);
                }
            }
            return true;
        };
        result.reports = run_fedavg(world.clients, model, world.testset, world.train_counts,
                                    fed_opts(cfg, rounds), start_round, observer);
        write_checkpoint(model, model.classifier, no_bank, start_round + result.reports.size());
        result.final_retrained = cfg.method == Method::taunorm
                                     ? tau_norm_classifier(model.classifier, cfg.tau)
                                     : model.classifier;
        result.final_global = std::move(model);
    }

    if (write_files) {
        std::ofstream summary((dir / "summary.json").string(), std::ios::trunc);
        if (!summary) throw ParseError("cannot open summary.json for writing");
        summary << summary_json(cfg, result.reports, start_round);
    }
    return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) { return engine(cfg, {}, false); }

RunResult cmd_run(const ExperimentConfig& cfg, const std::string& resume_from) {
    return engine(cfg, resume_from, true);
}

std::string summary_json(const ExperimentConfig& cfg, const std::vector<RoundReport>& reports,
                         std::size_t rounds_before) {
    ordered_json j;
    j["schema_version"] = 1;
    ordered_json conf = ordered_json::object();
    for (const auto& [key, value] : config_echo(cfg)) conf[key] = value;
    j["config"] = conf;
    j["rounds_executed"] = rounds_before + reports.size();
    if (reports.empty()) {
        j["final"] = nullptr;
    } else {
        const RoundReport& last = reports.back();
        ordered_json f;
        f["round"] = last.round;
        f["acc_global"] = last.eval_global.overall_acc;
        f["acc_retrained"] = last.eval_retrained.overall_acc;
        f["group_acc_global"] = group_json(last.eval_global.group_acc);
        f["group_acc_retrained"] = group_json(last.eval_retrained.group_acc);
        f["match_loss"] = group_json(last.match_post);
        f["feat_dissim"] = group_json(last.feat_dissim);
        f["stale_classes"] = last.stale_classes;
        f["per_class_acc_retrained"] = last.eval_retrained.per_class_acc;
        j["final"] = f;
    }
    return j.dump(2) + "\n";
}

void cmd_compare(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                 std::ostream& out) {
    if (methods.size() < 2) {
        throw ConfigError("compare", "need at least 2 methods to compare");
    }
    struct Row {
        Method method;
        double overall;
        GroupValues groups;
    };
    std::vector<Row> rows;
    for (Method m : methods) {
        ExperimentConfig one = cfg;
        one.method = m;
        const RunResult r = run_experiment(one);
        if (r.reports.empty()) throw ConfigError("T", "comparison needs at least 1 round");
        const RoundReport& last = r.reports.back();
        rows.push_back({m, last.eval_retrained.overall_acc, last.eval_retrained.group_acc});
    }

    fs::create_directories(cfg.out_dir);
    std::ofstream csv((fs::path(cfg.out_dir) / "compare.csv").string(), std::ios::trunc);
    if (!csv) throw ParseError("cannot open compare.csv for writing");
    csv << "method,acc_overall,acc_many,acc_medium,acc_few,delta_overall\n";

    const double base = rows.front().overall;
    out << std::left << std::setw(10) << "method" << std::right << std::setw(12)
        << "acc_overall" << std::setw(10) << "acc_many" << std::setw(12) << "acc_medium"
        << std::setw(9) << "acc_few" << std::setw(8) << "delta" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const Row& row : rows) {
        const double delta = row.overall - base;
        csv << method_name(row.method) << ',' << format_double(row.overall) << ','
            << format_double(row.groups.many) << ',' << format_double(row.groups.medium) << ','
            << format_double(row.groups.few) << ',' << format_double(delta) << '\n';
        out << std::left << std::setw(10) << method_name(row.method) << std::right
            << std::setw(12) << row.overall << std::setw(10) << row.groups.many << std::setw(12)
            << row.groups.medium << std::setw(9) << row.groups.few << std::setw(8)
            << std::showpos << delta << std::noshowpos << '\n';
    }
    out.unsetf(std::ios::fixed);
}

void cmd_sweep_m(const ExperimentConfig& cfg, const std::vector<std::size_t>& m_values,
                 std::ostream& out) {
    std::vector<std::size_t> ms;
    for (std::size_t v : m_values) {
        if (std::find(ms.begin(), ms.end(), v) != ms.end()) {
            std::cerr << "sweep-m: duplicate m=" << v << " dropped\n";
            continue;
        }
        ms.push_back(v);
    }
    if (ms.empty()) throw ConfigError("sweep-m", "need at least 1 m value");

    fs::create_directories(cfg.out_dir);
    std::ofstream csv((fs::path(cfg.out_dir) / "sweep_m.csv").string(), std::ios::trunc);
    if (!csv) throw ParseError("cannot open sweep_m.csv for writing");
    csv << "m,acc_overall,acc_many,acc_medium,acc_few\n";

    out << std::left << std::setw(8) << "m" << std::right << std::setw(12) << "acc_overall"
        << std::setw(10) << "acc_many" << std::setw(12) << "acc_medium" << std::setw(9)
        << "acc_few" << '\n';
    out << std::fixed << std::setprecision(4);
    for (std::size_t v : ms) {
        ExperimentConfig one = cfg;
        one.method = Method::creff;
        one.m = v;
        const RunResult r = run_experiment(one);
        if (r.reports.empty()) throw ConfigError("T", "sweep needs at least 1 round");
        const RoundReport& last = r.reports.back();
        csv << v << ',' << format_double(last.eval_retrained.overall_acc) << ','
            << format_double(last.eval_retrained.group_acc.many) << ','
            << format_double(last.eval_retrained.group_acc.medium) << ','
            << format_double(last.eval_retrained.group_acc.few) << '\n';
        out << std::left << std::setw(8) << v << std::right << std::setw(12)
            << last.eval_retrained.overall_acc << std::setw(10)
            << last.eval_retrained.group_acc.many << std::setw(12)
            << last.eval_retrained.group_acc.medium << std::setw(9)
            << last.eval_retrained.group_acc.few << '\n';
    }
    out.unsetf(std::ios::fixed);
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out) {
    const RawData data = build_datasets(cfg);
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    const std::string train_images = (dir / "train-images-idx3-ubyte").string();
    const std::string train_labels = (dir / "train-labels-idx1-ubyte").string();
    const std::string test_images = (dir / "test-images-idx3-ubyte").string();
    const std::string test_labels = (dir / "test-labels-idx1-ubyte").string();
    save_idx(data.train, train_images, train_labels);
    save_idx(data.test, test_images, test_labels);
    out << "wrote " << data.train.size() << " training samples to " << train_images << " / "
        << train_labels << '\n'
        << "wrote " << data.test.size() << " test samples to " << test_images << " / "
        << test_labels << '\n';
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const RawData data = build_datasets(cfg);

    EvalReport global = evaluate(ck.global, data.test);
    global.group_acc = group_mean(global.per_class_acc, data.train.class_counts, cfg.thresholds);
    EvalReport retrained = evaluate_with_classifier(ck.global, ck.retrained_classifier, data.test);
    retrained.group_acc =
        group_mean(retrained.per_class_acc, data.train.class_counts, cfg.thresholds);

    ordered_json j;
    j["checkpoint"] = checkpoint_path;
    j["next_round"] = ck.next_round;
    j["acc_global"] = global.overall_acc;
    j["acc_retrained"] = retrained.overall_acc;
    j["group_acc_global"] = group_json(global.group_acc);
    j["group_acc_retrained"] = group_json(retrained.group_acc);
    out << j.dump(2) << '\n';
}

}  // namespace creff
