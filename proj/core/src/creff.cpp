#include "creff/creff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "creff/rng.hpp"

namespace creff {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

FeatureBank init_feature_bank(std::size_t num_classes, std::size_t features_per_class,
                              std::size_t feature_dim, std::uint64_t seed) {
    if (num_classes == 0) throw std::invalid_argument("init_feature_bank: need >= 1 class");
    if (feature_dim == 0) throw std::invalid_argument("init_feature_bank: feature_dim must be >= 1");
    FeatureBank bank;
    bank.features_per_class = features_per_class;
    bank.features.reserve(num_classes);
    RngStream rng(seed);
    for (std::size_t c = 0; c < num_classes; ++c) {
        Matrix block(features_per_class, feature_dim);
        for (double& x : block.data) x = rng.normal();
        bank.features.push_back(std::move(block));
    }
    return bank;
}

std::vector<ClassGradient> client_class_gradients(const LabeledDataset& local_data,
                                                  const std::vector<ExtractorLayer>& extractor,
                                                  const Matrix& retrained_classifier) {
    std::vector<ClassGradient> out;
    if (local_data.size() == 0) return out;

    // One forward pass over the whole shard, then slice rows per class.
    const Matrix features = extractor_forward(extractor, local_data.inputs);
    if (features.cols != retrained_classifier.cols) {
        throw std::invalid_argument("client_class_gradients: feature dim mismatch");
    }
    const std::size_t num_classes = retrained_classifier.rows;

    std::vector<std::vector<std::size_t>> rows_of(num_classes);
    for (std::size_t i = 0; i < local_data.size(); ++i) {
        const int y = local_data.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw std::invalid_argument("client_class_gradients: label out of range");
        }
        rows_of[static_cast<std::size_t>(y)].push_back(i);
    }

    for (std::size_t c = 0; c < num_classes; ++c) {
        if (rows_of[c].empty()) continue;
        Matrix zc(rows_of[c].size(), features.cols);
        for (std::size_t j = 0; j < rows_of[c].size(); ++j) {
            const double* src = features.row(rows_of[c][j]);
            std::copy(src, src + features.cols, zc.row(j));
        }
        std::vector<int> labels(rows_of[c].size(), static_cast<int>(c));
        ClassGradient g;
        g.class_id = c;
        g.grad = classifier_grad(retrained_classifier, zc, labels);
        g.sample_count = rows_of[c].size();
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<WireClassGradient> to_wire(const std::vector<ClassGradient>& grads) {
    std::vector<WireClassGradient> wire;
    wire.reserve(grads.size());
    for (const ClassGradient& g : grads) wire.push_back({g.class_id, g.grad});
    return wire;
}

std::map<std::size_t, Matrix> aggregate_class_gradients(
    const std::vector<std::vector<WireClassGradient>>& uploads) {
    std::map<std::size_t, Matrix> sums;
    std::map<std::size_t, std::size_t> holders;
    for (const auto& upload : uploads) {
        std::vector<std::size_t> seen_here;
        for (const WireClassGradient& g : upload) {
            if (std::find(seen_here.begin(), seen_here.end(), g.class_id) != seen_here.end()) {
                throw std::invalid_argument("aggregate_class_gradients: client uploaded class " +
                                            std::to_string(g.class_id) + " twice");
            }
            seen_here.push_back(g.class_id);
            auto it = sums.find(g.class_id);
            if (it == sums.end()) {
                sums.emplace(g.class_id, g.grad);
                holders[g.class_id] = 1;
            } else {
                if (!it->second.same_shape(g.grad)) {
                    throw std::invalid_argument(
                        "aggregate_class_gradients: gradient shapes differ");
                }
                it->second = add_scaled(it->second, g.grad, 1.0);
                ++holders[g.class_id];
            }
        }
    }
    // Every holder counts once — the mean deliberately ignores how many
    // samples each client's average covered.
    for (auto& [c, sum] : sums) {
        const double inv = 1.0 / static_cast<double>(holders[c]);
        for (double& x : sum.data) x *= inv;
    }
    return sums;
}

Matrix federated_feature_gradient(const Matrix& retrained_classifier, const Matrix& features_c,
                                  std::size_t class_id) {
    if (features_c.rows == 0) {
        throw std::invalid_argument("federated_feature_gradient: empty feature set");
    }
    if (class_id >= retrained_classifier.rows) {
        throw std::invalid_argument("federated_feature_gradient: class id out of range");
    }
    std::vector<int> labels(features_c.rows, static_cast<int>(class_id));
    return classifier_grad(retrained_classifier, features_c, labels);
}

void optimize_federated_features(FeatureBank& bank, const Matrix& retrained_classifier,
                                 const std::map<std::size_t, Matrix>& targets,
                                 std::size_t steps, double lr) {
    if (lr < 0.0) throw std::invalid_argument("optimize_federated_features: lr must be >= 0");
    // std::map iterates in ascending class order; classes are independent,
    // so the order is fixed purely for reproducibility.
    for (const auto& [c, target] : targets) {
        if (c >= bank.num_classes()) {
            throw std::invalid_argument("optimize_federated_features: class id " +
                                        std::to_string(c) + " out of range");
        }
        check_shape(target, retrained_classifier.rows, retrained_classifier.cols,
                    "optimize_federated_features: target");
        Matrix& block = bank.features[c];
        if (block.rows == 0) continue;
        // The descent objective is the row-sum of cosine dissimilarities; the
        // reported loss is the same objective normalized by the row count, so
        // the per-step direction is the reported-loss gradient scaled by C.
        const double row_count = static_cast<double>(retrained_classifier.rows);
        for (std::size_t s = 0; s < steps; ++s) {
            const Matrix grad = matching_grad_wrt_features(retrained_classifier, block,
                                                           static_cast<int>(c), target);
            block = sgd_step(block, grad, lr * row_count);
        }
    }
}

Matrix retrain_classifier(const FeatureBank& bank, const Matrix& init, std::size_t steps,
                          double lr) {
    const std::size_t m = bank.features_per_class;
    const std::size_t total = bank.num_classes() * m;
    if (total == 0) throw std::invalid_argument("retrain_classifier: empty feature bank");
    if (lr < 0.0) throw std::invalid_argument("retrain_classifier: lr must be >= 0");

    Matrix z(total, bank.feature_dim());
    std::vector<int> labels(total);
    std::size_t row = 0;
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        check_shape(bank.features[c], m, bank.feature_dim(), "retrain_classifier: bank block");
        for (std::size_t i = 0; i < m; ++i, ++row) {
            const double* src = bank.features[c].row(i);
            std::copy(src, src + z.cols, z.row(row));
            labels[row] = static_cast<int>(c);
        }
    }

    Matrix v = init;
    for (std::size_t s = 0; s < steps; ++s) {
        v = sgd_step(v, classifier_grad(v, z, labels), lr);
    }
    return v;
}

CreffState init_creff_state(ModelParams initial_model, std::size_t features_per_class,
                            std::uint64_t master_seed) {
    CreffState state;
    state.bank = init_feature_bank(initial_model.num_classes(), features_per_class,
                                   initial_model.feature_dim(),
                                   derive_seed(master_seed, "bank-init"));
    state.class_seen.assign(initial_model.num_classes(), 0);
    state.model.retrained_classifier = initial_model.classifier;  // nothing re-trained yet
    state.model.global = std::move(initial_model);
    return state;
}

RoundReport creff_round(std::vector<ClientState>& clients, CreffState& state,
                        const RoundPlan& plan, const CreffRunOpts& opts,
                        const LabeledDataset& testset,
                        const std::vector<std::size_t>& train_counts) {
    const bool have_bank = state.bank.features_per_class > 0;
    const std::size_t num_classes = state.model.global.num_classes();

    // Clients hold w^t and the previous round's re-trained classifier. The
    // local model update and the per-class gradients both run against the
    // received parameters.
    const Matrix v_hat = state.model.retrained_classifier;
    run_local_phase(clients, state.model.global, plan, opts.num_threads);

    std::vector<ClientUpload> uploads;
    uploads.reserve(plan.active.size());
    for (std::size_t id : plan.active) {
        if (clients[id].data.size() == 0) continue;  // nothing local: no upload
        ClientUpload up;
        up.model = clients[id].local_model;
        up.num_samples = clients[id].data.size();
        if (have_bank) {
            up.class_gradients = to_wire(client_class_gradients(
                clients[id].data, state.model.global.extractor, v_hat));
        }
        uploads.push_back(std::move(up));
    }

    // Server side from here on; only the uploads cross the boundary.
    if (!uploads.empty()) {
        std::vector<std::pair<ModelParams, std::size_t>> models;
        models.reserve(uploads.size());
        for (const ClientUpload& up : uploads) models.emplace_back(up.model, up.num_samples);
        state.model.global = fedavg_aggregate(models);
    }

    RoundReport report;
    report.round = plan.round;
    report.match_pre = {kNaN, kNaN, kNaN};
    report.match_post = {kNaN, kNaN, kNaN};
    report.feat_dissim = {kNaN, kNaN, kNaN};

    if (have_bank) {
        std::vector<std::vector<WireClassGradient>> grad_uploads;
        grad_uploads.reserve(uploads.size());
        for (const ClientUpload& up : uploads) grad_uploads.push_back(up.class_gradients);
        const auto targets = aggregate_class_gradients(grad_uploads);
        for (const auto& [c, g] : targets) state.class_seen[c] = 1;

        std::vector<double> match(num_classes, kNaN);
        for (const auto& [c, g] : targets) {
            match[c] = matching_loss(federated_feature_gradient(v_hat, state.bank.features[c], c), g);
        }
        report.match_pre = group_mean(match, train_counts, opts.thresholds);

        optimize_federated_features(state.bank, v_hat, targets, opts.feature_steps,
                                    opts.lr_feature);

        for (const auto& [c, g] : targets) {
            match[c] = matching_loss(federated_feature_gradient(v_hat, state.bank.features[c], c), g);
        }
        report.match_post = group_mean(match, train_counts, opts.thresholds);

        Matrix init = state.model.global.classifier;  // warm: this round's aggregate
        if (opts.retrain_init == RetrainInit::random) {
            RngStream rng(derive_seed(opts.master_seed, "retrain-init", plan.round));
            const double scale = 1.0 / std::sqrt(static_cast<double>(init.cols));
            for (double& x : init.data) x = scale * rng.normal();
        }
        state.model.retrained_classifier =
            retrain_classifier(state.bank, init, opts.retrain_steps, opts.lr_retrain);
    } else {
        // No federated features: nothing to optimize or re-train, and the
        // broadcast pair degenerates to two copies of the aggregated model.
        state.model.retrained_classifier = state.model.global.classifier;
    }

    report.stale_classes = static_cast<std::size_t>(
        std::count(state.class_seen.begin(), state.class_seen.end(), char{0}));

    report.eval_global = evaluate(state.model.global, testset);
    report.eval_global.group_acc =
        group_mean(report.eval_global.per_class_acc, train_counts, opts.thresholds);
    report.eval_retrained = evaluate_with_classifier(
        state.model.global, state.model.retrained_classifier, testset);
    report.eval_retrained.group_acc =
        group_mean(report.eval_retrained.per_class_acc, train_counts, opts.thresholds);
    return report;
}

std::vector<RoundReport> run_creff(std::vector<ClientState>& clients, CreffState& state,
                                   const LabeledDataset& testset,
                                   const std::vector<std::size_t>& train_counts,
                                   const CreffRunOpts& opts, std::size_t start_round,
                                   const CreffObserver& observer) {
    std::vector<RoundReport> reports;
    reports.reserve(opts.rounds);
    for (std::size_t t = start_round; t < start_round + opts.rounds; ++t) {
        RoundPlan plan{t, sample_clients(clients.size(), opts.client_ratio, opts.master_seed, t),
                       Method::creff, opts.local};
        RoundReport report = creff_round(clients, state, plan, opts, testset, train_counts);
        const bool keep_going = observer ? observer(report, state) : true;
        reports.push_back(std::move(report));
        if (!keep_going) break;
    }
    return reports;
}

}  // namespace creff
