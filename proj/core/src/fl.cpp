#include "creff/fl.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "creff/rng.hpp"

namespace creff {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, double ratio,
                                        std::uint64_t seed, std::size_t round) {
    if (num_clients == 0) throw std::invalid_argument("sample_clients: no registered clients");
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw std::invalid_argument("sample_clients: ratio must be in (0,1]");
    }
    const double want = ratio * static_cast<double>(num_clients);
    std::size_t take = static_cast<std::size_t>(std::llround(want));
    take = std::max<std::size_t>(1, std::min(take, num_clients));

    RngStream rng(derive_seed(seed, "client-sample", round));
    std::vector<std::size_t> picked = rng.sample_without_replacement(num_clients, take);
    std::sort(picked.begin(), picked.end());
    return picked;
}

namespace {

// One client's SGD trajectory; mu > 0 adds the proximal pull toward the
// received global model. The batch-order stream is derived from the
// client's own seed and the round index, so the trajectory is identical no
// matter which thread runs it or what else ran before.
ModelParams sgd_passes(const ClientState& client, const ModelParams& global, double lr,
                       std::size_t batch_size, std::size_t epochs, double mu,
                       std::size_t round) {
    ModelParams w = global;
    RngStream order_rng(derive_seed(client.seed_base, "batch-order", round));
    const std::size_t n = client.data.size();
    const std::size_t dim = client.data.input_dim();

    for (std::size_t e = 0; e < epochs; ++e) {
        const std::vector<std::size_t> order = order_rng.permutation(n);
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, n);
            Matrix xb(stop - start, dim);
            std::vector<int> yb(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t r = order[i];
                std::copy(client.data.inputs.row(r), client.data.inputs.row(r) + dim,
                          xb.row(i - start));
                yb[i - start] = client.data.labels[r];
            }
            BackwardResult back = model_backward(w, xb, yb);
            if (mu != 0.0) {
                for (std::size_t l = 0; l < back.grads.extractor.size(); ++l) {
                    back.grads.extractor[l] = add_scaled(
                        back.grads.extractor[l],
                        add_scaled(w.extractor[l].weight, global.extractor[l].weight, -1.0), mu);
                }
                back.grads.classifier = add_scaled(
                    back.grads.classifier, add_scaled(w.classifier, global.classifier, -1.0),
                    mu);
            }
            w = sgd_step(w, back.grads, lr);
        }
    }
    return w;
}

std::optional<ModelParams> local_pass(const ClientState& client, const ModelParams& global,
                                      double lr, std::size_t batch_size, std::size_t epochs,
                                      double mu, std::size_t round) {
    if (lr < 0.0) throw std::invalid_argument("local_update: lr must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("local_update: batch_size must be >= 1");
    if (mu < 0.0) throw std::invalid_argument("local_update: mu must be >= 0");
    if (client.data.size() == 0) return std::nullopt;  // nothing to train on: skip
    return sgd_passes(client, global, lr, batch_size, epochs, mu, round);
}

}  // namespace

std::optional<ModelParams> local_update(const ClientState& client, const ModelParams& global,
                                        double lr, std::size_t batch_size, std::size_t epochs,
                                        std::size_t round) {
    return local_pass(client, global, lr, batch_size, epochs, 0.0, round);
}

std::optional<ModelParams> fedprox_local_update(const ClientState& client,
                                                const ModelParams& global, double lr,
                                                std::size_t batch_size, std::size_t epochs,
                                                double mu, std::size_t round) {
    return local_pass(client, global, lr, batch_size, epochs, mu, round);
}

ModelParams fedavg_aggregate(const std::vector<std::pair<ModelParams, std::size_t>>& models) {
    if (models.empty()) throw std::invalid_argument("fedavg_aggregate: no models");
    std::size_t total = 0;
    for (const auto& [w, n] : models) total += n;
    if (total == 0) throw std::invalid_argument("fedavg_aggregate: total sample count is 0");

    const ModelParams& first = models.front().first;
    ModelParams out;
    out.extractor.reserve(first.extractor.size());
    for (const ExtractorLayer& layer : first.extractor) {
        out.extractor.push_back(
            {Matrix::zeros(layer.weight.rows, layer.weight.cols), layer.act});
    }
    out.classifier = Matrix::zeros(first.classifier.rows, first.classifier.cols);

    for (const auto& [w, n] : models) {
        if (w.extractor.size() != first.extractor.size() ||
            !w.classifier.same_shape(first.classifier)) {
            throw std::invalid_argument("fedavg_aggregate: model shapes differ");
        }
        const double weight = static_cast<double>(n) / static_cast<double>(total);
        for (std::size_t l = 0; l < w.extractor.size(); ++l) {
            if (!w.extractor[l].weight.same_shape(first.extractor[l].weight)) {
                throw std::invalid_argument("fedavg_aggregate: model shapes differ");
            }
            out.extractor[l].weight =
                add_scaled(out.extractor[l].weight, w.extractor[l].weight, weight);
        }
        out.classifier = add_scaled(out.classifier, w.classifier, weight);
    }
    return out;
}

Matrix tau_norm_classifier(const Matrix& classifier, double tau) {
    if (tau == 0.0) return classifier;
    Matrix out = classifier;
    for (std::size_t c = 0; c < out.rows; ++c) {
        const double norm = l2_norm(out.row(c), out.cols);
        if (norm == 0.0) {
            throw std::invalid_argument("tau_norm_classifier: classifier row " +
                                        std::to_string(c) + " is zero");
        }
        const double scale = 1.0 / std::pow(norm, tau);
        for (std::size_t j = 0; j < out.cols; ++j) out(c, j) *= scale;
    }
    return out;
}

std::vector<std::pair<ModelParams, std::size_t>> run_local_phase(
    std::vector<ClientState>& clients, const ModelParams& global, const RoundPlan& plan,
    std::size_t num_threads) {
    const double mu = plan.method == Method::fedprox ? plan.opts.mu : 0.0;
    std::vector<std::optional<ModelParams>> results(plan.active.size());

    auto work = [&](std::size_t slot) {
        const std::size_t id = plan.active[slot];
        if (id >= clients.size()) {
            throw std::invalid_argument("run_local_phase: unknown client id " +
                                        std::to_string(id));
        }
        results[slot] = local_pass(clients[id], global, plan.opts.lr, plan.opts.batch_size,
                                   plan.opts.epochs, mu, plan.round);
    };

    if (num_threads <= 1 || plan.active.size() <= 1) {
        for (std::size_t s = 0; s < plan.active.size(); ++s) work(s);
    } else {
        // Fan out; each slot is independent and writes only its own cell, so
        // the reduction below is identical for any thread count.
        std::vector<std::future<void>> jobs;
        jobs.reserve(plan.active.size());
        for (std::size_t s = 0; s < plan.active.size(); ++s) {
            jobs.push_back(std::async(std::launch::async, work, s));
        }
        for (auto& j : jobs) j.get();
    }

    std::vector<std::pair<ModelParams, std::size_t>> updated;
    updated.reserve(plan.active.size());
    for (std::size_t s = 0; s < plan.active.size(); ++s) {
        if (!results[s]) continue;  // empty client: contributes nothing
        const std::size_t id = plan.active[s];
        clients[id].local_model = *results[s];
        updated.emplace_back(std::move(*results[s]), clients[id].data.size());
    }
    return updated;
}

std::vector<RoundReport> run_fedavg(std::vector<ClientState>& clients, ModelParams& model,
                                    const LabeledDataset& testset,
                                    const std::vector<std::size_t>& train_counts,
                                    const FedRunOpts& opts, std::size_t start_round,
                                    const FedObserver& observer) {
    std::vector<RoundReport> reports;
    reports.reserve(opts.rounds);
    const GroupValues undefined{kNaN, kNaN, kNaN};

    for (std::size_t t = start_round; t < start_round + opts.rounds; ++t) {
        RoundPlan plan{t, sample_clients(clients.size(), opts.client_ratio, opts.master_seed, t),
                       opts.method, opts.local};
        auto updated = run_local_phase(clients, model, plan, opts.num_threads);
        if (!updated.empty()) model = fedavg_aggregate(updated);
        // (every selected client empty: the global model simply carries over)

        RoundReport report;
        report.round = t;
        report.eval_global = evaluate(model, testset);
        report.eval_global.group_acc =
            group_mean(report.eval_global.per_class_acc, train_counts, opts.thresholds);
        if (opts.method == Method::taunorm) {
            report.eval_retrained = evaluate_with_classifier(
                model, tau_norm_classifier(model.classifier, opts.tau), testset);
            report.eval_retrained.group_acc =
                group_mean(report.eval_retrained.per_class_acc, train_counts, opts.thresholds);
        } else {
            report.eval_retrained = report.eval_global;
        }
        report.match_pre = undefined;
        report.match_post = undefined;
        report.feat_dissim = undefined;

        const bool keep_going = observer ? observer(report, model) : true;
        reports.push_back(std::move(report));
        if (!keep_going) break;
    }
    return reports;
}

}  // namespace creff
