#ifndef CREFF_FL_HPP
#define CREFF_FL_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "creff/data.hpp"
#include "creff/metrics.hpp"
#include "creff/model.hpp"
#include "creff/report.hpp"

namespace creff {

enum class Method { fedavg, fedprox, taunorm, creff };

struct ClientState {
    std::size_t id = 0;
    LabeledDataset data;          // this client's shard; nobody else reads it
    std::uint64_t seed_base = 0;  // root of the client's private rng streams
    ModelParams local_model;      // last local update (transient, not protocol state)
};

struct FedOpts {
    double lr = 0.1;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    double mu = 0.0;  // proximal pull toward the global model (fedprox)
};

struct RoundPlan {
    std::size_t round = 0;
    std::vector<std::size_t> active;  // selected client ids, ascending
    Method method = Method::fedavg;
    FedOpts opts;
};

// Uniform sample (without replacement) of round(ratio*K) client ids, at
// least 1, returned ascending. Deterministic in (seed, round).
std::vector<std::size_t> sample_clients(std::size_t num_clients, double ratio,
                                        std::uint64_t seed, std::size_t round);

// Mini-batch SGD from `global` on the client's own data: `epochs` shuffled
// passes, softmax-CE loss. Returns nullopt when the client holds no data —
// a skip signal, not an error; the client then contributes nothing.
std::optional<ModelParams> local_update(const ClientState& client, const ModelParams& global,
                                        double lr, std::size_t batch_size, std::size_t epochs,
                                        std::size_t round);

// Same trajectory plus a proximal gradient term mu*(w - global) on every
// step. mu = 0 reproduces local_update bit for bit.
std::optional<ModelParams> fedprox_local_update(const ClientState& client,
                                                const ModelParams& global, double lr,
                                                std::size_t batch_size, std::size_t epochs,
                                                double mu, std::size_t round);

// Sample-count-weighted average of client models, elementwise.
ModelParams fedavg_aggregate(const std::vector<std::pair<ModelParams, std::size_t>>& models);

// Local phase of one round: every active client with data runs its local
// update (optionally fanned out over threads); results come back as
// (model, sample-count) pairs in ascending-client order, so the later
// aggregation is identical for any thread count. Shared by every method's
// round loop — the round trajectories can only diverge after this point.
std::vector<std::pair<ModelParams, std::size_t>> run_local_phase(
    std::vector<ClientState>& clients, const ModelParams& global, const RoundPlan& plan,
    std::size_t num_threads);

// Post-hoc classifier rebalancing: row c becomes v_c / ||v_c||^tau.
Matrix tau_norm_classifier(const Matrix& classifier, double tau);

struct FedRunOpts {
    std::size_t rounds = 0;
    double client_ratio = 1.0;
    Method method = Method::fedavg;
    FedOpts local;
    double tau = 1.0;  // taunorm only: scaling exponent for the final classifier
    std::uint64_t master_seed = 0;
    GroupThresholds thresholds;
    std::size_t num_threads = 1;  // client fan-out; results are thread-count invariant
};

// Called after each round with the mutable report (fill diagnostics, swap
// the retrained evaluation...) and the post-round global model. Return
// false to stop the run after this round.
using FedObserver =
    std::function<bool(RoundReport&, const ModelParams& global)>;

// The FedAvg/FedProx loop: sample -> local updates -> weighted aggregate ->
// evaluate, `rounds` times starting at `start_round`. `model` is updated in
// place; reports for executed rounds are returned. `train_counts` is the
// global class profile used for group bucketing.
std::vector<RoundReport> run_fedavg(std::vector<ClientState>& clients, ModelParams& model,
                                    const LabeledDataset& testset,
                                    const std::vector<std::size_t>& train_counts,
                                    const FedRunOpts& opts, std::size_t start_round = 0,
                                    const FedObserver& observer = {});

}  // namespace creff

#endif  // CREFF_FL_HPP
