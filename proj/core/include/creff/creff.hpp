#ifndef CREFF_CREFF_HPP
#define CREFF_CREFF_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "creff/fl.hpp"
#include "creff/wire.hpp"

namespace creff {

// Client-side per-class gradient record. sample_count is local bookkeeping
// and never leaves the client — the wire form drops it.
struct ClassGradient {
    std::size_t class_id = 0;
    Matrix grad;                   // C x d
    std::size_t sample_count = 0;  // how many local samples were averaged
};

// Server-side bank of learnable features: m rows of dimension d per class,
// block c implicitly labeled c — balanced by construction, carried across
// rounds.
struct FeatureBank {
    std::size_t features_per_class = 0;  // m
    std::vector<Matrix> features;        // one m x d block per class

    std::size_t num_classes() const { return features.size(); }
    std::size_t feature_dim() const { return features.empty() ? 0 : features.front().cols; }
};

// i.i.d. standard-normal entries (the bank starts as pure noise).
FeatureBank init_feature_bank(std::size_t num_classes, std::size_t features_per_class,
                              std::size_t feature_dim, std::uint64_t seed);

// What the server broadcasts each round: the aggregated model w and a
// re-trained classifier sharing w's extractor.
struct DualModel {
    ModelParams global;
    Matrix retrained_classifier;  // same shape as global.classifier
};

struct CreffState {
    DualModel model;
    FeatureBank bank;
    // class_seen[c] != 0 once any selected client held class c; unseen
    // classes still carry their noise features ("stale" in reports).
    std::vector<char> class_seen;
};

// Per locally-present class: average softmax-CE gradient w.r.t. the
// re-trained classifier over that class's extracted features.
std::vector<ClassGradient> client_class_gradients(const LabeledDataset& local_data,
                                                  const std::vector<ExtractorLayer>& extractor,
                                                  const Matrix& retrained_classifier);

// Strip local-only fields for upload.
std::vector<WireClassGradient> to_wire(const std::vector<ClassGradient>& grads);

// Unweighted mean per class over the clients that uploaded it — every
// holder counts once, however many samples its average covered. Classes
// nobody holds are absent from the map. Duplicate class entries within one
// upload are an error.
std::map<std::size_t, Matrix> aggregate_class_gradients(
    const std::vector<std::vector<WireClassGradient>>& uploads);

// Average classifier gradient over the m federated features of class c,
// every row labeled c.
Matrix federated_feature_gradient(const Matrix& retrained_classifier, const Matrix& features_c,
                                  std::size_t class_id);

// `steps` descent steps per targeted class on the gradient-matching loss
// (classifier and targets held fixed). Classes are visited in ascending id
// order; they are independent, so order cannot change the result. Classes
// absent from `targets` keep their features untouched this round.
void optimize_federated_features(FeatureBank& bank, const Matrix& retrained_classifier,
                                 const std::map<std::size_t, Matrix>& targets,
                                 std::size_t steps, double lr);

// `steps` full-batch softmax-CE steps over all C*m (feature, label) pairs,
// starting from init. Returns the re-trained classifier.
Matrix retrain_classifier(const FeatureBank& bank, const Matrix& init, std::size_t steps,
                          double lr);

enum class RetrainInit { warm, random };

struct CreffRunOpts {
    std::size_t rounds = 0;
    double client_ratio = 1.0;
    FedOpts local;
    std::size_t feature_steps = 50;  // matching-descent steps per round
    std::size_t retrain_steps = 100; // classifier re-training steps per round
    double lr_feature = 0.1;
    double lr_retrain = 0.1;
    RetrainInit retrain_init = RetrainInit::warm;
    std::uint64_t master_seed = 0;
    GroupThresholds thresholds;
    std::size_t num_threads = 1;
};

// Fresh state before round 0: bank seeded from the master seed, re-trained
// classifier starting equal to the global one.
CreffState init_creff_state(ModelParams initial_model, std::size_t features_per_class,
                            std::uint64_t master_seed);

// One full round, in protocol order: select clients; each runs a local
// model update and computes per-class gradients against the *previous*
// round's re-trained classifier; server aggregates models (sample-weighted)
// and gradients (unweighted per class); optimizes the bank against the
// aggregated gradients; re-trains the classifier on the bank. With an empty
// bank (m = 0) the feature/re-training stages are skipped and the
// re-trained classifier just mirrors the aggregated one, which reduces the
// round to FedAvg exactly. Mutates `state`, returns the round's report.
RoundReport creff_round(std::vector<ClientState>& clients, CreffState& state,
                        const RoundPlan& plan, const CreffRunOpts& opts,
                        const LabeledDataset& testset,
                        const std::vector<std::size_t>& train_counts);

using CreffObserver = std::function<bool(RoundReport&, const CreffState&)>;

// The round loop: `opts.rounds` rounds continuing from `start_round` on an
// existing state (use init_creff_state for a fresh run). Reports for the
// executed rounds are returned; the observer can stop the run early.
std::vector<RoundReport> run_creff(std::vector<ClientState>& clients, CreffState& state,
                                   const LabeledDataset& testset,
                                   const std::vector<std::size_t>& train_counts,
                                   const CreffRunOpts& opts, std::size_t start_round = 0,
                                   const CreffObserver& observer = {});

}  // namespace creff

#endif  // CREFF_CREFF_HPP
