#ifndef CREFF_METRICS_HPP
#define CREFF_METRICS_HPP

#include <cstddef>
#include <vector>

#include "creff/data.hpp"
#include "creff/model.hpp"

namespace creff {

// Per-group value triple. Groups bucket classes by training-sample count;
// an empty group carries NaN so it can be told apart from a measured zero.
struct GroupValues {
    double many = 0.0;
    double medium = 0.0;
    double few = 0.0;
};

// Class c is "many" when its training count > many_above, "few" when
// count < few_below, "medium" otherwise.
struct GroupThresholds {
    std::size_t many_above = 100;
    std::size_t few_below = 20;

    static GroupThresholds imagenet_lt() { return {100, 20}; }
    static GroupThresholds cifar_lt_fig3() { return {1500, 200}; }
};

struct EvalReport {
    double overall_acc = 0.0;
    std::vector<double> per_class_acc;  // NaN for classes absent from the testset
    std::vector<std::size_t> n_test;    // test samples per class
    GroupValues group_acc;              // filled when thresholds are supplied
};

// Top-1 accuracy of `model` on `testset`; argmax ties break toward the
// lower class id. Pure and deterministic.
EvalReport evaluate(const ModelParams& model, const LabeledDataset& testset);

// Same, but score with `classifier` in place of model.classifier (the
// re-trained classifier shares the model's extractor).
EvalReport evaluate_with_classifier(const ModelParams& model, const Matrix& classifier,
                                    const LabeledDataset& testset);

// Unweighted mean of per-class values within each count-defined group.
// NaN entries (undefined classes) are skipped; an empty group yields NaN.
// Used for group accuracy as well as grouped loss/dissimilarity traces.
GroupValues group_mean(const std::vector<double>& per_class_values,
                       const std::vector<std::size_t>& train_counts,
                       const GroupThresholds& thresholds);

// Per-round diagnostic trace mirroring the matching-loss / feature-
// dissimilarity curves: one point per round.
struct DissimPoint {
    std::size_t round = 0;
    GroupValues grad_dissim;  // matching loss per group, in [0,2]
    GroupValues feat_dissim;  // cosine dissimilarity to real features, in [0,2]
};
using DissimTrace = std::vector<DissimPoint>;

}  // namespace creff

#endif  // CREFF_METRICS_HPP
