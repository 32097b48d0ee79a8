#include "creff/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace creff {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

EvalReport evaluate_with_classifier(const ModelParams& model, const Matrix& classifier,
                                    const LabeledDataset& testset) {
    if (testset.size() == 0) throw std::invalid_argument("evaluate: empty testset");
    const std::size_t num_classes = classifier.rows;

    Matrix features = extractor_forward(model.extractor, testset.inputs);
    Matrix logits = classifier_logits(classifier, features);

    std::vector<std::size_t> correct(num_classes, 0), total(num_classes, 0);
    std::size_t correct_all = 0;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const double* row = logits.row(i);
        std::size_t pred = 0;
        for (std::size_t c = 1; c < num_classes; ++c) {
            if (row[c] > row[pred]) pred = c;  // ties keep the lower id
        }
        const std::size_t truth = static_cast<std::size_t>(testset.labels[i]);
        if (truth >= num_classes) throw std::invalid_argument("evaluate: label out of range");
        ++total[truth];
        if (pred == truth) {
            ++correct[truth];
            ++correct_all;
        }
    }

    EvalReport report;
    report.overall_acc = static_cast<double>(correct_all) / static_cast<double>(testset.size());
    report.per_class_acc.resize(num_classes);
    report.n_test = total;
    for (std::size_t c = 0; c < num_classes; ++c) {
        report.per_class_acc[c] = total[c] > 0 ? static_cast<double>(correct[c]) /
                                                     static_cast<double>(total[c])
                                               : kNaN;
    }
    return report;
}

EvalReport evaluate(const ModelParams& model, const LabeledDataset& testset) {
    return evaluate_with_classifier(model, model.classifier, testset);
}

GroupValues group_mean(const std::vector<double>& per_class_values,
                       const std::vector<std::size_t>& train_counts,
                       const GroupThresholds& thresholds) {
    if (per_class_values.size() != train_counts.size()) {
        throw std::invalid_argument("group_mean: value/count length mismatch");
    }
    if (thresholds.many_above <= thresholds.few_below) {
        throw std::invalid_argument("group_mean: thresholds need many_above > few_below");
    }
    double sum[3] = {0.0, 0.0, 0.0};
    std::size_t n[3] = {0, 0, 0};
    for (std::size_t c = 0; c < per_class_values.size(); ++c) {
        if (std::isnan(per_class_values[c])) continue;
        int g = 1;
        if (train_counts[c] > thresholds.many_above) g = 0;
        else if (train_counts[c] < thresholds.few_below) g = 2;
        sum[g] += per_class_values[c];
        ++n[g];
    }
    GroupValues out;
    out.many = n[0] ? sum[0] / static_cast<double>(n[0]) : kNaN;
    out.medium = n[1] ? sum[1] / static_cast<double>(n[1]) : kNaN;
    out.few = n[2] ? sum[2] / static_cast<double>(n[2]) : kNaN;
    return out;
}

}  // namespace creff
