#include "creff/feature_probe.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace creff {

std::vector<std::vector<double>> gather_real_feature_means(
    const std::vector<ExtractorLayer>& extractor, const std::vector<ClientState>& clients,
    std::size_t num_classes) {
    std::vector<std::vector<double>> sums(num_classes);
    std::vector<std::size_t> counts(num_classes, 0);
    for (const ClientState& client : clients) {
        if (client.data.size() == 0) continue;
        const Matrix features = extractor_forward(extractor, client.data.inputs);
        for (std::size_t i = 0; i < features.rows; ++i) {
            const std::size_t c = static_cast<std::size_t>(client.data.labels[i]);
            if (c >= num_classes) {
                throw std::invalid_argument("gather_real_feature_means: label out of range");
            }
            if (sums[c].empty()) sums[c].assign(features.cols, 0.0);
            const double* row = features.row(i);
            for (std::size_t j = 0; j < features.cols; ++j) sums[c][j] += row[j];
            ++counts[c];
        }
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
    }
    return sums;  // classes with no samples stay as empty vectors
}

GroupValues feature_dissimilarity(const FeatureBank& bank,
                                  const std::vector<std::vector<double>>& real_means,
                                  const std::vector<std::size_t>& train_counts,
                                  const GroupThresholds& thresholds) {
    if (real_means.size() != bank.num_classes()) {
        throw std::invalid_argument("feature_dissimilarity: class count mismatch");
    }
    constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    const std::size_t d = bank.feature_dim();
    std::vector<double> per_class(bank.num_classes(), kNaN);

    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        if (real_means[c].empty()) continue;  // no real samples anywhere: skip
        const Matrix& block = bank.features[c];
        if (block.rows == 0) continue;
        std::vector<double> fed_mean(d, 0.0);
        for (std::size_t i = 0; i < block.rows; ++i) {
            const double* row = block.row(i);
            for (std::size_t j = 0; j < d; ++j) fed_mean[j] += row[j];
        }
        for (double& x : fed_mean) x /= static_cast<double>(block.rows);

        const double nf = l2_norm(fed_mean.data(), d);
        const double nr = l2_norm(real_means[c].data(), d);
        if (nf == 0.0 || nr == 0.0) continue;  // degenerate mean: undefined angle
        per_class[c] = 1.0 - dot(fed_mean.data(), real_means[c].data(), d) / (nf * nr);
    }
    return group_mean(per_class, train_counts, thresholds);
}

}  // namespace creff
