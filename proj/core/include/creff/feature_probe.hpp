#ifndef CREFF_FEATURE_PROBE_HPP
#define CREFF_FEATURE_PROBE_HPP

#include <vector>

#include "creff/creff.hpp"
#include "creff/fl.hpp"
#include "creff/metrics.hpp"

// Simulation-privileged diagnostics. These reach across the federation
// boundary and read raw client data directly — something the protocol can
// never do. Only the harness (and tests) may include this header; protocol
// code must not, and a dependency-direction test enforces that via this
// file's include guard.

namespace creff {

// Per-class mean of extractor outputs over every client's raw data pooled
// together. A class with no samples anywhere yields an empty vector.
std::vector<std::vector<double>> gather_real_feature_means(
    const std::vector<ExtractorLayer>& extractor, const std::vector<ClientState>& clients,
    std::size_t num_classes);

// Per class: cosine dissimilarity (1 - cos) between the mean federated
// feature and the mean real feature, averaged per count group. Classes with
// no real features, or a degenerate (zero-norm) mean, are skipped.
GroupValues feature_dissimilarity(const FeatureBank& bank,
                                  const std::vector<std::vector<double>>& real_means,
                                  const std::vector<std::size_t>& train_counts,
                                  const GroupThresholds& thresholds);

}  // namespace creff

#endif  // CREFF_FEATURE_PROBE_HPP
