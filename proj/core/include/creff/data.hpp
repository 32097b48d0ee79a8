#ifndef CREFF_DATA_HPP
#define CREFF_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "creff/matrix.hpp"

namespace creff {

// Per-class sample counts, sorted non-increasing (head classes first).
struct ClassProfile {
    std::vector<std::size_t> counts;

    std::size_t num_classes() const { return counts.size(); }
    std::size_t total() const;
};

struct LabeledDataset {
    Matrix inputs;                          // N x input_dim
    std::vector<int> labels;                // N, each in [0, C)
    std::vector<std::size_t> class_counts;  // histogram of labels, length C

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_counts.size(); }
    std::size_t input_dim() const { return inputs.cols; }
};

// Recompute the label histogram; throws if it disagrees with class_counts.
void check_dataset(const LabeledDataset& ds);

// Builds a dataset from selected row indices of a parent.
LabeledDataset take_rows(const LabeledDataset& parent, const std::vector<std::size_t>& rows,
                         std::size_t num_classes);

// Disjoint per-client index lists over a parent dataset; their union covers
// every parent index exactly once.
struct Partition {
    std::vector<std::vector<std::size_t>> client_indices;

    std::size_t num_clients() const { return client_indices.size(); }
};

// n_c = floor(n_max * IF^{-(c-1)/(C-1)}) for 1-based c; n_1 = n_max and
// n_C = floor(n_max / IF) exactly.
ClassProfile longtail_profile(std::size_t num_classes, std::size_t n_max,
                              double imbalance_factor);

// For each class independently, draw proportions ~ Dir(alpha * 1_K) and
// split that class's indices among clients by largest-remainder rounding.
Partition dirichlet_partition(const std::vector<int>& labels, std::size_t num_clients,
                              double alpha, std::uint64_t seed);

// Gaussian mixture with one component per class. Class means are mutually
// at distance >= separation: scaled orthonormal directions when C <= dim,
// expanding-radius random directions otherwise. Sample counts follow the
// profile; rows are class-major.
LabeledDataset synth_mixture(std::size_t num_classes, std::size_t input_dim,
                             const ClassProfile& profile, double separation,
                             double noise_sigma, std::uint64_t seed);

// Uniform per-class subsample without replacement down to the profile counts.
LabeledDataset apply_profile(const LabeledDataset& ds, const ClassProfile& profile,
                             std::uint64_t seed);

// Splits per class into (first_counts[c] rows, remainder). Used to carve a
// held-out balanced test block out of a generated dataset.
std::pair<LabeledDataset, LabeledDataset> split_by_counts(
    const LabeledDataset& ds, const std::vector<std::size_t>& first_counts);

// IDX container I/O (big-endian; magic 0x00000803 for images with dims
// N x H x W and bytes scaled to [0,1], 0x00000801 for labels).
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes inputs quantised to bytes over the dataset's [min, max] range,
// as N x 1 x input_dim images plus a label file.
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

}  // namespace creff

#endif  // CREFF_DATA_HPP
