#include "creff/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "creff/rng.hpp"

namespace creff {

std::size_t ClassProfile::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

void check_dataset(const LabeledDataset& ds) {
    if (ds.inputs.rows != ds.labels.size()) {
        throw std::invalid_argument("dataset: input rows do not match label count");
    }
    std::vector<std::size_t> hist(ds.class_counts.size(), 0);
    for (int y : ds.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= hist.size()) {
            throw std::invalid_argument("dataset: label out of range");
        }
        ++hist[static_cast<std::size_t>(y)];
    }
    if (hist != ds.class_counts) {
        throw std::invalid_argument("dataset: class_counts do not match label histogram");
    }
}

LabeledDataset take_rows(const LabeledDataset& parent, const std::vector<std::size_t>& rows,
                         std::size_t num_classes) {
    LabeledDataset out;
    out.inputs = Matrix(rows.size(), parent.inputs.cols);
    out.labels.reserve(rows.size());
    out.class_counts.assign(num_classes, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        if (r >= parent.size()) throw std::invalid_argument("take_rows: index out of range");
        std::copy(parent.inputs.row(r), parent.inputs.row(r) + parent.inputs.cols,
                  out.inputs.row(i));
        out.labels.push_back(parent.labels[r]);
        ++out.class_counts[static_cast<std::size_t>(parent.labels[r])];
    }
    return out;
}

ClassProfile longtail_profile(std::size_t num_classes, std::size_t n_max,
                              double imbalance_factor) {
    if (num_classes < 2) throw std::invalid_argument("longtail_profile: need at least 2 classes");
    if (imbalance_factor < 1.0) {
        throw std::invalid_argument("longtail_profile: imbalance factor must be >= 1");
    }
    if (static_cast<double>(n_max) < imbalance_factor) {
        throw std::invalid_argument("longtail_profile: n_max must be >= IF so the tail class "
                                    "keeps at least one sample");
    }
    ClassProfile profile;
    profile.counts.resize(num_classes);
    profile.counts.front() = n_max;
    profile.counts.back() =
        static_cast<std::size_t>(std::floor(static_cast<double>(n_max) / imbalance_factor));
    const double denom = static_cast<double>(num_classes - 1);
    for (std::size_t c = 1; c + 1 < num_classes; ++c) {
        const double frac = static_cast<double>(c) / denom;
        const double value = static_cast<double>(n_max) * std::pow(imbalance_factor, -frac);
        profile.counts[c] = static_cast<std::size_t>(std::floor(value));
    }
    return profile;
}

Partition dirichlet_partition(const std::vector<int>& labels, std::size_t num_clients,
                              double alpha, std::uint64_t seed) {
    if (num_clients < 1) throw std::invalid_argument("dirichlet_partition: need >= 1 client");
    if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");

    int max_label = -1;
    for (int y : labels) max_label = std::max(max_label, y);
    if (max_label < 0) throw std::invalid_argument("dirichlet_partition: empty label list");
    const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (by_class[c].empty()) {
            throw std::invalid_argument("dirichlet_partition: class " + std::to_string(c) +
                                        " has no samples");
        }
    }

    Partition part;
    part.client_indices.assign(num_clients, {});
    for (std::size_t c = 0; c < num_classes; ++c) {
        RngStream rng(derive_seed(seed, "dirichlet-class", c));
        std::vector<double> prop(num_clients);
        double sum = 0.0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            prop[k] = rng.gamma(alpha);
            sum += prop[k];
        }
        const std::size_t n = by_class[c].size();
        // Largest-remainder rounding of the quotas p_k * n; ties go to the
        // lower client id so the split is deterministic.
        std::vector<std::size_t> take(num_clients, 0);
        std::vector<std::pair<double, std::size_t>> frac(num_clients);
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            const double quota = prop[k] / sum * static_cast<double>(n);
            take[k] = static_cast<std::size_t>(std::floor(quota));
            assigned += take[k];
            frac[k] = {quota - std::floor(quota), k};
        }
        std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++take[frac[r].second];

        std::vector<std::size_t> order = rng.permutation(n);
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            for (std::size_t j = 0; j < take[k]; ++j) {
                part.client_indices[k].push_back(by_class[c][order[cursor++]]);
            }
        }
    }
    for (auto& idx : part.client_indices) std::sort(idx.begin(), idx.end());
    return part;
}

namespace {

// C orthonormal directions scaled to mutual distance `separation`, via
// modified Gram-Schmidt on Gaussian draws. Requires C <= dim.
std::vector<std::vector<double>> orthonormal_means(std::size_t num_classes, std::size_t dim,
                                                   double separation, RngStream& rng) {
    std::vector<std::vector<double>> means;
    means.reserve(num_classes);
    const double scale = separation / std::sqrt(2.0);
    while (means.size() < num_classes) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        for (const auto& u : means) {
            const double proj = dot(v.data(), u.data(), dim) /
                                dot(u.data(), u.data(), dim);
            for (std::size_t b = 0; b < dim; ++b) v[b] -= proj * u[b];
        }
        const double norm = l2_norm(v.data(), dim);
        if (norm < 1e-8) continue;  // degenerate draw, redo
        for (double& x : v) x = x / norm * scale;
        means.push_back(std::move(v));
    }
    return means;
}

// Fallback for C > dim: random unit directions at radii separation * (c+1),
// so any two means differ in norm by at least `separation`.
std::vector<std::vector<double>> shell_means(std::size_t num_classes, std::size_t dim,
                                             double separation, RngStream& rng) {
    std::vector<std::vector<double>> means;
    means.reserve(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> v(dim);
        double norm = 0.0;
        do {
            for (double& x : v) x = rng.normal();
            norm = l2_norm(v.data(), dim);
        } while (norm < 1e-8);
        const double radius = separation * static_cast<double>(c + 1);
        for (double& x : v) x = x / norm * radius;
        means.push_back(std::move(v));
    }
    return means;
}

}  // namespace

LabeledDataset synth_mixture(std::size_t num_classes, std::size_t input_dim,
                             const ClassProfile& profile, double separation,
                             double noise_sigma, std::uint64_t seed) {
    if (input_dim < 1) throw std::invalid_argument("synth_mixture: input_dim must be >= 1");
    if (!(separation > 0.0)) throw std::invalid_argument("synth_mixture: separation must be > 0");
    if (noise_sigma < 0.0) throw std::invalid_argument("synth_mixture: noise_sigma must be >= 0");
    if (profile.num_classes() != num_classes) {
        throw std::invalid_argument("synth_mixture: profile class count mismatch");
    }

    RngStream mean_rng(derive_seed(seed, "mixture-means"));
    const auto means = num_classes <= input_dim
                           ? orthonormal_means(num_classes, input_dim, separation, mean_rng)
                           : shell_means(num_classes, input_dim, separation, mean_rng);

    LabeledDataset ds;
    ds.inputs = Matrix(profile.total(), input_dim);
    ds.labels.reserve(profile.total());
    ds.class_counts = profile.counts;

    RngStream noise_rng(derive_seed(seed, "mixture-noise"));
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < profile.counts[c]; ++i, ++row) {
            double* out = ds.inputs.row(row);
            for (std::size_t b = 0; b < input_dim; ++b) {
                out[b] = means[c][b] + noise_sigma * noise_rng.normal();
            }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

LabeledDataset apply_profile(const LabeledDataset& ds, const ClassProfile& profile,
                             std::uint64_t seed) {
    if (profile.num_classes() != ds.num_classes()) {
        throw std::invalid_argument("apply_profile: class count mismatch");
    }
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    std::vector<std::size_t> keep;
    keep.reserve(profile.total());
    for (std::size_t c = 0; c < profile.num_classes(); ++c) {
        if (by_class[c].size() < profile.counts[c]) {
            throw std::invalid_argument("apply_profile: class " + std::to_string(c) + " has " +
                                        std::to_string(by_class[c].size()) +
                                        " samples, profile wants " +
                                        std::to_string(profile.counts[c]));
        }
        RngStream rng(derive_seed(seed, "subsample-class", c));
        auto pick = rng.sample_without_replacement(by_class[c].size(), profile.counts[c]);
        std::sort(pick.begin(), pick.end());
        for (std::size_t p : pick) keep.push_back(by_class[c][p]);
    }
    return take_rows(ds, keep, ds.num_classes());
}

std::pair<LabeledDataset, LabeledDataset> split_by_counts(
    const LabeledDataset& ds, const std::vector<std::size_t>& first_counts) {
    if (first_counts.size() != ds.num_classes()) {
        throw std::invalid_argument("split_by_counts: class count mismatch");
    }
    std::vector<std::size_t> first, rest;
    std::vector<std::size_t> taken(ds.num_classes(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(ds.labels[i]);
        if (taken[c] < first_counts[c]) {
            first.push_back(i);
            ++taken[c];
        } else {
            rest.push_back(i);
        }
    }
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
        if (taken[c] < first_counts[c]) {
            throw std::invalid_argument("split_by_counts: class " + std::to_string(c) +
                                        " has too few samples");
        }
    }
    return {take_rows(ds, first, ds.num_classes()), take_rows(ds, rest, ds.num_classes())};
}

}  // namespace creff
