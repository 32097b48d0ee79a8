#ifndef CREFF_REPORT_HPP
#define CREFF_REPORT_HPP

#include <cstddef>

#include "creff/metrics.hpp"

namespace creff {

// One round's worth of observable results. Accuracy fields are always
// filled; the matching/dissimilarity traces hold NaN when the method does
// not produce them (plain FedAvg, empty groups).
struct RoundReport {
    std::size_t round = 0;
    EvalReport eval_global;     // aggregated model w
    EvalReport eval_retrained;  // re-trained classifier model; equals eval_global
                                // for methods without a second classifier
    GroupValues match_pre;      // matching loss before this round's feature optimization
    GroupValues match_post;     // ... and after
    GroupValues feat_dissim;    // privileged diagnostic, filled by the harness observer
    std::size_t stale_classes = 0;  // classes no selected client has held yet
    double wall_seconds = 0.0;      // in-memory timing only; never serialized, so
                                    // repeated runs stay byte-identical on disk
};

}  // namespace creff

#endif  // CREFF_REPORT_HPP
