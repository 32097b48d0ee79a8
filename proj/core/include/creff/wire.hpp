#ifndef CREFF_WIRE_HPP
#define CREFF_WIRE_HPP

#include <cstddef>
#include <vector>

#include "creff/model.hpp"

namespace creff {

// The exact client -> server payload. Keep this file honest: everything a
// client reveals per round is listed here, and the audit tests destructure
// these records field-by-field, so adding a field is a deliberate act.
//
// Per-class gradients are averaged before leaving the client; the per-class
// sample count used in that average stays behind.
struct WireClassGradient {
    std::size_t class_id = 0;
    Matrix grad;  // C x d, already averaged over the client's class-c samples
};

struct ClientUpload {
    ModelParams model;            // locally updated parameters
    std::size_t num_samples = 0;  // |D^k|, the aggregation weight
    std::vector<WireClassGradient> class_gradients;
};

}  // namespace creff

#endif  // CREFF_WIRE_HPP
