#ifndef CREFF_RNG_HPP
#define CREFF_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace creff {

// Seed derivation for named substreams. Every random draw in a run comes
// from a stream seeded as derive_seed(master, tag[, a[, b]]), so two runs
// with the same master seed replay identically no matter how client work
// is scheduled, and resuming at round t re-derives the exact streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0);

// mt19937_64 plus explicitly-coded samplers. The standard engine is
// bit-exact per the standard; the distributions here are hand-rolled so
// sequences do not depend on the standard library's distribution
// implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double next_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n);

    // Standard normal, Box-Muller with cached spare.
    double normal();

    // Gamma(alpha, 1), Marsaglia-Tsang squeeze with the alpha<1 boost.
    double gamma(double alpha);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    // Partial Fisher-Yates: k distinct values uniformly from 0..n-1.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace creff

#endif  // CREFF_RNG_HPP
