#ifndef CREFF_CHECKPOINT_HPP
#define CREFF_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "creff/creff.hpp"
#include "creff/model.hpp"

namespace creff {

// Everything needed to continue a run exactly where it stopped. Random
// state is the master seed alone: every stream is re-derived from it and
// the round index, so nothing else has to be captured.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> config_echo;
    ModelParams global;
    Matrix retrained_classifier;
    FeatureBank bank;  // zero classes when the method carries no bank
    std::uint64_t master_seed = 0;
    std::uint64_t next_round = 0;  // first round the resumed run executes
};

// Binary container: magic "CRFF", format version u16, then length-prefixed
// sections (config echo, global model, re-trained classifier, feature
// bank, random state, round index). Integers little-endian, doubles as
// their IEEE-754 bit patterns. Unknown sections are skipped on load.
void save_checkpoint(const std::string& path, const Checkpoint& state);

// Throws BadMagicError / VersionError / TruncatedError on malformed input.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace creff

#endif  // CREFF_CHECKPOINT_HPP
