#ifndef MAWSD_SYNTHETIC_HPP
#define MAWSD_SYNTHETIC_HPP

#include "mawsd/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mawsd {

/// Generator for a toy disambiguation corpus: every sentence holds one
/// ambiguous word whose sense is fixed by a single cue word placed within
/// `max_cue_distance` positions of it. All other tokens are function-word
/// fillers that carry no sense information.
struct SyntheticOptions {
    int sentences = 50;
    int min_length = 6;
    int max_length = 10;
    int max_cue_distance = 3;
    /// Cycle through every (word, sense, cue) combination in shuffled blocks so
    /// each cue occurs floor(n/16) or ceil(n/16) times; otherwise draw them independently.
    bool balanced = true;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    SenseCorpus corpus;
    std::vector<int> target_positions;
    /// Position of the planted cue word in each sentence.
    std::vector<int> cue_positions;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

} // namespace mawsd

#endif // MAWSD_SYNTHETIC_HPP
