#ifndef MAWSD_ORACLE_HPP
#define MAWSD_ORACLE_HPP

#include "mawsd/data.hpp"
#include "mawsd/grad_check.hpp"
#include "mawsd/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mawsd {

/// Two sentences (lengths 4 and 3) over six surface words: 10 input words
/// and 12 output tokens with the two senses of "bank". One batch of both.
struct MicroSetup {
    SenseCorpus corpus;
    Vocabulary vocab;
    Batch batch;
};

MicroSetup micro_setup();

/// E = 4, H = 5, no dropout; everything else at its default.
ArchitectureConfig micro_config(Architecture arch);

VocabSizes sizes_of(const Vocabulary& vocab);

struct NamedGradReport {
    std::string name;
    GradReport report;
};

/// Central-difference check of every differentiable op, each combiner and
/// each model building block, on small random inputs.
std::vector<NamedGradReport> op_gradient_suite(std::uint64_t seed = 13);

/// Full-model check of every architecture on the micro setup with the
/// sequence loss, every coordinate.
std::vector<NamedGradReport> architecture_gradient_suite(std::uint64_t seed = 7);

/// One row per check: name, parameters, coordinates, max relative error, verdict.
std::string format_grad_table(const std::vector<NamedGradReport>& rows);

} // namespace mawsd

#endif // MAWSD_ORACLE_HPP
