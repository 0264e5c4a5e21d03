#include "mawsd/synthetic.hpp"

#include "mawsd/errors.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace mawsd {

namespace {

struct SenseSpec {
    const char* key;
    std::array<const char*, 2> cues;
};

struct AmbiguousWord {
    const char* lemma;
    PosClass pos;
    std::array<SenseSpec, 2> senses;
};

constexpr std::array<AmbiguousWord, 4> kLexicon{{
    {"bank", PosClass::kNoun, {{{"river", {"river", "shore"}}, {"finance", {"money", "loan"}}}}},
    {"play", PosClass::kVerb, {{{"music", {"piano", "guitar"}}, {"sport", {"football", "tennis"}}}}},
    {"bright", PosClass::kAdj, {{{"light", {"sun", "lamp"}}, {"clever", {"student", "pupil"}}}}},
    {"hard", PosClass::kAdv, {{{"effort", {"exam", "homework"}}, {"force", {"hammer", "punch"}}}}},
}};

constexpr std::array<const char*, 16> kFillers{"the", "a",    "of",   "to",   "and",  "in",  "that", "it",
                                               "was", "on",   "with", "for",  "at",   "by",  "from", "this"};

} // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& options)
{
    if (options.min_length < 2 || options.max_length < options.min_length)
        throw ConfigError("synthetic corpus: need 2 <= min_length <= max_length");
    if (options.max_cue_distance < 1) throw ConfigError("synthetic corpus: max_cue_distance must be >= 1");

    std::mt19937_64 rng(options.seed);
    auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

    // Every (word, sense, cue) combination, as indices into the lexicon.
    std::vector<std::array<int, 3>> combos;
    for (int w = 0; w < static_cast<int>(kLexicon.size()); ++w)
        for (int s = 0; s < 2; ++s)
            for (int c = 0; c < 2; ++c) combos.push_back({w, s, c});
    std::vector<std::array<int, 3>> block;

    SyntheticCorpus out;
    for (int s = 0; s < options.sentences; ++s) {
        std::array<int, 3> choice;
        if (options.balanced) {
            if (block.empty()) {
                block = combos;
                std::shuffle(block.begin(), block.end(), rng);
            }
            choice = block.back();
            block.pop_back();
        } else {
            choice = {pick(static_cast<int>(kLexicon.size())), pick(2), pick(2)};
        }
        const AmbiguousWord& word = kLexicon[static_cast<std::size_t>(choice[0])];
        const SenseSpec& sense = word.senses[static_cast<std::size_t>(choice[1])];
        const char* cue = sense.cues[static_cast<std::size_t>(choice[2])];
        const int length = options.min_length + pick(options.max_length - options.min_length + 1);
        const int target = pick(length);

        std::vector<int> offsets;
        for (int d = -options.max_cue_distance; d <= options.max_cue_distance; ++d)
            if (d != 0 && target + d >= 0 && target + d < length) offsets.push_back(d);
        const int cue_at = target + offsets[static_cast<std::size_t>(pick(static_cast<int>(offsets.size())))];

        Sentence sentence;
        sentence.id = s;
        sentence.doc = "synthetic";
        for (int i = 0; i < length; ++i) {
            Token tok;
            if (i == target) {
                tok = {word.lemma, word.lemma, word.pos, sense.key};
            } else if (i == cue_at) {
                tok = {cue, cue, PosClass::kNoun, ""};
            } else {
                const char* f = kFillers[static_cast<std::size_t>(pick(static_cast<int>(kFillers.size())))];
                tok = {f, f, PosClass::kOther, ""};
            }
            sentence.tokens.push_back(std::move(tok));
        }
        out.corpus.sentences.push_back(std::move(sentence));
        out.target_positions.push_back(target);
        out.cue_positions.push_back(cue_at);
    }
    return out;
}

} // namespace mawsd
