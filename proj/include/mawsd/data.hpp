#ifndef MAWSD_DATA_HPP
#define MAWSD_DATA_HPP

#include "mawsd/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mawsd {

/// Coarse POS classes used for tagging and for per-class reporting.
enum class PosClass { kNoun, kVerb, kAdj, kAdv, kOther };

std::string_view to_string(PosClass p);
/// Canonical names (nn, vb, adj, adv, other) plus common aliases
/// (n/v/a/r, NOUN/VERB/ADJ/ADV, Penn prefixes NN*/VB*/JJ*/RB*).
/// Returns false when the tag is not recognised.
bool parse_pos(std::string_view tag, PosClass& out);

struct Token {
    std::string surface;
    std::string lemma;
    PosClass pos = PosClass::kOther;
    std::string sense;  // empty when untagged

    bool tagged() const { return !sense.empty(); }
    /// Output-side form "lemma%sense".
    std::string sense_token() const { return lemma + "%" + sense; }
};

struct Sentence {
    int id = 0;
    std::string doc;
    std::vector<Token> tokens;
};

struct SenseCorpus {
    std::vector<Sentence> sentences;
    /// Non-fatal parse diagnostics, each prefixed with "line N:".
    std::vector<std::string> warnings;

    std::size_t tagged_count() const;
};

/// Reads the tab-separated corpus format:
///   surface<TAB>lemma<TAB>pos[<TAB>sensekey]
/// Blank lines separate sentences, `#` starts a comment, `# doc: NAME`
/// opens a document. Unknown POS tags become `other` with a warning.
/// Throws DataError (with the line number) on missing columns or a sense
/// key on a non-content token.
SenseCorpus parse_corpus(std::istream& in, const std::string& source = "<stream>");
SenseCorpus parse_corpus_file(const std::filesystem::path& path);
std::string serialize_corpus(const SenseCorpus& corpus);

/// Subset in the given order; sentence ids are preserved.
SenseCorpus select_sentences(const SenseCorpus& corpus, std::span<const int> ids);

/// Symbol table with the four specials at fixed indices 0..3.
class Vocab {
public:
    static constexpr int kStart = 0;
    static constexpr int kEos = 1;
    static constexpr int kPad = 2;
    static constexpr int kUnk = 3;
    static constexpr std::string_view kSpecials[4] = {"<s>", "<eos>", "<pad>", "<unk>"};

    Vocab();

    int add(const std::string& token);
    /// Index of `token`, or kUnk.
    int index(const std::string& token) const;
    bool contains(const std::string& token) const { return lookup_.count(token) != 0; }
    const std::string& token(int index) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& doc);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> lookup_;
};

/// Source words, POS tags, and output tokens. The output table starts as an
/// exact copy of the word table (same indices) followed by every sense token
/// seen in training, so an untouched position has target index == source index.
struct Vocabulary {
    Vocab words;
    Vocab pos;
    Vocab output;
};

Vocabulary build_vocab(const SenseCorpus& train, int min_count = 1);

/// One disambiguation instance: a sentence and the position of its target word.
struct Instance {
    int sentence = 0;  // index into SenseCorpus::sentences
    int target = 0;    // token position within the sentence
};

/// One instance per sense-tagged token.
std::vector<Instance> make_instances(const SenseCorpus& corpus);

enum class WindowMode { kAroundTarget, kMaxLength };

struct WindowConfig {
    /// Tokens kept on each side of the target.
    int context = 25;
    WindowMode mode = WindowMode::kAroundTarget;
    /// Used by kMaxLength: the first `max_length` tokens (slid to keep the target).
    int max_length = 50;
};

/// [begin, end) token range kept for an instance.
std::pair<int, int> context_window(int length, int target, const WindowConfig& window);

struct Batch {
    IndexGrid source;  // [B x S] word indices, <pad> beyond length
    IndexGrid pos;     // [B x S]
    IndexGrid target;  // [B x (S+1)] output indices, <eos> after the last token
    Tensor source_mask;                   // [B x S] 1 on real tokens
    Eigen::ArrayXXd target_mask;          // [B x (S+1)] 1 on tokens and the <eos> slot
    std::vector<int> lengths;
    std::vector<int> target_positions;    // within the window
    std::vector<int> window_begin;        // window offset in the original sentence
    std::vector<Instance> instances;
    std::vector<std::string> lemmas;
    std::vector<std::string> gold;        // gold sense token
    std::vector<PosClass> target_pos;

    int size() const { return static_cast<int>(lengths.size()); }
    int max_length() const { return static_cast<int>(source.cols()); }
};

/// Pads, masks and length-sorts (longest first, stable) one batch.
/// Throws UsageError for an empty instance list.
Batch make_batch(const SenseCorpus& corpus, std::span<const Instance> instances, const Vocabulary& vocab,
                 const WindowConfig& window = {});

/// Consecutive batches of at most `batch_size` instances, in the given order.
std::vector<Batch> make_batches(const SenseCorpus& corpus, std::span<const Instance> instances,
                                const Vocabulary& vocab, int batch_size, const WindowConfig& window = {});

/// Seeded, sentence-level train/dev/test partition.
struct SplitManifest {
    std::uint64_t seed = 0;
    std::vector<double> ratios{0.8, 0.1, 0.1};
    std::vector<int> train;
    std::vector<int> dev;
    std::vector<int> test;

    nlohmann::json to_json() const;
    static SplitManifest from_json(const nlohmann::json& doc);
};

SplitManifest split_corpus(int sentence_count, std::uint64_t seed, std::vector<double> ratios = {0.8, 0.1, 0.1});

} // namespace mawsd

#endif // MAWSD_DATA_HPP
