#ifndef MAWSD_EVAL_HPP
#define MAWSD_EVAL_HPP

#include "mawsd/data.hpp"
#include "mawsd/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mawsd {

/// Candidate senses per lemma, as output-vocabulary indices.
struct SenseInventory {
    std::map<std::string, std::vector<int>> candidates;  // ascending index order
    std::map<std::string, int> most_frequent;            // ties -> lower index

    /// Collects every lemma%sense of `train` that has an output index.
    static SenseInventory build(const SenseCorpus& train, const Vocab& output);

    const std::vector<int>* find(const std::string& lemma) const;

    nlohmann::json to_json() const;
    /// Throws DataError on malformed input or an index outside [0, output_size).
    static SenseInventory from_json(const nlohmann::json& doc, int output_size);
};

/// Candidates of `lemma` sorted by descending score (stable on ties).
/// Empty when the lemma is not in the inventory.
std::vector<int> rank_senses(std::span<const double> scores, const SenseInventory& inventory,
                             const std::string& lemma);

struct Prediction {
    int sentence = 0;
    int target = 0;
    std::string lemma;
    PosClass pos = PosClass::kOther;
    std::string gold;
    std::string predicted;  // empty when unattempted
    int gold_rank = -1;     // position of gold in the ranking, -1 if absent

    bool attempted() const { return !predicted.empty(); }
    bool correct() const { return attempted() && predicted == gold; }
};

struct ClassScore {
    int support = 0;
    int attempted = 0;
    int correct = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline constexpr const char* kReportClasses[] = {"nn", "vb", "adj", "adv", "all"};

struct EvalReport {
    std::map<std::string, ClassScore> classes;
    std::vector<Prediction> instances;

    const ClassScore& all() const { return classes.at("all"); }
    nlohmann::json to_json() const;
};

/// Precision over attempted, recall over all, micro-averaged within each
/// class. "other" instances count only toward "all".
/// Throws UsageError on an empty prediction list.
EvalReport score_f1(std::span<const Prediction> predictions);

struct EvalOptions {
    int batch_size = 32;
    WindowConfig window;
    /// Predict each lemma's most frequent training sense instead of querying the model.
    bool most_frequent_baseline = false;
};

/// Teacher-forced scoring of every instance at its target slot.
std::vector<Prediction> predict(const Model& model, const SenseCorpus& corpus, std::span<const Instance> instances,
                                const Vocabulary& vocab, const SenseInventory& inventory,
                                const EvalOptions& options = {});

EvalReport evaluate(const Model& model, const SenseCorpus& corpus, const Vocabulary& vocab,
                    const SenseInventory& inventory, const EvalOptions& options = {});

struct TableRow {
    std::string model;
    std::string train;
    std::string test;
    EvalReport report;
};

/// Aligned columns `model train test nn vb adj adv all`, F1 in percent.
std::string format_table(std::span<const TableRow> rows);

// --- attention export ----------------------------------------------------------

struct AttentionDump {
    std::vector<std::string> tokens;
    std::vector<int> unk_positions;
    int target_position = -1;
    FusionStrategy strategy = FusionStrategy::kScalarWeighted;
    std::vector<double> weights;
    /// Per stream, per decoder step, a distribution over source positions.
    std::vector<std::pair<Stream, Eigen::ArrayXXd>> streams;
    Eigen::ArrayXXd fused;  // [steps x S]

    /// Source position with the highest fused weight at the target step.
    int fused_argmax_at_target() const;
};

/// Teacher-forced pass over one sentence; steps = sentence length.
AttentionDump collect_attention(const Model& model, const Vocabulary& vocab, const Sentence& sentence,
                                int target = -1, const WindowConfig& window = {});

/// Writes <stream>.csv, fused.csv and manifest.json into `dir`.
void write_attention(const std::filesystem::path& dir, const AttentionDump& dump);

} // namespace mawsd

#endif // MAWSD_EVAL_HPP
