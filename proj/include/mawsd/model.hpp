#ifndef MAWSD_MODEL_HPP
#define MAWSD_MODEL_HPP

#include "mawsd/attention.hpp"
#include "mawsd/data.hpp"
#include "mawsd/grad_check.hpp"
#include "mawsd/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mawsd {

enum class Architecture {
    kSeq2Seq,          // "seq2seq": word stream
    kSeq2SeqConv,      // "seq2seq+conv": bigram stream
    kPosPointwise,     // "seq2seq+pos-pointwise": word + POS, pointwise fusion
    kPosWeighted,      // "seq2seq+pos-weighted": word + POS
    kConvPosWeighted,  // "seq2seq+conv+pos-weighted": word + POS + bigram
};

enum class ScorerKind { kDot, kGeneral, kConcat };

enum class FusionInit { kOnes, kUniform };

std::string_view to_string(Architecture a);
std::string_view to_string(ScorerKind s);
std::string_view to_string(FusionInit f);
Architecture parse_architecture(std::string_view name);
/// "dot", "general" (alias "linear"), "concat".
ScorerKind parse_scorer(std::string_view name);
FusionInit parse_fusion_init(std::string_view name);

inline constexpr Architecture kAllArchitectures[] = {Architecture::kSeq2Seq, Architecture::kSeq2SeqConv,
                                                     Architecture::kPosPointwise, Architecture::kPosWeighted,
                                                     Architecture::kConvPosWeighted};

struct ArchitectureConfig {
    Architecture architecture = Architecture::kConvPosWeighted;
    FusionStrategy fusion = FusionStrategy::kScalarWeighted;
    ScorerKind attention = ScorerKind::kDot;
    GateMode gate_mode = GateMode::kPerElement;
    int embed_dim = 100;
    int hidden_dim = 100;
    int encoder_layers = 2;
    int decoder_layers = 2;
    bool bidirectional = true;
    double dropout = 0.1;
    /// Width of the concat scorer's hidden layer; 0 means hidden_dim.
    int concat_dim = 0;
    FusionInit fusion_init = FusionInit::kOnes;

    /// Streams in fusion order (word, POS, bigram).
    std::vector<Stream> streams() const;
    /// Pointwise for the pointwise architecture, the configured strategy
    /// otherwise; meaningless with a single stream.
    FusionStrategy effective_fusion() const;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    nlohmann::json to_json() const;
    /// Unknown keys are rejected.
    static ArchitectureConfig from_json(const nlohmann::json& doc);
    static const std::vector<std::string>& keys();
};

struct GruLayer {
    Tensor W_z, U_z, b_z;
    Tensor W_r, U_r, b_r;
    Tensor W_n, U_n, b_n;

    int input_dim() const { return static_cast<int>(W_z.dim(0)); }
    int hidden_dim() const { return static_cast<int>(U_z.dim(0)); }
};

struct GruCell {
    std::vector<GruLayer> forward;
    /// Empty for a unidirectional cell.
    std::vector<GruLayer> backward;

    int layers() const { return static_cast<int>(forward.size()); }
    bool bidirectional() const { return !backward.empty(); }
    int input_dim() const { return forward.front().input_dim(); }
    int hidden_dim() const { return forward.front().hidden_dim(); }
};

struct AttentionScorer {
    ScorerKind kind = ScorerKind::kDot;
    Tensor W;  // general: [H x H]; concat: [2H x Hc], rows ordered (h~, O_i)
    Tensor v;  // concat: [Hc]
};

struct DecoderHead {
    Tensor W;  // [2H x V_out]
    Tensor b;  // [V_out]
};

struct VocabSizes {
    int words = 0;
    int pos = 0;
    int output = 0;
};

/// Inverted dropout bound to a generator; identity when `rng` is null.
struct Dropout {
    double rate = 0.0;
    std::mt19937_64* rng = nullptr;

    Tensor operator()(const Tensor& x) const;
};

struct Model {
    ArchitectureConfig config;
    VocabSizes sizes;

    Tensor word_embed;    // [V_words x E]
    Tensor pos_embed;     // [V_pos x E]
    Tensor bigram_kernel; // [2 x E]
    Tensor output_embed;  // [V_out x E]
    GruCell encoder;      // shared by every stream
    GruCell decoder;
    std::vector<std::pair<Stream, AttentionScorer>> scorers;
    FusionWeights fusion;
    DecoderHead head;

    /// Fresh parameters drawn from `seed`.
    static Model create(const ArchitectureConfig& config, const VocabSizes& sizes, std::uint64_t seed);

    /// Every trainable tensor under a stable dotted name, encoder side first.
    NamedTensors parameters() const;
    /// Copies values in by name; throws DataError on a missing name or shape mismatch.
    void load_parameters(const NamedTensors& params);

    const AttentionScorer& scorer(Stream s) const;
    /// Fusion weights in (w1, w2, w3) order; inactive streams keep their init.
    std::vector<double> fusion_values() const { return fusion.values(); }
};

/// True for parameters updated at the decoder learning rate.
bool is_decoder_param(const std::string& name);

// --- building blocks -------------------------------------------------------

/// [B x S] indices -> [B x S x E].
Tensor embed_sequence(const IndexGrid& tokens, const Tensor& table);

/// [B x (S+1) x E] with the start embedding prepended -> [B x S x E];
/// B_i = E_i * K_0 + E_{i+1} * K_1 (row-wise).
Tensor convolve_bigrams(const Tensor& padded, const Tensor& kernel);

/// [B x S] indices -> [B x (S+1)] with <s> in column 0.
IndexGrid prepend_start(const IndexGrid& tokens);

/// One GRU update: [B x in], [B x H] -> [B x H].
Tensor gru_step(const Tensor& x, const Tensor& h, const GruLayer& layer);

struct EncodedStream {
    Tensor outputs;  // [B x S x H]
    Tensor final;    // [B x H], top layer
};

/// Runs the (possibly bidirectional, stacked) cell over x [B x S x E].
/// Pad steps (mask 0) carry the hidden state through unchanged.
/// Bidirectional outputs and finals are summed.
EncodedStream encode_stream(const Tensor& x, const GruCell& cell, const Tensor& mask, const Dropout& dropout = {});

/// Raw energies [B x S] of h~ [B x H] against O [B x S x H].
Tensor score_attention(const Tensor& outputs, const Tensor& query, const AttentionScorer& scorer);

/// Advances every decoder layer by one step; `state` holds one [B x H] per layer.
std::vector<Tensor> decode_step(const Tensor& input, std::span<const Tensor> state, const GruCell& cell,
                                const Dropout& dropout = {});

/// log_softmax([h~ ; C] W + b): [B x V_out].
Tensor project_output(const Tensor& query, const Tensor& context, const DecoderHead& head);

/// C = A O: [B x S] x [B x S x H] -> [B x H].
Tensor attend(const Tensor& attention, const Tensor& outputs);

// --- end to end ------------------------------------------------------------

enum class DecodeMode { kTeacherForced, kGreedy };

struct ForwardOptions {
    DecodeMode mode = DecodeMode::kTeacherForced;
    /// Enables dropout when non-null.
    std::mt19937_64* rng = nullptr;
    bool record_attention = true;
};

struct ForwardResult {
    Tensor log_probs;  // [B x T x V_out], T = S+1 when teacher-forced
    std::vector<AttentionBundle> attention;  // one per step
    IndexGrid predictions;                   // [B x T] argmax per step
    int steps = 0;
};

ForwardResult forward(const Model& model, const Batch& batch, const ForwardOptions& options = {});

// --- checkpoints -----------------------------------------------------------

struct Checkpoint {
    Model model;
    Vocabulary vocab;
    /// Free-form extras stored alongside (train config, inventory, ...).
    nlohmann::json meta = nlohmann::json::object();
};

/// Writes params.json, config.json, vocab_{words,pos,output}.json and
/// meta.json into `dir`, each atomically.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const Vocabulary& vocab,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Validates that parameter shapes agree with config and vocabulary sizes.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace mawsd

#endif // MAWSD_MODEL_HPP
