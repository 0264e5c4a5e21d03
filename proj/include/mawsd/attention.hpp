#ifndef MAWSD_ATTENTION_HPP
#define MAWSD_ATTENTION_HPP

#include "mawsd/tensor.hpp"

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mawsd {

/// Feature streams that each produce an attention vector over source positions.
enum class Stream { kWord, kPos, kBigram };

/// How per-stream attention vectors are merged into one distribution.
enum class FusionStrategy {
    kPointwise,       // softmax(A_w * A_p)
    kScalarWeighted,  // softmax(w1 A_w + w2 A_p + w3 A_b)
    kLocalGate,       // softmax(sum_i sigmoid(A_i) * A_i)
    kGlobalGate,      // softmax(max over streams of the per-position stream softmax)
};

/// Granularity of the sigmoid gate in local gating.
enum class GateMode { kPerElement, kPerVector };

std::string_view to_string(Stream s);
std::string_view to_string(FusionStrategy s);
std::string_view to_string(GateMode m);
FusionStrategy parse_fusion(std::string_view name);
GateMode parse_gate_mode(std::string_view name);

/// One stream's attention input, shape [B x S].
using StreamAttention = std::pair<Stream, Tensor>;

/// Learnable scalar weights of the weighted fusion: w1 (word), w2 (POS), w3 (bigram).
struct FusionWeights {
    Tensor w1;
    Tensor w2;
    Tensor w3;

    static FusionWeights constant(double value);
    static FusionWeights uniform(std::mt19937_64& rng, double lo, double hi);

    const Tensor& for_stream(Stream s) const;
    std::vector<double> values() const { return {w1.item(), w2.item(), w3.item()}; }
};

/// Attention record of one decoder step.
struct AttentionBundle {
    int step = 0;
    FusionStrategy strategy = FusionStrategy::kScalarWeighted;
    /// Inputs handed to the combiner, in stream order. Absent streams are absent.
    std::vector<StreamAttention> streams;
    /// Fused distribution [B x S].
    Tensor fused;

    const Tensor* find(Stream s) const;
};

// All combiners take an optional constant mask [B x S] (1 = real position);
// masked positions receive exactly zero probability.

/// softmax(A_w * A_p). Both inputs are expected to be distributions already.
Tensor combine_pointwise(const Tensor& a_w, const Tensor& a_p, const Tensor* mask = nullptr);

/// softmax(sum of w_stream * A_stream over the streams present).
Tensor combine_weighted(std::span<const StreamAttention> streams, const FusionWeights& weights,
                        const Tensor* mask = nullptr);

/// softmax(sum_i sigmoid(A_i) * A_i). With kPerVector the gate is one scalar
/// per stream and batch row, sigmoid of the (masked) mean of A_i.
Tensor combine_local_gate(std::span<const StreamAttention> streams, GateMode mode = GateMode::kPerElement,
                          const Tensor* mask = nullptr);

/// Streams stacked [B x k x S], softmax across the k streams at each position,
/// the per-position max kept, then softmax over positions.
Tensor combine_global_gate(std::span<const StreamAttention> streams, const Tensor* mask = nullptr);

/// Dispatches on `bundle.strategy`, writes the result to `bundle.fused` and returns it.
/// `weights` is required for kScalarWeighted.
const Tensor& fuse(AttentionBundle& bundle, const FusionWeights* weights, GateMode mode = GateMode::kPerElement,
                   const Tensor* mask = nullptr);

} // namespace mawsd

#endif // MAWSD_ATTENTION_HPP
