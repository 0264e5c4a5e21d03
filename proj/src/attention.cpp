#include "mawsd/attention.hpp"

#include "mawsd/errors.hpp"
#include "mawsd/ops.hpp"

namespace mawsd {

std::string_view to_string(Stream s)
{
    switch (s) {
    case Stream::kWord: return "word";
    case Stream::kPos: return "pos";
    case Stream::kBigram: return "bigram";
    }
    return "?";
}

std::string_view to_string(FusionStrategy s)
{
    switch (s) {
    case FusionStrategy::kPointwise: return "pointwise";
    case FusionStrategy::kScalarWeighted: return "scalar-weighted";
    case FusionStrategy::kLocalGate: return "local-gate";
    case FusionStrategy::kGlobalGate: return "global-gate";
    }
    return "?";
}

std::string_view to_string(GateMode m)
{
    return m == GateMode::kPerElement ? "element" : "vector";
}

FusionStrategy parse_fusion(std::string_view name)
{
    for (auto s : {FusionStrategy::kPointwise, FusionStrategy::kScalarWeighted, FusionStrategy::kLocalGate,
                   FusionStrategy::kGlobalGate})
        if (to_string(s) == name) return s;
    throw ConfigError("unknown fusion strategy '" + std::string(name) +
                      "' (expected pointwise, scalar-weighted, local-gate or global-gate)");
}

GateMode parse_gate_mode(std::string_view name)
{
    if (name == "element") return GateMode::kPerElement;
    if (name == "vector") return GateMode::kPerVector;
    throw ConfigError("unknown gate mode '" + std::string(name) + "' (expected element or vector)");
}

FusionWeights FusionWeights::constant(double value)
{
    return {Tensor::scalar(value, true), Tensor::scalar(value, true), Tensor::scalar(value, true)};
}

FusionWeights FusionWeights::uniform(std::mt19937_64& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    const double a = u(rng);
    const double b = u(rng);
    const double c = u(rng);
    return {Tensor::scalar(a, true), Tensor::scalar(b, true), Tensor::scalar(c, true)};
}

const Tensor& FusionWeights::for_stream(Stream s) const
{
    switch (s) {
    case Stream::kWord: return w1;
    case Stream::kPos: return w2;
    case Stream::kBigram: return w3;
    }
    return w1;
}

const Tensor* AttentionBundle::find(Stream s) const
{
    for (const auto& [stream, t] : streams)
        if (stream == s) return &t;
    return nullptr;
}

namespace {

Tensor normalise(const Tensor& scores, const Tensor* mask)
{
    return mask ? masked_softmax(scores, *mask, -1) : softmax(scores, -1);
}

void require_streams(std::span<const StreamAttention> streams, const char* what)
{
    if (streams.empty()) throw ConfigError(std::string(what) + ": no attention streams present");
    const Shape& first = streams.front().second.shape();
    if (first.size() != 2) throw DimensionError(std::string(what) + ": attention must be [B x S], got " +
                                                shape_string(first));
    for (const auto& [s, t] : streams)
        if (t.shape() != first)
            throw DimensionError(std::string(what) + ": stream '" + std::string(to_string(s)) + "' has shape " +
                                 shape_string(t.shape()) + ", expected " + shape_string(first));
}

// Mean over unmasked positions, [B x S] -> [B x 1].
Tensor row_mean(const Tensor& a, const Tensor* mask)
{
    const Index rows = a.dim(0);
    const Index cols = a.dim(1);
    Array inv(rows);
    for (Index r = 0; r < rows; ++r) {
        double count = static_cast<double>(cols);
        if (mask) count = mask->value().segment(r * cols, cols).sum();
        inv(r) = count > 0 ? 1.0 / count : 0.0;
    }
    Tensor masked = mask ? mul(a, *mask) : a;
    return reshape(mul(sum_axis(masked, 1), Tensor::from({rows}, std::move(inv))), {rows, 1});
}

} // namespace

Tensor combine_pointwise(const Tensor& a_w, const Tensor& a_p, const Tensor* mask)
{
    if (a_w.shape() != a_p.shape())
        throw DimensionError("combine_pointwise: shapes " + shape_string(a_w.shape()) + " and " +
                             shape_string(a_p.shape()) + " differ");
    return normalise(mul(a_w, a_p), mask);
}

Tensor combine_weighted(std::span<const StreamAttention> streams, const FusionWeights& weights, const Tensor* mask)
{
    require_streams(streams, "combine_weighted");
    Tensor total;
    for (const auto& [s, a] : streams) {
        Tensor term = mul(a, weights.for_stream(s));
        total = total.defined() ? add(total, term) : term;
    }
    return normalise(total, mask);
}

Tensor combine_local_gate(std::span<const StreamAttention> streams, GateMode mode, const Tensor* mask)
{
    require_streams(streams, "combine_local_gate");
    Tensor total;
    for (const auto& [s, a] : streams) {
        Tensor gate = mode == GateMode::kPerElement ? sigmoid(a) : sigmoid(row_mean(a, mask));
        Tensor term = mul(gate, a);
        total = total.defined() ? add(total, term) : term;
    }
    return normalise(total, mask);
}

Tensor combine_global_gate(std::span<const StreamAttention> streams, const Tensor* mask)
{
    require_streams(streams, "combine_global_gate");
    std::vector<Tensor> parts;
    parts.reserve(streams.size());
    for (const auto& sa : streams) parts.push_back(sa.second);
    Tensor stacked = stack(parts, 1);                     // [B x k x S]
    Tensor best = max_axis(softmax(stacked, 1), 1);       // [B x S]
    return normalise(best, mask);
}

const Tensor& fuse(AttentionBundle& bundle, const FusionWeights* weights, GateMode mode, const Tensor* mask)
{
    const auto& streams = bundle.streams;
    switch (bundle.strategy) {
    case FusionStrategy::kPointwise:
        if (streams.size() != 2)
            throw ConfigError("pointwise fusion needs exactly two streams, got " + std::to_string(streams.size()));
        bundle.fused = combine_pointwise(streams[0].second, streams[1].second, mask);
        break;
    case FusionStrategy::kScalarWeighted:
        if (!weights) throw ConfigError("scalar-weighted fusion requires fusion weights");
        bundle.fused = combine_weighted(streams, *weights, mask);
        break;
    case FusionStrategy::kLocalGate:
        bundle.fused = combine_local_gate(streams, mode, mask);
        break;
    case FusionStrategy::kGlobalGate:
        bundle.fused = combine_global_gate(streams, mask);
        break;
    }
    return bundle.fused;
}

} // namespace mawsd
