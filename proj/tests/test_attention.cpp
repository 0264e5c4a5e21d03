#include "mawsd/attention.hpp"
#include "mawsd/errors.hpp"
#include "mawsd/grad_check.hpp"
#include "mawsd/ops.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace mawsd;
using mawsd::testing::random_tensor;

namespace {

Index argmax_row(const Tensor& t, Index row)
{
    const Index cols = t.dim(1);
    Index best = 0;
    for (Index c = 1; c < cols; ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;
    return best;
}

void expect_distribution(const Tensor& t, double tol = 1e-6)
{
    for (Index r = 0; r < t.dim(0); ++r) {
        double total = 0;
        for (Index c = 0; c < t.dim(1); ++c) {
            ASSERT_GE(t.at(r, c), 0.0);
            total += t.at(r, c);
        }
        ASSERT_NEAR(total, 1.0, tol);
    }
}

std::vector<StreamAttention> three_streams(std::mt19937_64& rng, Shape shape, double lo, double hi)
{
    return {{Stream::kWord, random_tensor(shape, rng, lo, hi, false)},
            {Stream::kPos, random_tensor(shape, rng, lo, hi, false)},
            {Stream::kBigram, random_tensor(shape, rng, lo, hi, false)}};
}

Tensor fuse_with(FusionStrategy s, std::vector<StreamAttention> streams, const FusionWeights& w)
{
    if (s == FusionStrategy::kPointwise) streams.resize(2);
    AttentionBundle b;
    b.strategy = s;
    b.streams = std::move(streams);
    return fuse(b, &w);
}

constexpr FusionStrategy kAll[] = {FusionStrategy::kPointwise, FusionStrategy::kScalarWeighted,
                                   FusionStrategy::kLocalGate, FusionStrategy::kGlobalGate};

} // namespace

TEST(Pointwise, UniformCofactorScalesByLength)
{
    std::mt19937_64 rng(1);
    const Index s = 5;
    auto aw = softmax(random_tensor({2, s}, rng, -2, 2, false));
    auto ap = Tensor::constant({2, s}, 1.0 / static_cast<double>(s));
    auto fused = combine_pointwise(aw, ap);
    auto expected = softmax(scale(aw, 1.0 / static_cast<double>(s)));
    for (Index i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused.at(i), expected.at(i), 1e-15);
}

TEST(Pointwise, TwoPositionExample)
{
    auto a = Tensor::from({1, 2}, {0.9, 0.1});
    auto fused = combine_pointwise(a, a);
    EXPECT_NEAR(fused.at(0), 0.68997, 1e-4);
    EXPECT_NEAR(fused.at(1), 0.31003, 1e-4);
}

TEST(Pointwise, PeakedPairsReinforce)
{
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> pos(0, 6);
    for (int trial = 0; trial < 500; ++trial) {
        const int peak = pos(rng);
        auto make_peaked = [&] {
            auto x = random_tensor({1, 7}, rng, -1, 1, false);
            x.mutable_value()(peak) += 3.0;
            return softmax(x);
        };
        auto fused = combine_pointwise(make_peaked(), make_peaked());
        EXPECT_EQ(argmax_row(fused, 0), peak);
    }
}

TEST(Pointwise, Commutative)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = softmax(random_tensor({3, 6}, rng, -10, 10, false));
        auto b = softmax(random_tensor({3, 6}, rng, -10, 10, false));
        EXPECT_TRUE((combine_pointwise(a, b).value() == combine_pointwise(b, a).value()).all());
    }
}

TEST(Pointwise, ShapeMismatch)
{
    EXPECT_THROW(combine_pointwise(Tensor::zeros({1, 3}), Tensor::zeros({1, 4})), DimensionError);
}

TEST(Weighted, DegenerateWeightsSelectWordStream)
{
    std::mt19937_64 rng(4);
    auto streams = three_streams(rng, {2, 5}, -10, 10);
    FusionWeights w{Tensor::scalar(1.0, true), Tensor::scalar(0.0, true), Tensor::scalar(0.0, true)};
    auto fused = combine_weighted(streams, w);
    auto expected = softmax(streams[0].second);
    EXPECT_LE((fused.value() - expected.value()).abs().maxCoeff(), 1e-12);
}

TEST(Weighted, ConstantShiftOfAllStreamsLeavesOutputUnchanged)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 100; ++trial) {
        auto streams = three_streams(rng, {2, 6}, -5, 5);
        FusionWeights w{Tensor::scalar(u(rng)), Tensor::scalar(u(rng)), Tensor::scalar(u(rng))};
        const double c = u(rng) * 10;
        auto shifted = streams;
        for (auto& [s, t] : shifted) t = affine(t, 1.0, c);
        auto a = combine_weighted(streams, w);
        auto b = combine_weighted(shifted, w);
        EXPECT_LE((a.value() - b.value()).abs().maxCoeff(), 1e-9);
        for (Index r = 0; r < 2; ++r) EXPECT_EQ(argmax_row(a, r), argmax_row(b, r));
    }
}

TEST(Weighted, AbsentStreamsAreOmitted)
{
    std::mt19937_64 rng(6);
    auto streams = three_streams(rng, {1, 4}, -2, 2);
    auto w = FusionWeights::constant(1.0);
    std::vector<StreamAttention> two(streams.begin(), streams.begin() + 2);
    auto fused = combine_weighted(two, w);
    auto expected = softmax(add(streams[0].second, streams[1].second));
    EXPECT_LE((fused.value() - expected.value()).abs().maxCoeff(), 1e-15);
    EXPECT_THROW(combine_weighted(std::span<const StreamAttention>{}, w), ConfigError);
}

TEST(Weighted, ScalarGradientsMatchFiniteDifferences)
{
    std::mt19937_64 rng(7);
    auto streams = three_streams(rng, {2, 5}, -2, 2);
    auto w = FusionWeights::uniform(rng, -1, 1);
    auto probe = random_tensor({2, 5}, rng, -1, 1, false);
    GradCheckOptions opts;
    opts.tolerance = 1e-5;
    auto report = grad_check([&] { return sum(mul(combine_weighted(streams, w), probe)); },
                             {{"w1", w.w1}, {"w2", w.w2}, {"w3", w.w3}}, opts);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(LocalGate, ZeroStreamsGiveUniform)
{
    std::vector<StreamAttention> streams{{Stream::kWord, Tensor::zeros({1, 4})},
                                         {Stream::kPos, Tensor::zeros({1, 4})},
                                         {Stream::kBigram, Tensor::zeros({1, 4})}};
    auto fused = combine_local_gate(streams);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(fused.at(i), 0.25, 1e-15);
}

TEST(LocalGate, SingleStreamExample)
{
    std::vector<StreamAttention> streams{{Stream::kWord, Tensor::from({1, 2}, {2.0, -2.0})}};
    auto fused = combine_local_gate(streams);
    auto expected = softmax(Tensor::from({1, 2}, {1.7616, -0.2384}));
    EXPECT_NEAR(fused.at(0), expected.at(0), 1e-3);
    EXPECT_NEAR(fused.at(1), expected.at(1), 1e-3);
}

TEST(LocalGate, ArgmaxFollowsGatedSum)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        auto streams = three_streams(rng, {1, 6}, -4, 4);
        Array gated = Array::Zero(6);
        for (const auto& [s, t] : streams) gated += t.value() / (1.0 + (-t.value()).exp());
        Index expected = 0;
        gated.maxCoeff(&expected);
        EXPECT_EQ(argmax_row(combine_local_gate(streams), 0), expected);
    }
}

TEST(LocalGate, PerVectorGateUsesRowMean)
{
    std::vector<StreamAttention> streams{{Stream::kWord, Tensor::from({1, 3}, {1.0, 2.0, 3.0})}};
    auto fused = combine_local_gate(streams, GateMode::kPerVector);
    const double g = 1.0 / (1.0 + std::exp(-2.0));
    auto expected = softmax(Tensor::from({1, 3}, {g, 2 * g, 3 * g}));
    EXPECT_LE((fused.value() - expected.value()).abs().maxCoeff(), 1e-15);
}

TEST(GlobalGate, IdenticalStreamsGiveUniform)
{
    std::mt19937_64 rng(9);
    auto a = random_tensor({2, 5}, rng, -3, 3, false);
    std::vector<StreamAttention> streams{{Stream::kWord, a}, {Stream::kPos, a}, {Stream::kBigram, a}};
    auto fused = combine_global_gate(streams);
    for (Index i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused.at(i), 0.2, 1e-15);
}

// Brute force over every placement of three distinct one-hot streams, S in 3..5.
TEST(GlobalGate, DistinctOneHotsOccupyTopThree)
{
    for (Index s = 3; s <= 5; ++s) {
        for (Index p1 = 0; p1 < s; ++p1)
            for (Index p2 = 0; p2 < s; ++p2)
                for (Index p3 = 0; p3 < s; ++p3) {
                    if (p1 == p2 || p1 == p3 || p2 == p3) continue;
                    auto onehot = [&](Index p) {
                        auto t = Tensor::zeros({1, s});
                        t.mutable_value()(p) = 1.0;
                        return t;
                    };
                    std::vector<StreamAttention> streams{
                        {Stream::kWord, onehot(p1)}, {Stream::kPos, onehot(p2)}, {Stream::kBigram, onehot(p3)}};
                    auto fused = combine_global_gate(streams);
                    std::vector<Index> order(static_cast<std::size_t>(s));
                    std::iota(order.begin(), order.end(), Index{0});
                    std::stable_sort(order.begin(), order.end(),
                                     [&](Index a, Index b) { return fused.at(a) > fused.at(b); });
                    std::vector<Index> top(order.begin(), order.begin() + 3);
                    std::sort(top.begin(), top.end());
                    std::vector<Index> expected{p1, p2, p3};
                    std::sort(expected.begin(), expected.end());
                    EXPECT_EQ(top, expected);
                    if (s > 3) EXPECT_GT(fused.at(order[2]), fused.at(order[3]));
                }
    }
}

TEST(GlobalGate, TiesGoToLowestStream)
{
    // The per-position max routes its subgradient to one stream only.
    auto stacked = Tensor::from({3, 2}, {0.5, 0.1, 0.5, 0.7, 0.2, 0.7}, true);
    sum(max_axis(stacked, 0)).backward();
    Array expected(6);
    expected << 1, 0, 0, 1, 0, 0;
    EXPECT_TRUE((stacked.grad() == expected).all());
}

TEST(Fusion, DistributionInvariantForEveryStrategy)
{
    std::mt19937_64 rng(10);
    for (auto strategy : kAll) {
        for (int trial = 0; trial < 1000; ++trial) {
            auto streams = three_streams(rng, {2, 6}, -10, 10);
            if (strategy == FusionStrategy::kPointwise)
                for (auto& [s, t] : streams) t = softmax(t);
            auto w = FusionWeights::uniform(rng, -2, 2);
            expect_distribution(fuse_with(strategy, streams, w));
        }
    }
}

TEST(Fusion, MaskedPositionsGetZeroProbability)
{
    std::mt19937_64 rng(11);
    auto mask = Tensor::from({2, 4}, {1, 1, 1, 0, 1, 1, 0, 0});
    auto w = FusionWeights::constant(1.0);
    for (auto strategy : kAll) {
        auto streams = three_streams(rng, {2, 4}, -3, 3);
        if (strategy == FusionStrategy::kPointwise) streams.resize(2);
        AttentionBundle b;
        b.strategy = strategy;
        b.streams = streams;
        const Tensor& fused = fuse(b, &w, GateMode::kPerElement, &mask);
        EXPECT_EQ(fused.at(0, 3), 0.0);
        EXPECT_EQ(fused.at(1, 2), 0.0);
        EXPECT_EQ(fused.at(1, 3), 0.0);
        expect_distribution(fused, 1e-12);
    }
}

TEST(Fusion, PermutationEquivariance)
{
    std::mt19937_64 rng(12);
    std::vector<Index> perm{3, 0, 4, 1, 2};
    for (auto strategy : kAll) {
        for (int trial = 0; trial < 50; ++trial) {
            auto streams = three_streams(rng, {1, 5}, -4, 4);
            auto permuted = streams;
            for (auto& [s, t] : permuted) {
                Array v(5);
                for (Index i = 0; i < 5; ++i) v(i) = t.at(perm[static_cast<std::size_t>(i)]);
                t = Tensor::from({1, 5}, v);
            }
            auto w = FusionWeights::uniform(rng, -2, 2);
            auto a = fuse_with(strategy, streams, w);
            auto b = fuse_with(strategy, permuted, w);
            for (Index i = 0; i < 5; ++i) EXPECT_NEAR(b.at(i), a.at(perm[static_cast<std::size_t>(i)]), 1e-14);
        }
    }
}

TEST(Fusion, DispatcherChecksStreamCounts)
{
    std::mt19937_64 rng(13);
    AttentionBundle b;
    b.strategy = FusionStrategy::kPointwise;
    b.streams = three_streams(rng, {1, 3}, -1, 1);
    EXPECT_THROW(fuse(b, nullptr), ConfigError);
    b.strategy = FusionStrategy::kScalarWeighted;
    EXPECT_THROW(fuse(b, nullptr), ConfigError);
}

TEST(Fusion, SingleStreamWeightedIsSoftmax)
{
    std::mt19937_64 rng(14);
    AttentionBundle b;
    b.strategy = FusionStrategy::kScalarWeighted;
    b.streams = {{Stream::kWord, random_tensor({2, 4}, rng, -3, 3, false)}};
    auto w = FusionWeights::constant(1.0);
    fuse(b, &w);
    EXPECT_LE((b.fused.value() - softmax(b.streams[0].second).value()).abs().maxCoeff(), 1e-15);
    EXPECT_EQ(parse_fusion(to_string(b.strategy)), b.strategy);
}

TEST(Fusion, EveryStrategyIsDifferentiable)
{
    std::mt19937_64 rng(15);
    for (auto strategy : kAll) {
        auto streams = three_streams(rng, {2, 4}, -2, 2);
        for (auto& [s, t] : streams) t.set_requires_grad(true);
        if (strategy == FusionStrategy::kPointwise) streams.resize(2);
        auto w = FusionWeights::uniform(rng, -1, 1);
        auto probe = random_tensor({2, 4}, rng, -1, 1, false);
        NamedTensors named;
        for (auto& [s, t] : streams) named.emplace_back(std::string(to_string(s)), t);
        if (strategy == FusionStrategy::kScalarWeighted) {
            named.emplace_back("w1", w.w1);
            named.emplace_back("w2", w.w2);
            named.emplace_back("w3", w.w3);
        }
        auto report = grad_check(
            [&] {
                AttentionBundle b;
                b.strategy = strategy;
                b.streams = streams;
                return sum(mul(fuse(b, &w), probe));
            },
            named);
        EXPECT_TRUE(report.passed) << to_string(strategy) << " " << report.max_rel_error;
    }
}
