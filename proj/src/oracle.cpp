#include "mawsd/oracle.hpp"

#include "mawsd/attention.hpp"
#include "mawsd/ops.hpp"
#include "mawsd/training.hpp"

#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

namespace mawsd {

MicroSetup micro_setup()
{
    std::istringstream in("the\tthe\tother\nbank\tbank\tnn\tfinance\nlends\tlend\tvb\nmoney\tmoney\tnn\n\n"
                          "river\triver\tnn\nbank\tbank\tnn\triver\nfloods\tflood\tvb\n");
    MicroSetup m;
    m.corpus = parse_corpus(in, "<micro>");
    m.vocab = build_vocab(m.corpus);
    m.batch = make_batch(m.corpus, make_instances(m.corpus), m.vocab);
    return m;
}

ArchitectureConfig micro_config(Architecture arch)
{
    ArchitectureConfig c;
    c.architecture = arch;
    c.embed_dim = 4;
    c.hidden_dim = 5;
    c.dropout = 0.0;
    return c;
}

VocabSizes sizes_of(const Vocabulary& vocab)
{
    return {vocab.words.size(), vocab.pos.size(), vocab.output.size()};
}

namespace {

using Inputs = std::vector<Tensor>;
using Op = std::function<Tensor(const Inputs&)>;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi, bool requires_grad)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Array a(shape_size(shape));
    for (Index i = 0; i < a.size(); ++i) a(i) = u(rng);
    return Tensor::from(std::move(shape), std::move(a), requires_grad);
}

// Reduces the op output with fixed random weights, so no symmetric
// cancellation hides a wrong rule, and checks every input.
GradReport check_op(const Op& op, const Inputs& inputs, std::mt19937_64& rng)
{
    Tensor probe = random_tensor(op(inputs).shape(), rng, -1.0, 1.0, false);
    NamedTensors named;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].requires_grad()) named.emplace_back("in" + std::to_string(i), inputs[i]);
    return grad_check([&] { return sum(mul(op(inputs), probe)); }, named);
}

GruLayer layer_from(const Inputs& in, std::size_t first)
{
    return {in[first], in[first + 1], in[first + 2], in[first + 3], in[first + 4],
            in[first + 5], in[first + 6], in[first + 7], in[first + 8]};
}

std::vector<StreamAttention> streams_from(const Inputs& in, std::size_t count)
{
    static constexpr Stream kOrder[3] = {Stream::kWord, Stream::kPos, Stream::kBigram};
    std::vector<StreamAttention> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(kOrder[i], in[i]);
    return out;
}

} // namespace

std::vector<NamedGradReport> op_gradient_suite(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto r = [&](Shape s) { return random_tensor(std::move(s), rng, -2.0, 2.0, true); };
    const Tensor mask = Tensor::from({2, 4}, {1, 1, 0, 1, 1, 0, 0, 1});
    const Tensor mask3 = Tensor::from({2, 3}, {1, 1, 1, 1, 1, 0});
    IndexGrid idx(2, 3);
    idx << 0, 4, 4, 2, 1, 0;
    IndexGrid pick(2, 3);
    pick << 1, 0, 3, 2, 2, 1;

    auto gru = [&](int in, int h) {
        Inputs v{r({2, in}), r({2, h})};
        for (int g = 0; g < 3; ++g) {
            v.push_back(r({in, h}));
            v.push_back(r({h, h}));
            v.push_back(r({h}));
        }
        return v;
    };

    struct Case {
        const char* name;
        Op op;
        Inputs inputs;
    };
    std::vector<Case> cases = {
        {"add", [](auto& in) { return add(in[0], in[1]); }, {r({2, 3}), r({2, 3})}},
        {"add_broadcast", [](auto& in) { return add(in[0], in[1]); }, {r({2, 3, 4}), r({1, 4})}},
        {"sub_broadcast", [](auto& in) { return sub(in[0], in[1]); }, {r({3}), r({2, 3})}},
        {"mul", [](auto& in) { return mul(in[0], in[1]); }, {r({2, 3}), r({2, 3})}},
        {"mul_scalar", [](auto& in) { return mul(in[0], in[1]); }, {r({1}), r({2, 5})}},
        {"affine", [](auto& in) { return affine(in[0], -1.5, 0.3); }, {r({4})}},
        {"sigmoid", [](auto& in) { return sigmoid(in[0]); }, {r({2, 3})}},
        {"tanh", [](auto& in) { return mawsd::tanh(in[0]); }, {r({2, 3})}},
        {"exp", [](auto& in) { return mawsd::exp(in[0]); }, {r({5})}},
        {"log", [](auto& in) { return mawsd::log(mawsd::exp(in[0])); }, {r({5})}},
        {"matmul", [](auto& in) { return matmul(in[0], in[1]); }, {r({3, 4}), r({4, 2})}},
        {"bmm", [](auto& in) { return bmm(in[0], in[1]); }, {r({2, 3, 4}), r({2, 4, 5})}},
        {"transpose", [](auto& in) { return transpose(in[0]); }, {r({3, 2})}},
        {"softmax", [](auto& in) { return softmax(in[0], 1); }, {r({2, 5})}},
        {"softmax_axis1_of3", [](auto& in) { return softmax(in[0], 1); }, {r({2, 3, 4})}},
        {"masked_softmax", [&](auto& in) { return masked_softmax(in[0], mask); }, {r({2, 4})}},
        {"log_softmax", [](auto& in) { return log_softmax(in[0]); }, {r({3, 4})}},
        {"sum_axis", [](auto& in) { return sum_axis(in[0], 1); }, {r({2, 3, 4})}},
        {"max_axis", [](auto& in) { return max_axis(in[0], 0); }, {r({3, 5})}},
        {"concat", [](auto& in) { return concat(in, 1); }, {r({2, 2, 3}), r({2, 1, 3})}},
        {"stack", [](auto& in) { return stack(in, 1); }, {r({2, 3}), r({2, 3})}},
        {"slice", [](auto& in) { return slice(in[0], 1, 1, 3); }, {r({2, 4, 2})}},
        {"select", [](auto& in) { return select(in[0], 1, 2); }, {r({2, 4, 2})}},
        {"reshape", [](auto& in) { return reshape(in[0], {3, 4}); }, {r({2, 6})}},
        {"embedding", [&](auto& in) { return embedding(in[0], idx); }, {r({5, 3})}},
        {"gather_last", [&](auto& in) { return gather_last(in[0], pick); }, {r({2, 3, 4})}},
        // A fresh generator per call keeps the dropout mask fixed across perturbations.
        {"dropout",
         [](auto& in) {
             std::mt19937_64 g(5);
             return dropout(in[0], 0.3, g);
         },
         {r({3, 4})}},
        {"convolve_bigrams", [](auto& in) { return convolve_bigrams(in[0], in[1]); }, {r({2, 4, 3}), r({2, 3})}},
        {"gru_step", [](auto& in) { return gru_step(in[0], in[1], layer_from(in, 2)); }, gru(3, 4)},
        {"score_dot",
         [](auto& in) { return score_attention(in[0], in[1], {ScorerKind::kDot, {}, {}}); },
         {r({2, 3, 4}), r({2, 4})}},
        {"score_general",
         [](auto& in) { return score_attention(in[0], in[1], {ScorerKind::kGeneral, in[2], {}}); },
         {r({2, 3, 4}), r({2, 4}), r({4, 4})}},
        {"score_concat",
         [](auto& in) { return score_attention(in[0], in[1], {ScorerKind::kConcat, in[2], in[3]}); },
         {r({2, 3, 4}), r({2, 4}), r({8, 3}), r({3})}},
        {"attend", [](auto& in) { return attend(in[0], in[1]); }, {r({2, 3}), r({2, 3, 4})}},
        {"project_output",
         [](auto& in) { return project_output(in[0], in[1], {in[2], in[3]}); },
         {r({2, 4}), r({2, 4}), r({8, 5}), r({5})}},
        {"combine_pointwise", [&](auto& in) { return combine_pointwise(in[0], in[1], &mask3); },
         {r({2, 3}), r({2, 3})}},
        {"combine_weighted",
         [&](auto& in) {
             FusionWeights w{in[3], in[4], in[5]};
             return combine_weighted(streams_from(in, 3), w, &mask3);
         },
         {r({2, 3}), r({2, 3}), r({2, 3}), r({1}), r({1}), r({1})}},
        {"combine_local_gate",
         [&](auto& in) { return combine_local_gate(streams_from(in, 3), GateMode::kPerElement, &mask3); },
         {r({2, 3}), r({2, 3}), r({2, 3})}},
        {"combine_local_gate_vector",
         [&](auto& in) { return combine_local_gate(streams_from(in, 2), GateMode::kPerVector, &mask3); },
         {r({2, 3}), r({2, 3})}},
        {"combine_global_gate", [&](auto& in) { return combine_global_gate(streams_from(in, 3), &mask3); },
         {r({2, 3}), r({2, 3}), r({2, 3})}},
    };

    std::vector<NamedGradReport> out;
    for (auto& c : cases) out.push_back({c.name, check_op(c.op, c.inputs, rng)});
    return out;
}

std::vector<NamedGradReport> architecture_gradient_suite(std::uint64_t seed)
{
    const MicroSetup m = micro_setup();
    std::vector<NamedGradReport> out;
    for (Architecture arch : kAllArchitectures) {
        Model model = Model::create(micro_config(arch), sizes_of(m.vocab), seed);
        auto loss = [&] { return compute_loss(forward(model, m.batch).log_probs, m.batch.target, m.batch.target_mask); };
        out.push_back({std::string(to_string(arch)), grad_check(loss, model.parameters())});
    }
    return out;
}

std::string format_grad_table(const std::vector<NamedGradReport>& rows)
{
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %6s %7s %12s  %s\n", "check", "params", "coords", "max_rel_err", "result");
    os << line;
    for (const auto& [name, rep] : rows) {
        Index coords = 0;
        for (const auto& p : rep.params) coords += p.coords_checked;
        std::snprintf(line, sizeof line, "%-28s %6zu %7ld %12.3e  %s\n", name.c_str(), rep.params.size(),
                      static_cast<long>(coords), rep.max_rel_error, rep.passed ? "ok" : "FAIL");
        os << line;
    }
    return os.str();
}

} // namespace mawsd
