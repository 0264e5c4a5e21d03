#include "mawsd/model.hpp"

#include "mawsd/errors.hpp"
#include "mawsd/ops.hpp"
#include "mawsd/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mawsd {

namespace {

constexpr std::pair<Architecture, std::string_view> kArchitectureNames[] = {
    {Architecture::kSeq2Seq, "seq2seq"},
    {Architecture::kSeq2SeqConv, "seq2seq+conv"},
    {Architecture::kPosPointwise, "seq2seq+pos-pointwise"},
    {Architecture::kPosWeighted, "seq2seq+pos-weighted"},
    {Architecture::kConvPosWeighted, "seq2seq+conv+pos-weighted"},
};

} // namespace

std::string_view to_string(Architecture a)
{
    for (const auto& [arch, name] : kArchitectureNames)
        if (arch == a) return name;
    return "?";
}

std::string_view to_string(ScorerKind s)
{
    switch (s) {
    case ScorerKind::kDot: return "dot";
    case ScorerKind::kGeneral: return "general";
    case ScorerKind::kConcat: return "concat";
    }
    return "?";
}

std::string_view to_string(FusionInit f)
{
    return f == FusionInit::kOnes ? "ones" : "uniform";
}

Architecture parse_architecture(std::string_view name)
{
    for (const auto& [arch, n] : kArchitectureNames)
        if (n == name) return arch;
    std::string expected;
    for (const auto& [arch, n] : kArchitectureNames) expected += (expected.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown architecture '" + std::string(name) + "' (expected one of " + expected + ")");
}

ScorerKind parse_scorer(std::string_view name)
{
    if (name == "dot") return ScorerKind::kDot;
    if (name == "general" || name == "linear") return ScorerKind::kGeneral;
    if (name == "concat") return ScorerKind::kConcat;
    throw ConfigError("unknown attention scorer '" + std::string(name) + "' (expected dot, general or concat)");
}

FusionInit parse_fusion_init(std::string_view name)
{
    if (name == "ones") return FusionInit::kOnes;
    if (name == "uniform") return FusionInit::kUniform;
    throw ConfigError("unknown fusion_init '" + std::string(name) + "' (expected ones or uniform)");
}

// --- config ------------------------------------------------------------------

std::vector<Stream> ArchitectureConfig::streams() const
{
    switch (architecture) {
    case Architecture::kSeq2Seq: return {Stream::kWord};
    case Architecture::kSeq2SeqConv: return {Stream::kBigram};
    case Architecture::kPosPointwise:
    case Architecture::kPosWeighted: return {Stream::kWord, Stream::kPos};
    case Architecture::kConvPosWeighted: return {Stream::kWord, Stream::kPos, Stream::kBigram};
    }
    return {Stream::kWord};
}

FusionStrategy ArchitectureConfig::effective_fusion() const
{
    return architecture == Architecture::kPosPointwise ? FusionStrategy::kPointwise : fusion;
}

void ArchitectureConfig::validate() const
{
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
    };
    positive(embed_dim, "embed_dim");
    positive(hidden_dim, "hidden_dim");
    positive(encoder_layers, "encoder_layers");
    positive(decoder_layers, "decoder_layers");
    if (concat_dim < 0) throw ConfigError("concat_dim must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout));
    const auto s = streams();
    if (s.size() >= 2 && effective_fusion() == FusionStrategy::kPointwise &&
        s != std::vector<Stream>{Stream::kWord, Stream::kPos})
        throw ConfigError("fusion 'pointwise' requires exactly the word+pos streams, but architecture '" +
                          std::string(to_string(architecture)) + "' has " + std::to_string(s.size()));
}

const std::vector<std::string>& ArchitectureConfig::keys()
{
    static const std::vector<std::string> k{"architecture",   "fusion",         "attention",     "gate_mode",
                                            "embed_dim",      "hidden_dim",     "encoder_layers", "decoder_layers",
                                            "bidirectional",  "dropout",        "concat_dim",    "fusion_init"};
    return k;
}

nlohmann::json ArchitectureConfig::to_json() const
{
    return {
        {"architecture", to_string(architecture)},
        {"fusion", to_string(fusion)},
        {"attention", to_string(attention)},
        {"gate_mode", to_string(gate_mode)},
        {"embed_dim", embed_dim},
        {"hidden_dim", hidden_dim},
        {"encoder_layers", encoder_layers},
        {"decoder_layers", decoder_layers},
        {"bidirectional", bidirectional},
        {"dropout", dropout},
        {"concat_dim", concat_dim},
        {"fusion_init", to_string(fusion_init)},
    };
}

ArchitectureConfig ArchitectureConfig::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object()) throw ConfigError("architecture config must be a JSON object");
    const auto& known = keys();
    for (const auto& [key, value] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown architecture config key '" + key + "'");
    ArchitectureConfig c;
    try {
        if (doc.contains("architecture")) c.architecture = parse_architecture(doc["architecture"].get<std::string>());
        if (doc.contains("fusion")) c.fusion = parse_fusion(doc["fusion"].get<std::string>());
        if (doc.contains("attention")) c.attention = parse_scorer(doc["attention"].get<std::string>());
        if (doc.contains("gate_mode")) c.gate_mode = parse_gate_mode(doc["gate_mode"].get<std::string>());
        if (doc.contains("embed_dim")) c.embed_dim = doc["embed_dim"].get<int>();
        if (doc.contains("hidden_dim")) c.hidden_dim = doc["hidden_dim"].get<int>();
        if (doc.contains("encoder_layers")) c.encoder_layers = doc["encoder_layers"].get<int>();
        if (doc.contains("decoder_layers")) c.decoder_layers = doc["decoder_layers"].get<int>();
        if (doc.contains("bidirectional")) c.bidirectional = doc["bidirectional"].get<bool>();
        if (doc.contains("dropout")) c.dropout = doc["dropout"].get<double>();
        if (doc.contains("concat_dim")) c.concat_dim = doc["concat_dim"].get<int>();
        if (doc.contains("fusion_init")) c.fusion_init = parse_fusion_init(doc["fusion_init"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("architecture config: ") + e.what());
    }
    c.validate();
    return c;
}

// --- parameters ----------------------------------------------------------------

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-bound, bound);
    Array a(shape_size(shape));
    for (Index i = 0; i < a.size(); ++i) a(i) = u(rng);
    return Tensor::from(std::move(shape), std::move(a), true);
}

Tensor normal_tensor(Shape shape, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Array a(shape_size(shape));
    for (Index i = 0; i < a.size(); ++i) a(i) = n(rng);
    return Tensor::from(std::move(shape), std::move(a), true);
}

GruLayer make_layer(int in, int hidden, std::mt19937_64& rng)
{
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
    const Index i = in;
    const Index h = hidden;
    GruLayer l;
    l.W_z = uniform_tensor({i, h}, k, rng);
    l.U_z = uniform_tensor({h, h}, k, rng);
    l.b_z = uniform_tensor({h}, k, rng);
    l.W_r = uniform_tensor({i, h}, k, rng);
    l.U_r = uniform_tensor({h, h}, k, rng);
    l.b_r = uniform_tensor({h}, k, rng);
    l.W_n = uniform_tensor({i, h}, k, rng);
    l.U_n = uniform_tensor({h, h}, k, rng);
    l.b_n = uniform_tensor({h}, k, rng);
    return l;
}

GruCell make_cell(int in, int hidden, int layers, bool bidirectional, std::mt19937_64& rng)
{
    GruCell c;
    for (int l = 0; l < layers; ++l) {
        const int layer_in = l == 0 ? in : hidden;
        c.forward.push_back(make_layer(layer_in, hidden, rng));
        if (bidirectional) c.backward.push_back(make_layer(layer_in, hidden, rng));
    }
    return c;
}

void append_layer(NamedTensors& out, const std::string& prefix, const GruLayer& l)
{
    out.emplace_back(prefix + ".W_z", l.W_z);
    out.emplace_back(prefix + ".U_z", l.U_z);
    out.emplace_back(prefix + ".b_z", l.b_z);
    out.emplace_back(prefix + ".W_r", l.W_r);
    out.emplace_back(prefix + ".U_r", l.U_r);
    out.emplace_back(prefix + ".b_r", l.b_r);
    out.emplace_back(prefix + ".W_n", l.W_n);
    out.emplace_back(prefix + ".U_n", l.U_n);
    out.emplace_back(prefix + ".b_n", l.b_n);
}

void append_cell(NamedTensors& out, const std::string& prefix, const GruCell& c)
{
    for (int l = 0; l < c.layers(); ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        append_layer(out, base + ".fwd", c.forward[static_cast<std::size_t>(l)]);
        if (c.bidirectional()) append_layer(out, base + ".bwd", c.backward[static_cast<std::size_t>(l)]);
    }
}

bool has_stream(const std::vector<Stream>& streams, Stream s)
{
    return std::find(streams.begin(), streams.end(), s) != streams.end();
}

bool uses_fusion_weights(const ArchitectureConfig& c)
{
    return c.streams().size() >= 2 && c.effective_fusion() == FusionStrategy::kScalarWeighted;
}

} // namespace

Tensor Dropout::operator()(const Tensor& x) const
{
    if (!rng || rate <= 0.0) return x;
    return dropout(x, rate, *rng);
}

Model Model::create(const ArchitectureConfig& config, const VocabSizes& sizes, std::uint64_t seed)
{
    config.validate();
    if (sizes.words < 4 || sizes.pos < 4 || sizes.output < sizes.words)
        throw ConfigError("vocabulary sizes must include the four specials and output >= words");
    std::mt19937_64 rng(seed);
    const Index E = config.embed_dim;
    const Index H = config.hidden_dim;
    const auto streams = config.streams();

    Model m;
    m.config = config;
    m.sizes = sizes;
    m.word_embed = normal_tensor({sizes.words, E}, rng);
    if (has_stream(streams, Stream::kPos)) m.pos_embed = normal_tensor({sizes.pos, E}, rng);
    if (has_stream(streams, Stream::kBigram)) m.bigram_kernel = uniform_tensor({2, E}, 1.0 / std::sqrt(2.0), rng);
    m.encoder = make_cell(config.embed_dim, config.hidden_dim, config.encoder_layers, config.bidirectional, rng);

    m.output_embed = normal_tensor({sizes.output, E}, rng);
    m.decoder = make_cell(config.embed_dim, config.hidden_dim, config.decoder_layers, false, rng);
    for (Stream s : streams) {
        AttentionScorer sc;
        sc.kind = config.attention;
        if (sc.kind == ScorerKind::kGeneral) {
            sc.W = uniform_tensor({H, H}, 1.0 / std::sqrt(static_cast<double>(H)), rng);
        } else if (sc.kind == ScorerKind::kConcat) {
            const Index hc = config.concat_dim > 0 ? config.concat_dim : H;
            sc.W = uniform_tensor({2 * H, hc}, 1.0 / std::sqrt(2.0 * static_cast<double>(H)), rng);
            sc.v = uniform_tensor({hc}, 1.0 / std::sqrt(static_cast<double>(hc)), rng);
        }
        m.scorers.emplace_back(s, std::move(sc));
    }
    m.fusion = config.fusion_init == FusionInit::kOnes ? FusionWeights::constant(1.0)
                                                       : FusionWeights::uniform(rng, -0.1, 0.1);
    m.head.W = uniform_tensor({2 * H, sizes.output}, 1.0 / std::sqrt(2.0 * static_cast<double>(H)), rng);
    m.head.b = Tensor::zeros({sizes.output}, true);
    return m;
}

NamedTensors Model::parameters() const
{
    NamedTensors out;
    out.emplace_back("encoder.embed.word", word_embed);
    if (pos_embed.defined()) out.emplace_back("encoder.embed.pos", pos_embed);
    if (bigram_kernel.defined()) out.emplace_back("encoder.bigram.kernel", bigram_kernel);
    append_cell(out, "encoder.gru", encoder);
    out.emplace_back("decoder.embed.output", output_embed);
    append_cell(out, "decoder.gru", decoder);
    for (const auto& [s, sc] : scorers) {
        const std::string base = "decoder.attn." + std::string(to_string(s));
        if (sc.W.defined()) out.emplace_back(base + ".W", sc.W);
        if (sc.v.defined()) out.emplace_back(base + ".v", sc.v);
    }
    if (uses_fusion_weights(config)) {
        const auto streams = config.streams();
        if (has_stream(streams, Stream::kWord)) out.emplace_back("decoder.fusion.w1", fusion.w1);
        if (has_stream(streams, Stream::kPos)) out.emplace_back("decoder.fusion.w2", fusion.w2);
        if (has_stream(streams, Stream::kBigram)) out.emplace_back("decoder.fusion.w3", fusion.w3);
    }
    out.emplace_back("decoder.head.W", head.W);
    out.emplace_back("decoder.head.b", head.b);
    return out;
}

void Model::load_parameters(const NamedTensors& params)
{
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : params) by_name[name] = &t;
    const NamedTensors mine = parameters();
    for (const auto& [name, t] : mine) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("parameter '" + name + "' missing from checkpoint");
        if (it->second->shape() != t.shape())
            throw DataError("parameter '" + name + "' has shape " + shape_string(it->second->shape()) +
                            ", model expects " + shape_string(t.shape()));
        Tensor target = t;
        target.mutable_value() = it->second->value();
        by_name.erase(it);
    }
    if (!by_name.empty()) throw DataError("checkpoint has unexpected parameter '" + by_name.begin()->first + "'");
}

const AttentionScorer& Model::scorer(Stream s) const
{
    for (const auto& [stream, sc] : scorers)
        if (stream == s) return sc;
    throw ConfigError("no attention scorer for stream '" + std::string(to_string(s)) + "'");
}

bool is_decoder_param(const std::string& name)
{
    return name.rfind("decoder.", 0) == 0;
}

// --- building blocks -------------------------------------------------------------

Tensor embed_sequence(const IndexGrid& tokens, const Tensor& table)
{
    return embedding(table, tokens);
}

IndexGrid prepend_start(const IndexGrid& tokens)
{
    IndexGrid out(tokens.rows(), tokens.cols() + 1);
    out.col(0).setConstant(Vocab::kStart);
    out.rightCols(tokens.cols()) = tokens;
    return out;
}

Tensor convolve_bigrams(const Tensor& padded, const Tensor& kernel)
{
    if (padded.rank() != 3) throw DimensionError("convolve_bigrams: input must be [B x S+1 x E], got " +
                                                 shape_string(padded.shape()));
    if (padded.dim(1) < 2)
        throw DimensionError("convolve_bigrams: sequence length " + std::to_string(padded.dim(1)) +
                             " is shorter than the kernel width 2");
    if (kernel.shape() != Shape{2, padded.dim(2)})
        throw DimensionError("convolve_bigrams: kernel " + shape_string(kernel.shape()) + " does not match [2x" +
                             std::to_string(padded.dim(2)) + "]");
    const Index s = padded.dim(1) - 1;
    Tensor left = mul(slice(padded, 1, 0, s), select(kernel, 0, 0));
    Tensor right = mul(slice(padded, 1, 1, s + 1), select(kernel, 0, 1));
    return add(left, right);
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruLayer& layer)
{
    if (x.rank() != 2 || x.dim(1) != layer.input_dim())
        throw DimensionError("gru_step: input " + shape_string(x.shape()) + " does not match input dim " +
                             std::to_string(layer.input_dim()));
    if (h.rank() != 2 || h.dim(1) != layer.hidden_dim() || h.dim(0) != x.dim(0))
        throw DimensionError("gru_step: hidden " + shape_string(h.shape()) + " does not match [" +
                             std::to_string(x.dim(0)) + "x" + std::to_string(layer.hidden_dim()) + "]");
    Tensor z = sigmoid(matmul(x, layer.W_z) + matmul(h, layer.U_z) + layer.b_z);
    Tensor r = sigmoid(matmul(x, layer.W_r) + matmul(h, layer.U_r) + layer.b_r);
    Tensor n = tanh(matmul(x, layer.W_n) + matmul(r * h, layer.U_n) + layer.b_n);
    return one_minus(z) * n + z * h;
}

namespace {

// Runs one direction of one layer; pad steps keep the previous state.
std::vector<Tensor> run_direction(const std::vector<Tensor>& inputs, const std::vector<Tensor>& masks,
                                  const GruLayer& layer, bool reverse, Tensor& final)
{
    const Index b = inputs.front().dim(0);
    const std::size_t s = inputs.size();
    std::vector<Tensor> outputs(s);
    Tensor h = Tensor::zeros({b, layer.hidden_dim()});
    for (std::size_t k = 0; k < s; ++k) {
        const std::size_t t = reverse ? s - 1 - k : k;
        Tensor next = gru_step(inputs[t], h, layer);
        h = h + masks[t] * (next - h);
        outputs[t] = h;
    }
    final = h;
    return outputs;
}

} // namespace

EncodedStream encode_stream(const Tensor& x, const GruCell& cell, const Tensor& mask, const Dropout& dropout)
{
    if (x.rank() != 3 || x.dim(2) != cell.input_dim())
        throw DimensionError("encode_stream: input " + shape_string(x.shape()) + " does not match input dim " +
                             std::to_string(cell.input_dim()));
    const Index b = x.dim(0);
    const Index s = x.dim(1);
    if (mask.shape() != Shape{b, s})
        throw DimensionError("encode_stream: mask " + shape_string(mask.shape()) + " does not match " +
                             shape_string({b, s}));

    std::vector<Tensor> masks;
    std::vector<Tensor> inputs;
    for (Index t = 0; t < s; ++t) {
        masks.push_back(reshape(select(mask, 1, t), {b, 1}));
        inputs.push_back(select(x, 1, t));
    }

    EncodedStream out;
    for (int l = 0; l < cell.layers(); ++l) {
        Tensor final_f;
        auto outputs = run_direction(inputs, masks, cell.forward[static_cast<std::size_t>(l)], false, final_f);
        Tensor final = final_f;
        if (cell.bidirectional()) {
            Tensor final_b;
            auto back = run_direction(inputs, masks, cell.backward[static_cast<std::size_t>(l)], true, final_b);
            for (std::size_t t = 0; t < outputs.size(); ++t) outputs[t] = outputs[t] + back[t];
            final = final + final_b;
        }
        Tensor layer_out = dropout(stack(outputs, 1));
        out.outputs = layer_out;
        out.final = final;
        if (l + 1 < cell.layers())
            for (Index t = 0; t < s; ++t) inputs[static_cast<std::size_t>(t)] = select(layer_out, 1, t);
    }
    return out;
}

Tensor score_attention(const Tensor& outputs, const Tensor& query, const AttentionScorer& scorer)
{
    if (outputs.rank() != 3 || query.rank() != 2 || query.dim(0) != outputs.dim(0) ||
        query.dim(1) != outputs.dim(2))
        throw DimensionError("score_attention: outputs " + shape_string(outputs.shape()) + " and query " +
                             shape_string(query.shape()) + " are incompatible");
    const Index b = outputs.dim(0);
    const Index s = outputs.dim(1);
    const Index h = outputs.dim(2);
    auto dot_scores = [&](const Tensor& q) { return reshape(bmm(outputs, reshape(q, {b, h, 1})), {b, s}); };
    switch (scorer.kind) {
    case ScorerKind::kDot: return dot_scores(query);
    case ScorerKind::kGeneral: return dot_scores(matmul(query, scorer.W));
    case ScorerKind::kConcat: {
        const Index hc = scorer.W.dim(1);
        Tensor from_query = reshape(matmul(query, slice(scorer.W, 0, 0, h)), {b, 1, hc});
        Tensor from_outputs = reshape(matmul(reshape(outputs, {b * s, h}), slice(scorer.W, 0, h, 2 * h)), {b, s, hc});
        Tensor energy = tanh(from_outputs + from_query);
        return reshape(matmul(reshape(energy, {b * s, hc}), reshape(scorer.v, {hc, 1})), {b, s});
    }
    }
    throw ConfigError("score_attention: unknown scorer variant");
}

std::vector<Tensor> decode_step(const Tensor& input, std::span<const Tensor> state, const GruCell& cell,
                                const Dropout& dropout)
{
    if (static_cast<int>(state.size()) != cell.layers())
        throw DimensionError("decode_step: " + std::to_string(state.size()) + " states for " +
                             std::to_string(cell.layers()) + " layers");
    std::vector<Tensor> next;
    Tensor x = input;
    for (int l = 0; l < cell.layers(); ++l) {
        next.push_back(gru_step(x, state[static_cast<std::size_t>(l)], cell.forward[static_cast<std::size_t>(l)]));
        x = dropout(next.back());
    }
    return next;
}

Tensor attend(const Tensor& attention, const Tensor& outputs)
{
    const Index b = outputs.dim(0);
    const Index s = outputs.dim(1);
    if (attention.shape() != Shape{b, s})
        throw DimensionError("attend: attention " + shape_string(attention.shape()) + " does not match outputs " +
                             shape_string(outputs.shape()));
    return reshape(bmm(reshape(attention, {b, 1, s}), outputs), {b, outputs.dim(2)});
}

Tensor project_output(const Tensor& query, const Tensor& context, const DecoderHead& head)
{
    if (query.shape() != context.shape())
        throw DimensionError("project_output: hidden " + shape_string(query.shape()) + " and context " +
                             shape_string(context.shape()) + " differ");
    if (head.W.dim(0) != 2 * query.dim(1))
        throw DimensionError("project_output: head expects input width " + std::to_string(head.W.dim(0)) + ", got " +
                             std::to_string(2 * query.dim(1)));
    const Tensor parts[] = {query, context};
    return log_softmax(matmul(concat(parts, 1), head.W) + head.b, -1);
}

// --- end to end ----------------------------------------------------------------

ForwardResult forward(const Model& model, const Batch& batch, const ForwardOptions& options)
{
    const ArchitectureConfig& cfg = model.config;
    const Index b = batch.size();
    const Index s = batch.max_length();
    const Dropout drop{cfg.dropout, options.rng};
    const Tensor& mask = batch.source_mask;
    const auto streams = cfg.streams();

    std::vector<std::pair<Stream, EncodedStream>> encoded;
    for (Stream st : streams) {
        Tensor x;
        switch (st) {
        case Stream::kWord: x = drop(embed_sequence(batch.source, model.word_embed)); break;
        case Stream::kPos: x = drop(embed_sequence(batch.pos, model.pos_embed)); break;
        case Stream::kBigram:
            x = convolve_bigrams(drop(embed_sequence(prepend_start(batch.source), model.word_embed)),
                                 model.bigram_kernel);
            break;
        }
        encoded.emplace_back(st, encode_stream(x, model.encoder, mask, drop));
    }
    // The first stream (word, or bigram on its own) seeds the decoder and supplies the context.
    const EncodedStream& primary = encoded.front().second;

    std::vector<Tensor> state(static_cast<std::size_t>(cfg.decoder_layers), primary.final);
    const Index max_steps = s + 1;
    const FusionStrategy strategy = cfg.effective_fusion();

    ForwardResult result;
    result.predictions = IndexGrid::Constant(b, max_steps, Vocab::kPad);
    std::vector<Tensor> step_log_probs;
    std::vector<int> inputs(static_cast<std::size_t>(b), Vocab::kStart);
    std::vector<bool> finished(static_cast<std::size_t>(b), false);

    for (Index t = 0; t < max_steps; ++t) {
        if (t > 0) {
            for (Index r = 0; r < b; ++r)
                inputs[static_cast<std::size_t>(r)] = options.mode == DecodeMode::kTeacherForced
                                                          ? batch.target(r, t - 1)
                                                          : result.predictions(r, t - 1);
        }
        Tensor emb = drop(embedding(model.output_embed, std::span<const int>(inputs)));
        state = decode_step(emb, state, model.decoder, drop);
        const Tensor& query = state.back();

        AttentionBundle bundle;
        bundle.step = static_cast<int>(t);
        bundle.strategy = strategy;
        for (const auto& [st, enc] : encoded) {
            Tensor raw = score_attention(enc.outputs, query, model.scorer(st));
            if (strategy == FusionStrategy::kPointwise) raw = masked_softmax(raw, mask, -1);
            bundle.streams.emplace_back(st, raw);
        }
        if (bundle.streams.size() == 1)
            bundle.fused = masked_softmax(bundle.streams.front().second, mask, -1);
        else
            fuse(bundle, &model.fusion, cfg.gate_mode, &mask);

        Tensor log_probs = project_output(query, attend(bundle.fused, primary.outputs), model.head);
        const RowMatrix lp = log_probs.matrix();
        for (Index r = 0; r < b; ++r) {
            Index best = 0;
            lp.row(r).maxCoeff(&best);
            result.predictions(r, t) = static_cast<int>(best);
            if (best == Vocab::kEos) finished[static_cast<std::size_t>(r)] = true;
        }
        step_log_probs.push_back(log_probs);
        if (options.record_attention) result.attention.push_back(std::move(bundle));
        if (options.mode == DecodeMode::kGreedy &&
            std::all_of(finished.begin(), finished.end(), [](bool f) { return f; }))
            break;
    }
    result.steps = static_cast<int>(step_log_probs.size());
    result.predictions.conservativeResize(b, result.steps);
    result.log_probs = stack(step_log_probs, 1);
    return result;
}

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const Vocabulary& vocab,
                     const nlohmann::json& meta)
{
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "config.json", model.config.to_json().dump(2) + "\n");
    write_file_atomic(dir / "vocab_words.json", vocab.words.to_json().dump() + "\n");
    write_file_atomic(dir / "vocab_pos.json", vocab.pos.to_json().dump() + "\n");
    write_file_atomic(dir / "vocab_output.json", vocab.output.to_json().dump() + "\n");
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
    save_params(dir / "params.json", model.parameters());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory '" + dir.string() + "' not found");
    Checkpoint c;
    ArchitectureConfig config = ArchitectureConfig::from_json(read_json(dir / "config.json"));
    c.vocab.words = Vocab::from_json(read_json(dir / "vocab_words.json"));
    c.vocab.pos = Vocab::from_json(read_json(dir / "vocab_pos.json"));
    c.vocab.output = Vocab::from_json(read_json(dir / "vocab_output.json"));
    if (std::filesystem::exists(dir / "meta.json")) c.meta = read_json(dir / "meta.json");
    c.model = Model::create(config, {c.vocab.words.size(), c.vocab.pos.size(), c.vocab.output.size()}, 0);
    c.model.load_parameters(load_params(dir / "params.json"));
    if (!uses_fusion_weights(config)) {
        // Inactive fusion weights are not stored; keep a deterministic value.
        c.model.fusion = FusionWeights::constant(1.0);
    }
    return c;
}

} // namespace mawsd
