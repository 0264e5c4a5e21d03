#include "mawsd/data.hpp"

#include "mawsd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace mawsd {

std::string_view to_string(PosClass p)
{
    switch (p) {
    case PosClass::kNoun: return "nn";
    case PosClass::kVerb: return "vb";
    case PosClass::kAdj: return "adj";
    case PosClass::kAdv: return "adv";
    case PosClass::kOther: return "other";
    }
    return "other";
}

bool parse_pos(std::string_view tag, PosClass& out)
{
    static const std::map<std::string_view, PosClass> exact = {
        {"nn", PosClass::kNoun},   {"vb", PosClass::kVerb},    {"adj", PosClass::kAdj},  {"adv", PosClass::kAdv},
        {"other", PosClass::kOther}, {"n", PosClass::kNoun},   {"v", PosClass::kVerb},   {"a", PosClass::kAdj},
        {"r", PosClass::kAdv},     {"NOUN", PosClass::kNoun},  {"VERB", PosClass::kVerb}, {"ADJ", PosClass::kAdj},
        {"ADV", PosClass::kAdv},
    };
    if (auto it = exact.find(tag); it != exact.end()) {
        out = it->second;
        return true;
    }
    auto starts = [&](std::string_view p) { return tag.substr(0, p.size()) == p; };
    if (starts("NN")) out = PosClass::kNoun;
    else if (starts("VB")) out = PosClass::kVerb;
    else if (starts("JJ")) out = PosClass::kAdj;
    else if (starts("RB")) out = PosClass::kAdv;
    else return false;
    return true;
}

std::size_t SenseCorpus::tagged_count() const
{
    std::size_t n = 0;
    for (const auto& s : sentences)
        for (const auto& t : s.tokens) n += t.tagged() ? 1 : 0;
    return n;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_content(PosClass p) { return p != PosClass::kOther; }

} // namespace

SenseCorpus parse_corpus(std::istream& in, const std::string& source)
{
    SenseCorpus corpus;
    Sentence current;
    std::string doc;
    auto flush = [&] {
        if (current.tokens.empty()) return;
        current.id = static_cast<int>(corpus.sentences.size());
        current.doc = doc;
        corpus.sentences.push_back(std::move(current));
        current = Sentence{};
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            flush();
            continue;
        }
        if (stripped[0] == '#') {
            const std::string body = trim(stripped.substr(1));
            if (body.rfind("doc:", 0) == 0) {
                flush();
                doc = trim(body.substr(4));
            }
            continue;
        }
        auto cols = split_tabs(line);
        while (!cols.empty() && trim(cols.back()).empty()) cols.pop_back();
        const std::string where = source + ": line " + std::to_string(lineno);
        if (cols.size() < 3)
            throw DataError(where + ": expected surface, lemma and pos columns, found " +
                            std::to_string(cols.size()));
        if (cols.size() > 4) throw DataError(where + ": too many columns (" + std::to_string(cols.size()) + ")");
        Token tok;
        tok.surface = trim(cols[0]);
        tok.lemma = trim(cols[1]);
        if (tok.surface.empty() || tok.lemma.empty()) throw DataError(where + ": empty surface or lemma");
        const std::string tag = trim(cols[2]);
        if (!parse_pos(tag, tok.pos)) {
            corpus.warnings.push_back("line " + std::to_string(lineno) + ": unknown POS tag '" + tag +
                                      "' mapped to other");
            tok.pos = PosClass::kOther;
        }
        if (cols.size() == 4) tok.sense = trim(cols[3]);
        if (tok.tagged() && !is_content(tok.pos))
            throw DataError(where + ": sense key '" + tok.sense + "' on non-content token '" + tok.surface + "'");
        current.tokens.push_back(std::move(tok));
    }
    flush();
    return corpus;
}

SenseCorpus parse_corpus_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus " + path.string());
    return parse_corpus(in, path.string());
}

std::string serialize_corpus(const SenseCorpus& corpus)
{
    std::ostringstream os;
    std::string doc;
    for (const auto& s : corpus.sentences) {
        if (s.doc != doc) {
            os << "# doc: " << s.doc << '\n';
            doc = s.doc;
        }
        for (const auto& t : s.tokens) {
            os << t.surface << '\t' << t.lemma << '\t' << to_string(t.pos);
            if (t.tagged()) os << '\t' << t.sense;
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

SenseCorpus select_sentences(const SenseCorpus& corpus, std::span<const int> ids)
{
    SenseCorpus out;
    out.sentences.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= static_cast<int>(corpus.sentences.size()))
            throw UsageError("sentence id " + std::to_string(id) + " out of range");
        out.sentences.push_back(corpus.sentences[static_cast<std::size_t>(id)]);
    }
    return out;
}

// --- vocabulary -------------------------------------------------------------

Vocab::Vocab()
{
    for (auto s : kSpecials) add(std::string(s));
}

int Vocab::add(const std::string& token)
{
    if (auto it = lookup_.find(token); it != lookup_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    lookup_.emplace(token, id);
    return id;
}

int Vocab::index(const std::string& token) const
{
    auto it = lookup_.find(token);
    return it == lookup_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int index) const
{
    if (index < 0 || index >= size())
        throw VocabularyError("index " + std::to_string(index) + " outside vocabulary of size " +
                              std::to_string(size()));
    return tokens_[static_cast<std::size_t>(index)];
}

nlohmann::json Vocab::to_json() const { return tokens_; }

Vocab Vocab::from_json(const nlohmann::json& doc)
{
    if (!doc.is_array()) throw DataError("vocabulary must be a JSON array");
    auto tokens = doc.get<std::vector<std::string>>();
    if (tokens.size() < 4) throw DataError("vocabulary lacks the special tokens");
    for (std::size_t i = 0; i < 4; ++i)
        if (tokens[i] != kSpecials[i])
            throw DataError("vocabulary index " + std::to_string(i) + " must be " + std::string(kSpecials[i]));
    Vocab v;
    for (std::size_t i = 4; i < tokens.size(); ++i) {
        if (v.contains(tokens[i])) throw DataError("duplicate vocabulary entry '" + tokens[i] + "'");
        v.add(tokens[i]);
    }
    return v;
}

Vocabulary build_vocab(const SenseCorpus& train, int min_count)
{
    std::map<std::string, int> counts;
    std::vector<std::string> order;  // first-occurrence order keeps indices stable
    for (const auto& s : train.sentences)
        for (const auto& t : s.tokens)
            if (counts[t.surface]++ == 0) order.push_back(t.surface);

    Vocabulary v;
    for (const auto& w : order)
        if (counts[w] >= min_count) v.words.add(w);
    for (auto p : {PosClass::kNoun, PosClass::kVerb, PosClass::kAdj, PosClass::kAdv, PosClass::kOther})
        v.pos.add(std::string(to_string(p)));
    v.output = v.words;
    for (const auto& s : train.sentences)
        for (const auto& t : s.tokens)
            if (t.tagged()) v.output.add(t.sense_token());
    return v;
}

std::vector<Instance> make_instances(const SenseCorpus& corpus)
{
    std::vector<Instance> out;
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
        const auto& toks = corpus.sentences[s].tokens;
        for (std::size_t t = 0; t < toks.size(); ++t)
            if (toks[t].tagged()) out.push_back({static_cast<int>(s), static_cast<int>(t)});
    }
    return out;
}

std::pair<int, int> context_window(int length, int target, const WindowConfig& window)
{
    if (window.mode == WindowMode::kAroundTarget) {
        return {std::max(0, target - window.context), std::min(length, target + window.context + 1)};
    }
    const int cap = std::max(1, window.max_length);
    if (length <= cap) return {0, length};
    const int begin = std::clamp(target - cap + 1, 0, length - cap);
    return {begin, begin + cap};
}

Batch make_batch(const SenseCorpus& corpus, std::span<const Instance> instances, const Vocabulary& vocab,
                 const WindowConfig& window)
{
    if (instances.empty()) throw UsageError("make_batch: zero sentences");
    struct Row {
        Instance inst;
        int begin;
        int end;
    };
    std::vector<Row> rows;
    rows.reserve(instances.size());
    for (const auto& inst : instances) {
        if (inst.sentence < 0 || inst.sentence >= static_cast<int>(corpus.sentences.size()))
            throw UsageError("make_batch: sentence index " + std::to_string(inst.sentence) + " out of range");
        const int len = static_cast<int>(corpus.sentences[static_cast<std::size_t>(inst.sentence)].tokens.size());
        auto [b, e] = context_window(len, inst.target, window);
        rows.push_back({inst, b, e});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return (a.end - a.begin) > (b.end - b.begin); });

    const int n = static_cast<int>(rows.size());
    const int smax = rows.front().end - rows.front().begin;
    Batch batch;
    batch.source = IndexGrid::Constant(n, smax, Vocab::kPad);
    batch.pos = IndexGrid::Constant(n, smax, Vocab::kPad);
    batch.target = IndexGrid::Constant(n, smax + 1, Vocab::kPad);
    batch.target_mask = Eigen::ArrayXXd::Zero(n, smax + 1);
    Array mask = Array::Zero(static_cast<Index>(n) * smax);
    for (int r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        const auto& toks = corpus.sentences[static_cast<std::size_t>(row.inst.sentence)].tokens;
        const int len = row.end - row.begin;
        for (int j = 0; j < len; ++j) {
            const Token& tok = toks[static_cast<std::size_t>(row.begin + j)];
            batch.source(r, j) = vocab.words.index(tok.surface);
            batch.pos(r, j) = vocab.pos.index(std::string(to_string(tok.pos)));
            const bool is_target = row.begin + j == row.inst.target;
            batch.target(r, j) = is_target ? vocab.output.index(tok.sense_token()) : batch.source(r, j);
            batch.target_mask(r, j) = 1.0;
            mask(static_cast<Index>(r) * smax + j) = 1.0;
        }
        batch.target(r, len) = Vocab::kEos;
        batch.target_mask(r, len) = 1.0;
        const Token& target = toks[static_cast<std::size_t>(row.inst.target)];
        batch.lengths.push_back(len);
        batch.target_positions.push_back(row.inst.target - row.begin);
        batch.window_begin.push_back(row.begin);
        batch.instances.push_back(row.inst);
        batch.lemmas.push_back(target.lemma);
        batch.gold.push_back(target.sense_token());
        batch.target_pos.push_back(target.pos);
    }
    batch.source_mask = Tensor::from({n, smax}, std::move(mask));
    return batch;
}

std::vector<Batch> make_batches(const SenseCorpus& corpus, std::span<const Instance> instances,
                                const Vocabulary& vocab, int batch_size, const WindowConfig& window)
{
    if (batch_size <= 0) throw UsageError("batch_size must be positive");
    std::vector<Batch> out;
    for (std::size_t i = 0; i < instances.size(); i += static_cast<std::size_t>(batch_size)) {
        const std::size_t n = std::min(instances.size() - i, static_cast<std::size_t>(batch_size));
        out.push_back(make_batch(corpus, instances.subspan(i, n), vocab, window));
    }
    return out;
}

// --- splits -----------------------------------------------------------------

nlohmann::json SplitManifest::to_json() const
{
    return {{"seed", seed}, {"ratios", ratios}, {"train", train}, {"dev", dev}, {"test", test}};
}

SplitManifest SplitManifest::from_json(const nlohmann::json& doc)
{
    SplitManifest m;
    try {
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.ratios = doc.at("ratios").get<std::vector<double>>();
        m.train = doc.at("train").get<std::vector<int>>();
        m.dev = doc.at("dev").get<std::vector<int>>();
        m.test = doc.at("test").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed split manifest: ") + e.what());
    }
    return m;
}

SplitManifest split_corpus(int sentence_count, std::uint64_t seed, std::vector<double> ratios)
{
    if (ratios.size() != 3) throw ConfigError("split ratios must have three entries");
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (total <= 0 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw ConfigError("split ratios must be non-negative with a positive sum");
    std::vector<int> ids(static_cast<std::size_t>(sentence_count));
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(sentence_count * ratios[0] / total));
    const auto n_dev = std::min(ids.size() - n_train,
                                static_cast<std::size_t>(std::llround(sentence_count * ratios[1] / total)));
    SplitManifest m;
    m.seed = seed;
    m.ratios = std::move(ratios);
    m.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
    m.dev.assign(ids.begin() + static_cast<long>(n_train), ids.begin() + static_cast<long>(n_train + n_dev));
    m.test.assign(ids.begin() + static_cast<long>(n_train + n_dev), ids.end());
    for (auto* part : {&m.train, &m.dev, &m.test}) std::sort(part->begin(), part->end());
    return m;
}

} // namespace mawsd
