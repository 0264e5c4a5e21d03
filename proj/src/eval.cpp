#include "mawsd/eval.hpp"

#include "mawsd/errors.hpp"
#include "mawsd/ops.hpp"
#include "mawsd/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace mawsd {

// --- inventory -------------------------------------------------------------------

SenseInventory SenseInventory::build(const SenseCorpus& train, const Vocab& output)
{
    std::map<std::string, std::map<int, int>> counts;
    for (const auto& s : train.sentences)
        for (const auto& t : s.tokens) {
            if (!t.tagged() || !output.contains(t.sense_token())) continue;
            ++counts[t.lemma][output.index(t.sense_token())];
        }
    SenseInventory inv;
    for (const auto& [lemma, by_index] : counts) {
        auto& list = inv.candidates[lemma];
        int best = -1;
        int best_count = 0;
        for (const auto& [index, n] : by_index) {
            list.push_back(index);
            if (n > best_count) {
                best = index;
                best_count = n;
            }
        }
        inv.most_frequent[lemma] = best;
    }
    return inv;
}

const std::vector<int>* SenseInventory::find(const std::string& lemma) const
{
    auto it = candidates.find(lemma);
    return it == candidates.end() ? nullptr : &it->second;
}

nlohmann::json SenseInventory::to_json() const
{
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [lemma, list] : candidates)
        doc[lemma] = {{"candidates", list}, {"most_frequent", most_frequent.at(lemma)}};
    return doc;
}

SenseInventory SenseInventory::from_json(const nlohmann::json& doc, int output_size)
{
    if (!doc.is_object()) throw DataError("sense inventory must be a JSON object");
    SenseInventory inv;
    try {
        for (const auto& [lemma, entry] : doc.items()) {
            auto list = entry.at("candidates").get<std::vector<int>>();
            const int mfs = entry.at("most_frequent").get<int>();
            if (list.empty()) throw DataError("sense inventory: lemma '" + lemma + "' has no candidates");
            for (int i : list)
                if (i < 0 || i >= output_size)
                    throw DataError("sense inventory: lemma '" + lemma + "' lists index " + std::to_string(i) +
                                    " outside the output vocabulary of size " + std::to_string(output_size));
            if (std::find(list.begin(), list.end(), mfs) == list.end())
                throw DataError("sense inventory: most frequent sense of '" + lemma + "' is not a candidate");
            inv.candidates[lemma] = std::move(list);
            inv.most_frequent[lemma] = mfs;
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed sense inventory: ") + e.what());
    }
    return inv;
}

std::vector<int> rank_senses(std::span<const double> scores, const SenseInventory& inventory,
                             const std::string& lemma)
{
    const auto* list = inventory.find(lemma);
    if (!list) return {};
    std::vector<int> order = *list;
    for (int i : order)
        if (i < 0 || static_cast<std::size_t>(i) >= scores.size())
            throw DimensionError("rank_senses: candidate " + std::to_string(i) + " outside score vector of size " +
                                 std::to_string(scores.size()));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    return order;
}

// --- scoring ---------------------------------------------------------------------

EvalReport score_f1(std::span<const Prediction> predictions)
{
    if (predictions.empty()) throw UsageError("score_f1: empty gold set");
    EvalReport report;
    for (const char* c : kReportClasses) report.classes[c] = {};
    for (const auto& p : predictions) {
        std::vector<std::string> keys{"all"};
        if (p.pos != PosClass::kOther) keys.emplace_back(to_string(p.pos));
        for (const auto& k : keys) {
            auto& cs = report.classes[k];
            ++cs.support;
            if (p.attempted()) ++cs.attempted;
            if (p.correct()) ++cs.correct;
        }
    }
    for (auto& [name, cs] : report.classes) {
        cs.precision = cs.attempted > 0 ? static_cast<double>(cs.correct) / cs.attempted : 0.0;
        cs.recall = cs.support > 0 ? static_cast<double>(cs.correct) / cs.support : 0.0;
        const double pr = cs.precision + cs.recall;
        cs.f1 = pr > 0 ? 2.0 * cs.precision * cs.recall / pr : 0.0;
    }
    report.instances.assign(predictions.begin(), predictions.end());
    return report;
}

nlohmann::json EvalReport::to_json() const
{
    nlohmann::json classes_doc = nlohmann::json::object();
    for (const auto& [name, cs] : classes)
        classes_doc[name] = {{"precision", cs.precision}, {"recall", cs.recall},   {"f1", cs.f1},
                             {"support", cs.support},     {"attempted", cs.attempted}, {"correct", cs.correct}};
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& p : instances)
        inst.push_back({{"sentence", p.sentence},
                        {"target", p.target},
                        {"lemma", p.lemma},
                        {"pos", to_string(p.pos)},
                        {"gold", p.gold},
                        {"predicted", p.attempted() ? nlohmann::json(p.predicted) : nlohmann::json(nullptr)},
                        {"gold_rank", p.gold_rank}});
    return {{"classes", classes_doc}, {"instances", inst}};
}

std::vector<Prediction> predict(const Model& model, const SenseCorpus& corpus, std::span<const Instance> instances,
                                const Vocabulary& vocab, const SenseInventory& inventory, const EvalOptions& options)
{
    std::vector<Prediction> out;
    for (const auto& batch : make_batches(corpus, instances, vocab, options.batch_size, options.window)) {
        Tensor log_probs;
        if (!options.most_frequent_baseline) {
            ForwardOptions fo;
            fo.record_attention = false;
            log_probs = forward(model, batch, fo).log_probs;
        }
        const Index v = model.sizes.output;
        const Index steps = batch.max_length() + 1;
        for (int r = 0; r < batch.size(); ++r) {
            const Instance& inst = batch.instances[static_cast<std::size_t>(r)];
            Prediction p;
            p.sentence = corpus.sentences[static_cast<std::size_t>(inst.sentence)].id;
            p.target = inst.target;
            p.lemma = batch.lemmas[static_cast<std::size_t>(r)];
            p.pos = batch.target_pos[static_cast<std::size_t>(r)];
            p.gold = batch.gold[static_cast<std::size_t>(r)];
            std::vector<int> ranking;
            if (options.most_frequent_baseline) {
                if (auto it = inventory.most_frequent.find(p.lemma); it != inventory.most_frequent.end())
                    ranking = {it->second};
            } else {
                const Index offset = (r * steps + batch.target_positions[static_cast<std::size_t>(r)]) * v;
                std::span<const double> row(log_probs.value().data() + offset, static_cast<std::size_t>(v));
                ranking = rank_senses(row, inventory, p.lemma);
            }
            if (!ranking.empty()) p.predicted = vocab.output.token(ranking.front());
            for (std::size_t k = 0; k < ranking.size(); ++k)
                if (vocab.output.token(ranking[k]) == p.gold) p.gold_rank = static_cast<int>(k);
            out.push_back(std::move(p));
        }
    }
    return out;
}

EvalReport evaluate(const Model& model, const SenseCorpus& corpus, const Vocabulary& vocab,
                    const SenseInventory& inventory, const EvalOptions& options)
{
    const auto instances = make_instances(corpus);
    auto predictions = predict(model, corpus, instances, vocab, inventory, options);
    return score_f1(predictions);
}

std::string format_table(std::span<const TableRow> rows)
{
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"model", "train", "test", "nn", "vb", "adj", "adv", "all"});
    for (const auto& row : rows) {
        std::vector<std::string> line{row.model, row.train, row.test};
        for (const char* c : {"nn", "vb", "adj", "adv", "all"}) {
            const auto& cs = row.report.classes.at(c);
            char buf[32];
            if (cs.support == 0)
                std::snprintf(buf, sizeof buf, "-");
            else
                std::snprintf(buf, sizeof buf, "%.1f", 100.0 * cs.f1);
            line.emplace_back(buf);
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::ostringstream out;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            const auto pad = std::string(width[i] - line[i].size(), ' ');
            // Text columns left-aligned, scores right-aligned.
            out << (i < 3 ? line[i] + pad : pad + line[i]) << (i + 1 < line.size() ? "  " : "\n");
        }
    }
    return out.str();
}

// --- attention export ------------------------------------------------------------

int AttentionDump::fused_argmax_at_target() const
{
    if (target_position < 0 || target_position >= fused.rows()) return -1;
    Index best = 0;
    fused.row(target_position).maxCoeff(&best);
    return static_cast<int>(best);
}

AttentionDump collect_attention(const Model& model, const Vocabulary& vocab, const Sentence& sentence, int target,
                                const WindowConfig& window)
{
    if (sentence.tokens.empty()) throw DataError("dump_attention: empty sentence");
    if (target < 0) {
        target = 0;
        for (std::size_t i = 0; i < sentence.tokens.size(); ++i)
            if (sentence.tokens[i].tagged()) {
                target = static_cast<int>(i);
                break;
            }
    }
    if (target >= static_cast<int>(sentence.tokens.size()))
        throw UsageError("dump_attention: target " + std::to_string(target) + " beyond sentence length");

    SenseCorpus one;
    one.sentences.push_back(sentence);
    const Instance inst{0, target};
    const Batch batch = make_batch(one, std::span<const Instance>(&inst, 1), vocab, window);
    const ForwardResult fr = forward(model, batch);

    AttentionDump dump;
    const int begin = batch.window_begin.front();
    const int len = batch.lengths.front();
    for (int j = 0; j < len; ++j) {
        const auto& tok = sentence.tokens[static_cast<std::size_t>(begin + j)];
        dump.tokens.push_back(tok.surface);
        if (batch.source(0, j) == Vocab::kUnk) dump.unk_positions.push_back(j);
    }
    dump.target_position = batch.target_positions.front();
    dump.strategy = model.config.effective_fusion();
    dump.weights = model.fusion_values();

    const Tensor& mask = batch.source_mask;
    const bool single = model.config.streams().size() == 1;
    dump.fused = Eigen::ArrayXXd(len, len);
    for (const auto& [s, raw] : fr.attention.front().streams)
        dump.streams.emplace_back(s, Eigen::ArrayXXd(len, len));
    for (int t = 0; t < len; ++t) {
        const AttentionBundle& bundle = fr.attention[static_cast<std::size_t>(t)];
        dump.fused.row(t) = bundle.fused.value().head(len).transpose();
        for (std::size_t k = 0; k < bundle.streams.size(); ++k) {
            const Tensor& a = bundle.streams[k].second;
            const bool is_distribution = dump.strategy == FusionStrategy::kPointwise && !single;
            const Tensor dist = is_distribution ? a : masked_softmax(a.detach(), mask, -1);
            dump.streams[k].second.row(t) = dist.value().head(len).transpose();
        }
    }
    return dump;
}

namespace {

std::string matrix_csv(const Eigen::ArrayXXd& m, const std::vector<std::string>& tokens)
{
    std::ostringstream out;
    out.precision(17);
    out << "step";
    for (const auto& t : tokens) out << "," << t;
    out << "\n";
    for (Index r = 0; r < m.rows(); ++r) {
        out << r;
        for (Index c = 0; c < m.cols(); ++c) out << "," << m(r, c);
        out << "\n";
    }
    return out.str();
}

} // namespace

void write_attention(const std::filesystem::path& dir, const AttentionDump& dump)
{
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [s, m] : dump.streams) {
        const std::string name = std::string(to_string(s)) + ".csv";
        write_file_atomic(dir / name, matrix_csv(m, dump.tokens));
        files[std::string(to_string(s))] = name;
    }
    write_file_atomic(dir / "fused.csv", matrix_csv(dump.fused, dump.tokens));
    files["fused"] = "fused.csv";
    nlohmann::json manifest = {
        {"tokens", dump.tokens},
        {"unk_positions", dump.unk_positions},
        {"target_position", dump.target_position},
        {"strategy", to_string(dump.strategy)},
        {"weights", dump.weights},
        {"steps", dump.fused.rows()},
        {"files", files},
    };
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace mawsd
