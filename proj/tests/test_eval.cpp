#include "mawsd/errors.hpp"
#include "mawsd/eval.hpp"
#include "mawsd/serialize.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace mawsd;
using mawsd::testing::micro_config;
using mawsd::testing::micro_setup;
using mawsd::testing::sizes_of;

namespace {

Prediction pred(PosClass pos, const std::string& gold, const std::string& predicted)
{
    Prediction p;
    p.pos = pos;
    p.gold = gold;
    p.predicted = predicted;
    return p;
}

void zero_cell(GruCell& cell)
{
    for (auto* dir : {&cell.forward, &cell.backward})
        for (auto& l : *dir)
            for (Tensor* t : {&l.W_z, &l.U_z, &l.b_z, &l.W_r, &l.U_r, &l.b_r, &l.W_n, &l.U_n, &l.b_n})
                t->mutable_value().setZero();
}

} // namespace

// --- inventory and ranking ------------------------------------------------------

TEST(SenseInventory, BuildFromCorpus)
{
    auto m = micro_setup();
    auto inv = SenseInventory::build(m.corpus, m.vocab.output);
    ASSERT_NE(inv.find("bank"), nullptr);
    const auto& list = *inv.find("bank");
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(m.vocab.output.token(list[0]), "bank%finance");
    EXPECT_EQ(m.vocab.output.token(list[1]), "bank%river");
    // One of each: the tie goes to the lower index.
    EXPECT_EQ(inv.most_frequent.at("bank"), list[0]);
    EXPECT_EQ(inv.find("money"), nullptr);
    auto again = SenseInventory::from_json(inv.to_json(), m.vocab.output.size());
    EXPECT_EQ(again.candidates, inv.candidates);
    EXPECT_THROW(SenseInventory::from_json(inv.to_json(), 5), DataError);
}

TEST(RankSenses, SingleSenseIgnoresScores)
{
    SenseInventory inv;
    inv.candidates["x"] = {2};
    const double scores[] = {9, 9, -9, 9};
    EXPECT_EQ(rank_senses(scores, inv, "x"), (std::vector<int>{2}));
}

TEST(RankSenses, OrdersByScore)
{
    SenseInventory inv;
    inv.candidates["x"] = {1, 3};
    const double scores[] = {0, -2.0, 0, -1.0};
    EXPECT_EQ(rank_senses(scores, inv, "x"), (std::vector<int>{3, 1}));
}

TEST(RankSenses, UnseenLemmaIsEmpty)
{
    SenseInventory inv;
    const double scores[] = {0, 1};
    EXPECT_TRUE(rank_senses(scores, inv, "nope").empty());
}

TEST(RankSenses, MatchesRestrictedSoftmaxSort)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 3);
    SenseInventory inv;
    inv.candidates["x"] = {4, 7, 9, 12, 15};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> scores(20);
        for (auto& s : scores) s = n(rng);
        const auto& cand = inv.candidates["x"];
        double z = 0;
        for (int c : cand) z += std::exp(scores[static_cast<std::size_t>(c)]);
        std::vector<std::pair<double, int>> probs;
        for (int c : cand) probs.emplace_back(std::exp(scores[static_cast<std::size_t>(c)]) / z, c);
        std::sort(probs.begin(), probs.end(), [](auto a, auto b) { return a.first > b.first; });
        std::vector<int> expect;
        for (auto [p, c] : probs) expect.push_back(c);
        const auto got = rank_senses(scores, inv, "x");
        EXPECT_EQ(got, expect);
        for (int g : got) EXPECT_NE(std::find(cand.begin(), cand.end(), g), cand.end());
    }
}

// --- scoring --------------------------------------------------------------------

TEST(ScoreF1, AllCorrect)
{
    std::vector<Prediction> p{pred(PosClass::kNoun, "a", "a"), pred(PosClass::kVerb, "b", "b"),
                              pred(PosClass::kAdj, "c", "c"), pred(PosClass::kAdv, "d", "d")};
    auto r = score_f1(p);
    for (const char* c : kReportClasses) {
        EXPECT_EQ(r.classes.at(c).precision, 1.0) << c;
        EXPECT_EQ(r.classes.at(c).recall, 1.0) << c;
        EXPECT_EQ(r.classes.at(c).f1, 1.0) << c;
    }
}

TEST(ScoreF1, PartialCoverageArithmetic)
{
    std::vector<Prediction> p{pred(PosClass::kNoun, "a", "a"), pred(PosClass::kNoun, "b", "b"),
                              pred(PosClass::kNoun, "c", "x"), pred(PosClass::kNoun, "d", "")};
    auto r = score_f1(p);
    EXPECT_DOUBLE_EQ(r.all().precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.all().recall, 0.5);
    EXPECT_NEAR(r.all().f1, 4.0 / 7.0, 1e-15);
    EXPECT_EQ(r.classes.at("vb").support, 0);
    EXPECT_EQ(r.classes.at("vb").f1, 0.0);
}

TEST(ScoreF1, ClassesPartitionAll)
{
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> u(0, 4);
    std::vector<Prediction> p;
    for (int i = 0; i < 200; ++i) {
        const auto pos = static_cast<PosClass>(u(rng));
        const int k = u(rng);
        p.push_back(pred(pos, "g", k == 0 ? "" : (k < 3 ? "g" : "h")));
    }
    auto r = score_f1(p);
    int tp = 0;
    int support = 0;
    for (const char* c : {"nn", "vb", "adj", "adv"}) {
        tp += r.classes.at(c).correct;
        support += r.classes.at(c).support;
    }
    int other_tp = 0;
    int other = 0;
    for (const auto& q : p)
        if (q.pos == PosClass::kOther) {
            ++other;
            other_tp += q.correct() ? 1 : 0;
        }
    EXPECT_EQ(tp + other_tp, r.all().correct);
    EXPECT_EQ(support + other, r.all().support);

    std::shuffle(p.begin(), p.end(), rng);
    auto shuffled = score_f1(p);
    for (const char* c : kReportClasses) EXPECT_EQ(shuffled.classes.at(c).f1, r.classes.at(c).f1);
}

TEST(ScoreF1, FullCoverageEqualsAccuracy)
{
    std::vector<Prediction> p{pred(PosClass::kNoun, "a", "a"), pred(PosClass::kVerb, "b", "x"),
                              pred(PosClass::kVerb, "c", "c")};
    auto r = score_f1(p);
    EXPECT_DOUBLE_EQ(r.all().precision, r.all().recall);
    EXPECT_DOUBLE_EQ(r.all().f1, 2.0 / 3.0);
}

TEST(ScoreF1, EmptyIsUsageError)
{
    EXPECT_THROW(score_f1({}), UsageError);
}

TEST(Report, JsonAndTable)
{
    std::vector<Prediction> p{pred(PosClass::kNoun, "a", "a"), pred(PosClass::kVerb, "b", "")};
    auto r = score_f1(p);
    auto doc = r.to_json();
    EXPECT_EQ(doc["classes"]["all"]["support"], 2);
    EXPECT_TRUE(doc["instances"][1]["predicted"].is_null());
    const TableRow rows[] = {{"seq2seq", "semcor", "masc", r}};
    const std::string table = format_table(rows);
    EXPECT_EQ(table.substr(0, table.find('\n')).find("model"), 0u);
    for (const char* col : {"train", "test", "nn", "vb", "adj", "adv", "all"})
        EXPECT_NE(table.find(col), std::string::npos);
    EXPECT_NE(table.find("100.0"), std::string::npos);
    EXPECT_NE(table.find("66.7"), std::string::npos);
}

// --- prediction -----------------------------------------------------------------

TEST(Predict, UnseenLemmaIsUnattempted)
{
    auto m = micro_setup();
    auto inv = SenseInventory::build(m.corpus, m.vocab.output);
    std::istringstream in("the\tthe\tother\nshore\tshore\tnn\tcoast\n");
    auto test = parse_corpus(in);
    Model model = Model::create(micro_config(Architecture::kSeq2Seq), sizes_of(m.vocab), 1);
    auto r = evaluate(model, test, m.vocab, inv);
    EXPECT_EQ(r.all().support, 1);
    EXPECT_EQ(r.all().attempted, 0);
    EXPECT_EQ(r.all().recall, 0.0);
}

TEST(Predict, PredictionsComeFromCandidates)
{
    auto m = micro_setup();
    auto inv = SenseInventory::build(m.corpus, m.vocab.output);
    Model model = Model::create(micro_config(Architecture::kConvPosWeighted), sizes_of(m.vocab), 2);
    auto r = evaluate(model, m.corpus, m.vocab, inv);
    ASSERT_EQ(r.instances.size(), 2u);
    for (const auto& p : r.instances) {
        EXPECT_TRUE(p.predicted == "bank%finance" || p.predicted == "bank%river");
        EXPECT_GE(p.gold_rank, 0);
    }
    EvalOptions mfs;
    mfs.most_frequent_baseline = true;
    auto base = evaluate(model, m.corpus, m.vocab, inv, mfs);
    EXPECT_DOUBLE_EQ(base.all().f1, 0.5);
}

// --- attention export -----------------------------------------------------------

TEST(DumpAttention, RowsAreDistributions)
{
    auto m = micro_setup();
    for (Architecture arch : kAllArchitectures) {
        Model model = Model::create(micro_config(arch), sizes_of(m.vocab), 3);
        auto d = collect_attention(model, m.vocab, m.corpus.sentences[0]);
        const Index s = static_cast<Index>(m.corpus.sentences[0].tokens.size());
        EXPECT_EQ(d.fused.rows(), s);
        EXPECT_EQ(d.fused.cols(), s);
        EXPECT_EQ(d.streams.size(), model.config.streams().size());
        EXPECT_EQ(d.target_position, 1);
        for (Index r = 0; r < s; ++r) EXPECT_NEAR(d.fused.row(r).sum(), 1.0, 1e-12);
        for (const auto& [st, mat] : d.streams) {
            EXPECT_EQ(mat.rows(), s);
            for (Index r = 0; r < s; ++r) EXPECT_NEAR(mat.row(r).sum(), 1.0, 1e-12);
        }
    }
}

TEST(DumpAttention, ZeroStateGivesUniformFirstRow)
{
    auto m = micro_setup();
    Model model = Model::create(micro_config(Architecture::kSeq2Seq), sizes_of(m.vocab), 4);
    zero_cell(model.encoder);
    zero_cell(model.decoder);
    auto d = collect_attention(model, m.vocab, m.corpus.sentences[0]);
    EXPECT_LT((d.fused.row(0) - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(DumpAttention, WritesCsvAndManifest)
{
    auto m = micro_setup();
    Model model = Model::create(micro_config(Architecture::kConvPosWeighted), sizes_of(m.vocab), 5);
    Sentence s = m.corpus.sentences[0];
    s.tokens[3].surface = "zebra";
    auto d = collect_attention(model, m.vocab, s);
    EXPECT_EQ(d.unk_positions, (std::vector<int>{3}));
    const auto dir = std::filesystem::temp_directory_path() / "mawsd_test_dump";
    std::filesystem::remove_all(dir);
    write_attention(dir, d);
    for (const char* f : {"word.csv", "pos.csv", "bigram.csv", "fused.csv", "manifest.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    auto manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest["tokens"][3], "zebra");
    EXPECT_EQ(manifest["unk_positions"][0], 3);
    EXPECT_EQ(manifest["strategy"], "scalar-weighted");
    EXPECT_EQ(manifest["weights"].size(), 3u);
    const std::string csv = read_file(dir / "fused.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,the,bank,lends,zebra");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    std::filesystem::remove_all(dir);
}
