#include "mawsd/data.hpp"
#include "mawsd/errors.hpp"
#include "mawsd/synthetic.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

using namespace mawsd;

namespace {

const std::filesystem::path kFixtures = MAWSD_FIXTURE_DIR;

SenseCorpus parse_text(const std::string& text)
{
    std::istringstream in(text);
    return parse_corpus(in, "test");
}

SenseCorpus sentence_of_length(int n, int target)
{
    SenseCorpus c;
    Sentence s;
    for (int i = 0; i < n; ++i) {
        Token t{"w" + std::to_string(i), "w" + std::to_string(i), PosClass::kOther, ""};
        if (i == target) t = {"bank", "bank", PosClass::kNoun, "river"};
        s.tokens.push_back(t);
    }
    c.sentences.push_back(s);
    return c;
}

} // namespace

TEST(ParseCorpus, EmptyInputHasNoSentences)
{
    EXPECT_TRUE(parse_text("").sentences.empty());
    EXPECT_TRUE(parse_text("# only a comment\n\n\n").sentences.empty());
}

TEST(ParseCorpus, FixtureStructure)
{
    auto c = parse_corpus_file(kFixtures / "two_sentences.corpus");
    ASSERT_EQ(c.sentences.size(), 2u);
    EXPECT_EQ(c.sentences[0].tokens.size(), 4u);
    EXPECT_EQ(c.sentences[1].tokens.size(), 5u);
    EXPECT_EQ(c.sentences[0].doc, "fixture");
    EXPECT_EQ(c.sentences[0].tokens[1].sense_token(), "bank%finance");
    EXPECT_EQ(c.sentences[1].tokens[4].sense_token(), "bank%river");
    EXPECT_EQ(c.sentences[0].tokens[2].pos, PosClass::kVerb);
    EXPECT_FALSE(c.sentences[0].tokens[2].tagged());
    EXPECT_EQ(c.tagged_count(), 2u);
    EXPECT_TRUE(c.warnings.empty());
}

TEST(ParseCorpus, UnknownPosBecomesOtherWithWarning)
{
    auto c = parse_text("a\ta\tXYZ\nb\tb\tNNS\n");
    ASSERT_EQ(c.sentences.size(), 1u);
    EXPECT_EQ(c.sentences[0].tokens[0].pos, PosClass::kOther);
    EXPECT_EQ(c.sentences[0].tokens[1].pos, PosClass::kNoun);
    ASSERT_EQ(c.warnings.size(), 1u);
    EXPECT_NE(c.warnings[0].find("line 1"), std::string::npos);
}

TEST(ParseCorpus, MissingColumnsReportLine)
{
    try {
        parse_text("a\ta\tnn\n\nb\tb\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(ParseCorpus, SenseKeyOnFunctionWordRejected)
{
    EXPECT_THROW(parse_text("of\tof\tother\tkey\n"), DataError);
}

TEST(ParseCorpus, RoundTrip)
{
    auto c = parse_corpus_file(kFixtures / "two_sentences.corpus");
    auto again = parse_text(serialize_corpus(c));
    ASSERT_EQ(again.sentences.size(), c.sentences.size());
    EXPECT_EQ(serialize_corpus(again), serialize_corpus(c));
    for (std::size_t s = 0; s < c.sentences.size(); ++s) {
        EXPECT_EQ(again.sentences[s].doc, c.sentences[s].doc);
        for (std::size_t t = 0; t < c.sentences[s].tokens.size(); ++t) {
            const auto& a = c.sentences[s].tokens[t];
            const auto& b = again.sentences[s].tokens[t];
            EXPECT_EQ(a.surface, b.surface);
            EXPECT_EQ(a.lemma, b.lemma);
            EXPECT_EQ(a.pos, b.pos);
            EXPECT_EQ(a.sense, b.sense);
        }
    }
}

TEST(BuildVocab, FixtureCounts)
{
    auto c = parse_corpus_file(kFixtures / "two_sentences.corpus");
    auto v = build_vocab(c, 1);
    // The bank raised rates He sat by the -> 8 distinct surface forms.
    EXPECT_EQ(v.words.size(), 8 + 4);
    EXPECT_EQ(v.output.size(), 8 + 4 + 2);
    EXPECT_EQ(v.pos.size(), 5 + 4);
    EXPECT_TRUE(v.output.contains("bank%river"));
    for (int i = 0; i < v.words.size(); ++i) EXPECT_EQ(v.words.token(i), v.output.token(i));
}

TEST(BuildVocab, SpecialsAtFixedIndices)
{
    auto v = build_vocab(parse_corpus_file(kFixtures / "two_sentences.corpus"), 1);
    for (const Vocab* table : {&v.words, &v.pos, &v.output}) {
        EXPECT_EQ(table->token(Vocab::kStart), "<s>");
        EXPECT_EQ(table->token(Vocab::kEos), "<eos>");
        EXPECT_EQ(table->token(Vocab::kPad), "<pad>");
        EXPECT_EQ(table->token(Vocab::kUnk), "<unk>");
    }
}

TEST(BuildVocab, UnseenAndRareTokensMapToUnk)
{
    auto c = parse_corpus_file(kFixtures / "two_sentences.corpus");
    auto v = build_vocab(c, 1);
    EXPECT_EQ(v.words.index("zebra"), Vocab::kUnk);
    auto v2 = build_vocab(c, 2);
    EXPECT_EQ(v2.words.index("bank"), 4);
    EXPECT_EQ(v2.words.index("rates"), Vocab::kUnk);
    EXPECT_EQ(v2.words.size(), 5);
}

TEST(BuildVocab, JsonRoundTrip)
{
    auto v = build_vocab(parse_corpus_file(kFixtures / "two_sentences.corpus"), 1);
    EXPECT_EQ(Vocab::from_json(v.output.to_json()), v.output);
    EXPECT_THROW(Vocab::from_json(nlohmann::json::array({"a", "b", "c", "d"})), DataError);
}

TEST(MakeBatch, SingleSentenceNoPadding)
{
    auto c = sentence_of_length(3, 1);
    auto v = build_vocab(c);
    auto inst = make_instances(c);
    auto b = make_batch(c, inst, v);
    EXPECT_EQ(b.max_length(), 3);
    EXPECT_EQ(b.source_mask.value().sum(), 3.0);
    EXPECT_EQ(b.target(0, 3), Vocab::kEos);
}

TEST(MakeBatch, PaddingAndLengthSort)
{
    SenseCorpus c = sentence_of_length(3, 0);
    c.sentences.push_back(sentence_of_length(5, 2).sentences[0]);
    auto v = build_vocab(c);
    auto inst = make_instances(c);
    auto b = make_batch(c, inst, v);
    ASSERT_EQ(b.size(), 2);
    EXPECT_EQ(b.lengths, (std::vector<int>{5, 3}));
    EXPECT_EQ(b.instances[1].sentence, 0);
    int padded = 0;
    for (int j = 0; j < b.max_length(); ++j) padded += b.source_mask.at(1, j) == 0.0 ? 1 : 0;
    EXPECT_EQ(padded, 2);
    EXPECT_EQ(b.source(1, 3), Vocab::kPad);
    EXPECT_EQ(b.target(1, 3), Vocab::kEos);
    EXPECT_EQ(b.target(1, 4), Vocab::kPad);
    EXPECT_EQ(b.target_mask(1, 3), 1.0);
    EXPECT_EQ(b.target_mask(1, 4), 0.0);
}

TEST(MakeBatch, WindowAroundTarget)
{
    auto c = sentence_of_length(60, 40);
    auto [begin, end] = context_window(60, 40, WindowConfig{});
    EXPECT_EQ(begin, 15);
    EXPECT_EQ(end, 60);
    auto v = build_vocab(c);
    auto b = make_batch(c, make_instances(c), v);
    EXPECT_EQ(b.lengths[0], 45);
    EXPECT_EQ(b.window_begin[0], 15);
    EXPECT_EQ(b.target_positions[0], 25);
    EXPECT_EQ(v.words.token(b.source(0, 0)), "w15");
}

TEST(MakeBatch, MaxLengthWindowKeepsTarget)
{
    WindowConfig w;
    w.mode = WindowMode::kMaxLength;
    w.max_length = 50;
    EXPECT_EQ(context_window(60, 10, w), (std::pair<int, int>{0, 50}));
    EXPECT_EQ(context_window(60, 55, w), (std::pair<int, int>{6, 56}));
    EXPECT_EQ(context_window(30, 29, w), (std::pair<int, int>{0, 30}));
}

TEST(MakeBatch, TargetCopiesSourceOutsideSenseSlot)
{
    auto syn = generate_synthetic({.sentences = 30, .seed = 3});
    auto v = build_vocab(syn.corpus);
    auto inst = make_instances(syn.corpus);
    for (const auto& b : make_batches(syn.corpus, inst, v, 7)) {
        for (int r = 0; r < b.size(); ++r) {
            for (int j = 0; j < b.lengths[r]; ++j) {
                if (j == b.target_positions[r]) {
                    EXPECT_EQ(v.output.token(b.target(r, j)), b.gold[r]);
                } else {
                    EXPECT_EQ(b.target(r, j), b.source(r, j));
                }
            }
        }
    }
}

TEST(MakeBatch, EmptyIsUsageError)
{
    SenseCorpus c;
    Vocabulary v;
    EXPECT_THROW(make_batch(c, {}, v), UsageError);
}

TEST(MakeInstances, OnePerTaggedToken)
{
    auto c = parse_text("a\ta\tnn\tk1\nb\tb\tother\nc\tc\tvb\tk2\n");
    auto inst = make_instances(c);
    ASSERT_EQ(inst.size(), 2u);
    EXPECT_EQ(inst[0].target, 0);
    EXPECT_EQ(inst[1].target, 2);
    auto v = build_vocab(c);
    auto b = make_batch(c, inst, v);
    // The replicated copy keeps the other tagged word as a plain token.
    EXPECT_EQ(v.output.token(b.target(0, 2)), "c");
    EXPECT_EQ(v.output.token(b.target(1, 0)), "a");
}

TEST(Split, DisjointExhaustiveDeterministic)
{
    auto m = split_corpus(50, 7);
    EXPECT_EQ(m.train.size(), 40u);
    EXPECT_EQ(m.dev.size(), 5u);
    EXPECT_EQ(m.test.size(), 5u);
    std::set<int> all;
    for (const auto* part : {&m.train, &m.dev, &m.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), 50u);
    EXPECT_EQ(*all.begin(), 0);
    EXPECT_EQ(*all.rbegin(), 49);
    auto again = split_corpus(50, 7);
    EXPECT_EQ(again.train, m.train);
    EXPECT_EQ(again.test, m.test);
    auto other = split_corpus(50, 8);
    EXPECT_NE(other.train, m.train);
    auto round = SplitManifest::from_json(m.to_json());
    EXPECT_EQ(round.dev, m.dev);
    EXPECT_EQ(round.seed, 7u);
}

TEST(Synthetic, CueWithinDistanceAndSingleTarget)
{
    auto syn = generate_synthetic({.sentences = 200, .seed = 11});
    ASSERT_EQ(syn.corpus.sentences.size(), 200u);
    for (std::size_t i = 0; i < 200; ++i) {
        const auto& s = syn.corpus.sentences[i];
        const int d = syn.cue_positions[i] - syn.target_positions[i];
        EXPECT_NE(d, 0);
        EXPECT_LE(std::abs(d), 3);
        int tagged = 0;
        for (const auto& t : s.tokens) tagged += t.tagged() ? 1 : 0;
        EXPECT_EQ(tagged, 1);
        EXPECT_TRUE(s.tokens[static_cast<std::size_t>(syn.target_positions[i])].tagged());
        EXPECT_GE(s.tokens.size(), 6u);
        EXPECT_LE(s.tokens.size(), 10u);
    }
    auto again = generate_synthetic({.sentences = 200, .seed = 11});
    EXPECT_EQ(serialize_corpus(again.corpus), serialize_corpus(syn.corpus));
}

TEST(Synthetic, CueDeterminesSense)
{
    auto syn = generate_synthetic({.sentences = 300, .seed = 5});
    std::map<std::string, std::string> sense_of_cue;
    for (std::size_t i = 0; i < syn.corpus.sentences.size(); ++i) {
        const auto& toks = syn.corpus.sentences[i].tokens;
        const auto& cue = toks[static_cast<std::size_t>(syn.cue_positions[i])].surface;
        const auto sense = toks[static_cast<std::size_t>(syn.target_positions[i])].sense_token();
        auto [it, inserted] = sense_of_cue.emplace(cue, sense);
        EXPECT_EQ(it->second, sense) << cue;
    }
}
