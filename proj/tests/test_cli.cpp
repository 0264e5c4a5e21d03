#include "mawsd/cli.hpp"
#include "mawsd/errors.hpp"
#include "mawsd/serialize.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace mawsd;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MAWSD_FIXTURE_DIR;
const std::string kCorpus = (kFixtures / "two_sentences.corpus").string();

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("mawsd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // Small enough to train in well under a second.
    Result train_tiny(const std::string& out, std::vector<std::string> extra = {})
    {
        std::vector<std::string> args = {"train", "--set", "train_data=" + kCorpus, "--set", "embed_dim=4",
                                         "--set", "hidden_dim=5", "--set", "epochs=3", "--out", out};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    }

    fs::path dir_;
};

// Drops the trailing seconds column of a train log.
std::string without_timing(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

} // namespace

TEST(ResolveConfig, DefaultsCoverArchitectureTrainingAndData)
{
    const auto cfg = cli::default_config();
    for (const char* key : {"architecture", "hidden_dim", "learning_rate", "decoder_lr_ratio", "seed", "train_data",
                            "test_data", "fusion_init", "loss_scope"})
        EXPECT_TRUE(cfg.contains(key)) << key;
    EXPECT_EQ(cfg.at("architecture"), "seq2seq+conv+pos-weighted");
}

TEST(ResolveConfig, OverridesAreTypedByDefault)
{
    const auto cfg = cli::resolve_config("", {"epochs=7", "learning_rate=0.5", "bidirectional=false",
                                              "architecture=seq2seq", "seed=42"});
    EXPECT_EQ(cfg.at("epochs").get<int>(), 7);
    EXPECT_DOUBLE_EQ(cfg.at("learning_rate").get<double>(), 0.5);
    EXPECT_FALSE(cfg.at("bidirectional").get<bool>());
    EXPECT_EQ(cfg.at("architecture"), "seq2seq");
    EXPECT_EQ(cfg.at("seed").get<std::uint64_t>(), 42u);
}

TEST(ResolveConfig, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(cli::resolve_config("", {"hiden_dim=4"}), ConfigError);
    EXPECT_THROW(cli::resolve_config("", {"epochs=ten"}), ConfigError);
    EXPECT_THROW(cli::resolve_config("", {"epochs=1.5"}), ConfigError);
    EXPECT_THROW(cli::resolve_config("", {"bidirectional=maybe"}), ConfigError);
    EXPECT_THROW(cli::resolve_config("", {"noequals"}), ConfigError);
    try {
        cli::resolve_config("", {"hiden_dim=4"});
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("hiden_dim"), std::string::npos);
    }
}

TEST_F(CliTest, ConfigFileLayersUnderOverrides)
{
    write_file_atomic(path("cfg.json"), R"({"epochs": 4, "hidden_dim": 9})");
    const auto cfg = cli::resolve_config(path("cfg.json"), {"epochs=5"});
    EXPECT_EQ(cfg.at("epochs").get<int>(), 5);
    EXPECT_EQ(cfg.at("hidden_dim").get<int>(), 9);

    write_file_atomic(path("bad.json"), R"({"epoch": 4})");
    try {
        cli::resolve_config(path("bad.json"), {});
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST_F(CliTest, UnknownFlagOrKeyFailsBeforeAnyFileIsCreated)
{
    auto r = run({"train", "--frobnicate", "--out", path("run")});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_FALSE(fs::exists(path("run")));

    r = train_tiny(path("run"), {"--set", "hiden_dim=3"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("hiden_dim"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("run")));

    r = train_tiny(path("run"), {"--set", "architecture=seq2seq+magic"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_FALSE(fs::exists(path("run")));
}

TEST_F(CliTest, MissingSubcommandIsUsageError)
{
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"fly"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, PrepareSyntheticWritesSplitsAndConfig)
{
    auto r = run({"prepare", "--synthetic", "30", "--seed", "4", "--out", path("data")});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"train.corpus", "dev.corpus", "test.corpus", "split.json", "synthetic.json", "config.json"})
        EXPECT_TRUE(fs::exists(path("data/") + f)) << f;
    const auto split = read_json(path("data/split.json"));
    EXPECT_EQ(split.at("train").size() + split.at("dev").size() + split.at("test").size(), 30u);
    const auto cfg = read_json(path("data/config.json"));
    EXPECT_EQ(cfg.at("train_data"), path("data/train.corpus"));
    EXPECT_EQ(cfg.at("seed"), 4);
}

TEST_F(CliTest, PrepareNeedsAnInput)
{
    EXPECT_EQ(run({"prepare", "--out", path("data")}).code, cli::kExitUsage);
    EXPECT_EQ(run({"prepare", "--set", "corpus=" + path("none.corpus"), "--out", path("data")}).code, cli::kExitData);
}

TEST_F(CliTest, TrainWritesRunDirectory)
{
    auto r = train_tiny(path("run1"), {"--set", "test_data=" + kCorpus});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"config.json", "train_log.csv", "weights.csv", "report.json", "report.txt",
                          "best/params.json", "best/config.json", "best/meta.json", "best/vocab_output.json"})
        EXPECT_TRUE(fs::exists(path("run1/") + f)) << f;
    EXPECT_EQ(read_file(path("run1/train_log.csv")).substr(0, 6), "epoch,");
    EXPECT_NE(r.out.find("seq2seq+conv+pos-weighted"), std::string::npos);
}

TEST_F(CliTest, ConfigSnapshotReplaysBitExactly)
{
    ASSERT_EQ(train_tiny(path("a"), {"--seed", "9"}).code, 0);
    auto r = run({"train", "--config", path("a/config.json"), "--out", path("b")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(without_timing(read_file(path("a/train_log.csv"))), without_timing(read_file(path("b/train_log.csv"))));
    EXPECT_EQ(read_file(path("a/best/params.json")), read_file(path("b/best/params.json")));
    EXPECT_EQ(read_file(path("a/weights.csv")), read_file(path("b/weights.csv")));
}

TEST_F(CliTest, TrainWithoutDataIsUsageErrorAndMissingFileIsDataError)
{
    EXPECT_EQ(run({"train", "--out", path("run")}).code, cli::kExitUsage);
    auto r = run({"train", "--set", "train_data=" + path("gone.corpus"), "--out", path("run")});
    EXPECT_EQ(r.code, cli::kExitData);
    EXPECT_NE(r.err.find("gone.corpus"), std::string::npos);
}

TEST_F(CliTest, EvalPrintsTableAndWritesReport)
{
    ASSERT_EQ(train_tiny(path("run")).code, 0);
    auto r = run({"eval", "--checkpoint", path("run/best"), "--test", kCorpus, "--mfs", "--out", path("rep")});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* col : {"model", "train", "test", "nn", "vb", "adj", "adv", "all", "most-frequent-sense"})
        EXPECT_NE(r.out.find(col), std::string::npos) << col;
    const auto rep = read_json(path("rep/report.json"));
    ASSERT_EQ(rep.size(), 2u);
    EXPECT_EQ(rep[0].at("train"), "two_sentences");
    EXPECT_EQ(rep[0].at("test"), "two_sentences");
}

TEST_F(CliTest, EvalErrorsMapToExitCodes)
{
    EXPECT_EQ(run({"eval", "--test", kCorpus}).code, cli::kExitUsage);
    EXPECT_EQ(run({"eval", "--checkpoint", path("nowhere"), "--test", kCorpus}).code, cli::kExitData);
    ASSERT_EQ(train_tiny(path("run")).code, 0);
    EXPECT_EQ(run({"eval", "--checkpoint", path("run/best"), "--test", path("nothing.corpus")}).code, cli::kExitData);
}

TEST_F(CliTest, DumpAttentionFromPlainText)
{
    ASSERT_EQ(train_tiny(path("run")).code, 0);
    write_file_atomic(path("s1.txt"), "he sat by the bank\n");
    auto r = run({"dump-attn", "--checkpoint", path("run/best"), "--sentence", path("s1.txt"), "--target", "4",
                  "--out", path("att")});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"word.csv", "pos.csv", "bigram.csv", "fused.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(path("att/") + f)) << f;
    EXPECT_EQ(read_json(path("att/manifest.json")).at("target_position"), 4);
}

TEST_F(CliTest, DumpAttentionOnePerSentence)
{
    ASSERT_EQ(train_tiny(path("run")).code, 0);
    auto r = run({"dump-attn", "--checkpoint", path("run/best"), "--sentence", kCorpus, "--out", path("att")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("att/s0/fused.csv")));
    EXPECT_TRUE(fs::exists(path("att/s1/fused.csv")));
}

TEST_F(CliTest, GradcheckPassesOnMicroConfiguration)
{
    auto r = run({"gradcheck", "--out", path("gc")});
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* name : {"gru_step", "combine_global_gate", "seq2seq", "seq2seq+conv+pos-weighted"})
        EXPECT_NE(r.out.find(name), std::string::npos) << name;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("gc/gradcheck.txt")));
}
