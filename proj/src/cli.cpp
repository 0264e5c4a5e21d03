#include "mawsd/cli.hpp"

#include "mawsd/errors.hpp"
#include "mawsd/eval.hpp"
#include "mawsd/oracle.hpp"
#include "mawsd/serialize.hpp"
#include "mawsd/synthetic.hpp"
#include "mawsd/training.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mawsd::cli {

namespace {

/// Keys beyond the architecture and training configs.
const json& data_defaults()
{
    static const json d = {
        {"corpus", ""},      // prepare: corpus to split
        {"train_data", ""},  // train: training corpus
        {"dev_data", ""},    // train: model selection corpus
        {"test_data", ""},   // train/eval: held-out corpus
        {"dev_ratio", 0.1},
        {"test_ratio", 0.1},
    };
    return d;
}

json pick(const json& cfg, const std::vector<std::string>& keys)
{
    json out = json::object();
    for (const auto& k : keys)
        if (cfg.contains(k)) out[k] = cfg.at(k);
    return out;
}

json typed_value(const std::string& key, const std::string& text, const json& like)
{
    auto bad = [&](const char* what) {
        return ConfigError("--set " + key + "=" + text + ": expected " + what);
    };
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad("true or false");
    }
    if (like.is_number_unsigned()) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last) throw bad("a non-negative integer");
        return v;
    }
    if (like.is_number_integer()) {
        long long v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last) throw bad("an integer");
        return v;
    }
    if (like.is_number_float()) {
        double v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last || !std::isfinite(v)) throw bad("a number");
        return v;
    }
    return text;
}

ArchitectureConfig arch_of(const json& cfg) { return ArchitectureConfig::from_json(pick(cfg, ArchitectureConfig::keys())); }
TrainConfig train_of(const json& cfg) { return TrainConfig::from_json(pick(cfg, TrainConfig::keys())); }

std::string path_key(const json& cfg, const char* key)
{
    return cfg.at(key).get<std::string>();
}

std::string name_of(const std::string& path) { return fs::path(path).stem().string(); }

void print_warnings(const SenseCorpus& c, const std::string& path, std::ostream& err)
{
    for (const auto& w : c.warnings) err << path << ": " << w << "\n";
}

SenseCorpus load_corpus(const std::string& path, std::ostream& err)
{
    auto c = parse_corpus_file(path);
    print_warnings(c, path, err);
    return c;
}

/// Corpus format when the file has a tab; otherwise one whitespace-tokenized
/// sentence per line with no POS or sense tags.
SenseCorpus load_sentences(const std::string& path, std::ostream& err)
{
    const std::string text = read_file(path);
    if (text.find('\t') != std::string::npos) return load_corpus(path, err);
    SenseCorpus c;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream words(line);
        Sentence s;
        s.id = static_cast<int>(c.sentences.size());
        for (std::string w; words >> w;) s.tokens.push_back({w, w, PosClass::kOther, ""});
        if (!s.tokens.empty()) c.sentences.push_back(std::move(s));
    }
    if (c.sentences.empty()) throw DataError(path + ": no sentences");
    return c;
}

struct LoadedCheckpoint {
    Checkpoint ckpt;
    SenseInventory inventory;
    WindowConfig window;
    std::string train_name;
};

LoadedCheckpoint open_checkpoint(const std::string& dir)
{
    if (dir.empty()) throw ConfigError("--checkpoint is required");
    LoadedCheckpoint out{load_checkpoint(dir), {}, {}, {}};
    const json& meta = out.ckpt.meta;
    if (!meta.contains("inventory")) throw DataError(dir + ": meta.json has no sense inventory");
    out.inventory = SenseInventory::from_json(meta.at("inventory"), out.ckpt.vocab.output.size());
    if (meta.contains("train_config")) out.window = TrainConfig::from_json(meta.at("train_config")).window();
    out.train_name = meta.value("train_name", std::string("?"));
    return out;
}

std::string json_number(double v) { return std::isfinite(v) ? json(v).dump() : "null"; }

// --- subcommands -----------------------------------------------------------------

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string out;
};

json resolve(const Common& c)
{
    auto sets = c.overrides;
    if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
    json cfg = resolve_config(c.config, sets);
    arch_of(cfg);
    train_of(cfg);
    return cfg;
}

int cmd_prepare(const Common& c, int synthetic, std::ostream& out, std::ostream& err)
{
    json cfg = resolve(c);
    const TrainConfig tc = train_of(cfg);
    const double dev = cfg.at("dev_ratio").get<double>();
    const double test = cfg.at("test_ratio").get<double>();
    if (dev < 0 || test < 0 || dev + test >= 1) throw ConfigError("dev_ratio + test_ratio must lie in [0, 1)");
    const std::string corpus_path = path_key(cfg, "corpus");
    if (synthetic <= 0 && corpus_path.empty()) throw ConfigError("prepare: give --synthetic N or --set corpus=PATH");
    if (c.out.empty()) throw ConfigError("prepare: --out is required");

    SenseCorpus corpus;
    std::optional<SyntheticCorpus> gen;
    if (synthetic > 0) {
        gen = generate_synthetic({.sentences = synthetic, .seed = tc.seed});
        corpus = gen->corpus;
    } else {
        corpus = load_corpus(corpus_path, err);
    }

    const SplitManifest split =
        split_corpus(static_cast<int>(corpus.sentences.size()), tc.seed, {1.0 - dev - test, dev, test});
    const fs::path dir(c.out);
    auto write_part = [&](const char* name, const std::vector<int>& ids) {
        const fs::path p = dir / (std::string(name) + ".corpus");
        write_file_atomic(p, serialize_corpus(select_sentences(corpus, ids)));
        return p.string();
    };
    cfg["train_data"] = write_part("train", split.train);
    cfg["dev_data"] = split.dev.empty() ? "" : write_part("dev", split.dev);
    cfg["test_data"] = split.test.empty() ? "" : write_part("test", split.test);
    write_file_atomic(dir / "split.json", split.to_json().dump(2) + "\n");
    if (gen) {
        json planted = json::array();
        for (std::size_t i = 0; i < gen->target_positions.size(); ++i)
            planted.push_back({{"sentence", i}, {"target", gen->target_positions[i]}, {"cue", gen->cue_positions[i]}});
        write_file_atomic(dir / "synthetic.json", planted.dump(2) + "\n");
    }
    write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");
    out << "prepared " << corpus.sentences.size() << " sentences: train " << split.train.size() << ", dev "
        << split.dev.size() << ", test " << split.test.size() << " -> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const Common& c, std::ostream& out, std::ostream& err)
{
    json cfg = resolve(c);
    const ArchitectureConfig arch = arch_of(cfg);
    const TrainConfig tc = train_of(cfg);
    const std::string train_path = path_key(cfg, "train_data");
    if (train_path.empty()) throw ConfigError("train: train_data is not set (--config or --set train_data=PATH)");
    const std::string dev_path = path_key(cfg, "dev_data");
    const std::string test_path = path_key(cfg, "test_data");

    const SenseCorpus train_set = load_corpus(train_path, err);
    const SenseCorpus dev_set = dev_path.empty() ? SenseCorpus{} : load_corpus(dev_path, err);
    const SenseCorpus test_set = test_path.empty() ? SenseCorpus{} : load_corpus(test_path, err);
    if (train_set.tagged_count() == 0) throw DataError(train_path + ": no sense-tagged tokens");

    const fs::path dir(c.out.empty() ? "run" : c.out);
    write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");

    const Vocabulary vocab = build_vocab(train_set, tc.min_count);
    const SenseInventory inv = SenseInventory::build(train_set, vocab.output);
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& e) {
        out << "epoch " << e.epoch << " loss " << e.loss;
        if (!std::isnan(e.dev_f1)) out << " dev_f1 " << e.dev_f1;
        out << "\n";
    };
    TrainResult r = train(train_set, dev_set, vocab, inv, arch, tc, hooks);

    write_file_atomic(dir / "train_log.csv", r.log.to_csv());
    write_file_atomic(dir / "weights.csv", r.log.weights_csv());
    if (!r.retrain_log.epochs.empty()) write_file_atomic(dir / "retrain_log.csv", r.retrain_log.to_csv());
    json meta = {{"train_config", tc.to_json()},
                 {"inventory", inv.to_json()},
                 {"train_name", name_of(train_path)},
                 {"best_epoch", r.best_epoch},
                 {"best_dev_f1", json::parse(json_number(r.best_dev_f1))}};
    save_checkpoint(dir / "best", r.model, vocab, meta);

    std::vector<TableRow> rows;
    const EvalOptions eo{.window = tc.window()};
    const std::string model_name(to_string(arch.architecture));
    if (!dev_set.sentences.empty() && dev_set.tagged_count() > 0)
        rows.push_back({model_name, name_of(train_path), name_of(dev_path), evaluate(r.model, dev_set, vocab, inv, eo)});
    if (!test_set.sentences.empty() && test_set.tagged_count() > 0)
        rows.push_back({model_name, name_of(train_path), name_of(test_path), evaluate(r.model, test_set, vocab, inv, eo)});
    if (!rows.empty()) {
        json rep = json::array();
        for (const auto& row : rows)
            rep.push_back({{"model", row.model}, {"train", row.train}, {"test", row.test}, {"report", row.report.to_json()}});
        const std::string table = format_table(rows);
        write_file_atomic(dir / "report.json", rep.dump(2) + "\n");
        write_file_atomic(dir / "report.txt", table);
        out << table;
    }
    out << "best epoch " << r.best_epoch << "; checkpoint " << (dir / "best").string() << "\n";
    if (r.diverged) {
        err << "training diverged: " << r.divergence << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& test_flag, bool mfs, std::ostream& out, std::ostream& err)
{
    json cfg = resolve(c);
    const std::string test_path = test_flag.empty() ? path_key(cfg, "test_data") : test_flag;
    if (test_path.empty()) throw ConfigError("eval: --test is required");
    LoadedCheckpoint lc = open_checkpoint(c.checkpoint);
    const SenseCorpus test_set = load_corpus(test_path, err);
    if (test_set.tagged_count() == 0) throw DataError(test_path + ": no sense-tagged tokens");

    EvalOptions eo{.window = lc.window};
    std::vector<TableRow> rows;
    rows.push_back({std::string(to_string(lc.ckpt.model.config.architecture)), lc.train_name, name_of(test_path),
                    evaluate(lc.ckpt.model, test_set, lc.ckpt.vocab, lc.inventory, eo)});
    if (mfs) {
        eo.most_frequent_baseline = true;
        rows.push_back({"most-frequent-sense", lc.train_name, name_of(test_path),
                        evaluate(lc.ckpt.model, test_set, lc.ckpt.vocab, lc.inventory, eo)});
    }
    const std::string table = format_table(rows);
    out << table;
    if (!c.out.empty()) {
        json rep = json::array();
        for (const auto& row : rows)
            rep.push_back({{"model", row.model}, {"train", row.train}, {"test", row.test}, {"report", row.report.to_json()}});
        write_file_atomic(fs::path(c.out) / "report.json", rep.dump(2) + "\n");
        write_file_atomic(fs::path(c.out) / "report.txt", table);
    }
    return kExitOk;
}

int cmd_dump(const Common& c, const std::string& sentence_path, int target, std::ostream& out, std::ostream& err)
{
    resolve(c);
    if (sentence_path.empty()) throw ConfigError("dump-attn: --sentence is required");
    LoadedCheckpoint lc = open_checkpoint(c.checkpoint);
    const SenseCorpus sentences = load_sentences(sentence_path, err);
    const fs::path dir(c.out.empty() ? "attention" : c.out);
    const bool many = sentences.sentences.size() > 1;
    for (std::size_t i = 0; i < sentences.sentences.size(); ++i) {
        const auto dump = collect_attention(lc.ckpt.model, lc.ckpt.vocab, sentences.sentences[i], target, lc.window);
        const fs::path where = many ? dir / ("s" + std::to_string(i)) : dir;
        write_attention(where, dump);
        out << where.string() << ": target " << dump.target_position << ", fused argmax "
            << dump.fused_argmax_at_target() << "\n";
    }
    return kExitOk;
}

int cmd_gradcheck(const Common& c, std::ostream& out)
{
    resolve(c);
    auto rows = op_gradient_suite();
    auto archs = architecture_gradient_suite();
    rows.insert(rows.end(), archs.begin(), archs.end());
    const std::string table = format_grad_table(rows);
    out << table;
    if (!c.out.empty()) write_file_atomic(fs::path(c.out) / "gradcheck.txt", table);
    for (const auto& r : rows)
        if (!r.report.passed) return kExitNumeric;
    return kExitOk;
}

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--set", c.overrides, "KEY=VALUE override (repeatable)");
    sub->add_option("--seed", c.seed, "Seed override");
    sub->add_option("--checkpoint", c.checkpoint, "Checkpoint directory");
    sub->add_option("--out", c.out, "Output directory");
}

} // namespace

json default_config()
{
    json cfg = ArchitectureConfig{}.to_json();
    cfg.update(TrainConfig{}.to_json());
    cfg.update(data_defaults());
    return cfg;
}

json resolve_config(const std::string& config_path, const std::vector<std::string>& overrides)
{
    json cfg = default_config();
    if (!config_path.empty()) {
        json file;
        try {
            file = read_json(config_path);
        } catch (const Error& e) {
            throw ConfigError(std::string("--config: ") + e.what());
        }
        if (!file.is_object()) throw ConfigError(config_path + ": expected a JSON object");
        for (const auto& [k, v] : file.items()) {
            if (!cfg.contains(k)) throw ConfigError(config_path + ": unknown key '" + k + "'");
            cfg[k] = v;
        }
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + kv + ": expected KEY=VALUE");
        const std::string key = kv.substr(0, eq);
        if (!cfg.contains(key)) throw ConfigError("--set: unknown key '" + key + "'");
        cfg[key] = typed_value(key, kv.substr(eq + 1), default_config().at(key));
    }
    return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multi-attention encoder-decoder for word sense disambiguation", "mawsd"};
    app.require_subcommand(1);

    Common common;
    int synthetic = 0;
    std::string test_path;
    bool mfs = false;
    std::string sentence_path;
    int target = -1;

    auto* prepare = app.add_subcommand("prepare", "Split a corpus (or a generated one) into train/dev/test");
    add_common(prepare, common);
    prepare->add_option("--synthetic", synthetic, "Generate N synthetic sentences instead of reading a corpus");
    auto* train_cmd = app.add_subcommand("train", "Train a model into a run directory");
    add_common(train_cmd, common);
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a test corpus");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--test", test_path, "Test corpus");
    eval_cmd->add_flag("--mfs", mfs, "Add a most-frequent-sense baseline row");
    auto* dump_cmd = app.add_subcommand("dump-attn", "Export attention matrices for sentences");
    add_common(dump_cmd, common);
    dump_cmd->add_option("--sentence", sentence_path, "Sentence file (corpus format or plain text)");
    dump_cmd->add_option("--target", target, "Target token position (default: first tagged token)");
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and architecture");
    add_common(grad_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(common, synthetic, out, err);
        if (train_cmd->parsed()) return cmd_train(common, out, err);
        if (eval_cmd->parsed()) return cmd_eval(common, test_path, mfs, out, err);
        if (dump_cmd->parsed()) return cmd_dump(common, sentence_path, target, out, err);
        return cmd_gradcheck(common, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"mawsd"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace mawsd::cli
