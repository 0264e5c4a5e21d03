#include "mawsd/training.hpp"

#include "mawsd/errors.hpp"
#include "mawsd/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace mawsd {

std::string_view to_string(OptimizerKind o)
{
    return o == OptimizerKind::kSgd ? "sgd" : "adam";
}

std::string_view to_string(LossScope s)
{
    return s == LossScope::kSequence ? "sequence" : "target";
}

OptimizerKind parse_optimizer(std::string_view name)
{
    if (name == "sgd") return OptimizerKind::kSgd;
    if (name == "adam") return OptimizerKind::kAdam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

LossScope parse_loss_scope(std::string_view name)
{
    if (name == "sequence") return LossScope::kSequence;
    if (name == "target") return LossScope::kTarget;
    throw ConfigError("unknown loss_scope '" + std::string(name) + "' (expected sequence or target)");
}

// --- config ----------------------------------------------------------------------

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (!(decoder_lr_ratio >= 1.0)) throw ConfigError("decoder_lr_ratio must be >= 1");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    if (context < 0) throw ConfigError("context must be >= 0");
    if (max_length < 1) throw ConfigError("max_length must be >= 1");
}

const std::vector<std::string>& TrainConfig::keys()
{
    static const std::vector<std::string> k{"learning_rate", "batch_size",     "epochs",    "clip_norm",
                                            "decoder_lr_ratio", "optimizer",   "seed",      "loss_scope",
                                            "retrain_on_dev", "min_count",     "context",   "window_mode",
                                            "max_length"};
    return k;
}

nlohmann::json TrainConfig::to_json() const
{
    return {
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"clip_norm", clip_norm},
        {"decoder_lr_ratio", decoder_lr_ratio},
        {"optimizer", to_string(optimizer)},
        {"seed", seed},
        {"loss_scope", to_string(loss_scope)},
        {"retrain_on_dev", retrain_on_dev},
        {"min_count", min_count},
        {"context", context},
        {"window_mode", window_mode == WindowMode::kAroundTarget ? "around-target" : "max-length"},
        {"max_length", max_length},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
    const auto& known = keys();
    for (const auto& [key, value] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown train config key '" + key + "'");
    TrainConfig c;
    try {
        if (doc.contains("learning_rate")) c.learning_rate = doc["learning_rate"].get<double>();
        if (doc.contains("batch_size")) c.batch_size = doc["batch_size"].get<int>();
        if (doc.contains("epochs")) c.epochs = doc["epochs"].get<int>();
        if (doc.contains("clip_norm")) c.clip_norm = doc["clip_norm"].get<double>();
        if (doc.contains("decoder_lr_ratio")) c.decoder_lr_ratio = doc["decoder_lr_ratio"].get<double>();
        if (doc.contains("optimizer")) c.optimizer = parse_optimizer(doc["optimizer"].get<std::string>());
        if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("loss_scope")) c.loss_scope = parse_loss_scope(doc["loss_scope"].get<std::string>());
        if (doc.contains("retrain_on_dev")) c.retrain_on_dev = doc["retrain_on_dev"].get<bool>();
        if (doc.contains("min_count")) c.min_count = doc["min_count"].get<int>();
        if (doc.contains("context")) c.context = doc["context"].get<int>();
        if (doc.contains("window_mode")) {
            const auto m = doc["window_mode"].get<std::string>();
            if (m == "around-target")
                c.window_mode = WindowMode::kAroundTarget;
            else if (m == "max-length")
                c.window_mode = WindowMode::kMaxLength;
            else
                throw ConfigError("unknown window_mode '" + m + "' (expected around-target or max-length)");
        }
        if (doc.contains("max_length")) c.max_length = doc["max_length"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// --- loss and updates -------------------------------------------------------------

Eigen::ArrayXXd loss_mask(const Batch& batch, LossScope scope)
{
    if (scope == LossScope::kSequence) return batch.target_mask;
    Eigen::ArrayXXd m = Eigen::ArrayXXd::Zero(batch.target_mask.rows(), batch.target_mask.cols());
    for (int r = 0; r < batch.size(); ++r) m(r, batch.target_positions[static_cast<std::size_t>(r)]) = 1.0;
    return m;
}

Tensor compute_loss(const Tensor& log_probs, const IndexGrid& targets, const Eigen::ArrayXXd& mask)
{
    if (log_probs.rank() != 3 || log_probs.dim(0) != targets.rows() || log_probs.dim(1) != targets.cols())
        throw DimensionError("compute_loss: log-probs " + shape_string(log_probs.shape()) + " do not match targets [" +
                             std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) + "]");
    if (mask.rows() != targets.rows() || mask.cols() != targets.cols())
        throw DimensionError("compute_loss: mask shape does not match targets");
    const double count = mask.sum();
    if (count <= 0.0) throw UsageError("compute_loss: every position is masked");
    // Row-major flattening to match the tensor layout.
    Array flat(mask.size());
    for (Index r = 0; r < mask.rows(); ++r)
        for (Index c = 0; c < mask.cols(); ++c) flat(r * mask.cols() + c) = mask(r, c);
    Tensor m = Tensor::from({mask.rows(), mask.cols()}, std::move(flat));
    return scale(sum(mul(gather_last(log_probs, targets), m)), -1.0 / count);
}

double gradient_norm(const NamedTensors& params)
{
    double total = 0.0;
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        const Array g = t.grad();
        if (!g.allFinite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
        total += g.square().sum();
    }
    return std::sqrt(total);
}

double clip_gradients(const NamedTensors& params, double max_norm)
{
    if (!(max_norm > 0.0)) throw ConfigError("clip norm must be > 0");
    const double norm = gradient_norm(params);
    const double factor = norm > max_norm ? max_norm / norm : 1.0;
    if (factor < 1.0)
        for (const auto& [name, t] : params) {
            Tensor handle = t;
            if (handle.has_grad()) handle.mutable_grad() *= factor;
        }
    return factor;
}

void sgd_step(const NamedTensors& params, double lr, double decoder_lr_ratio, const ParamGroup& is_decoder)
{
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        if (handle.has_grad()) {
            const double rate = is_decoder(name) ? lr * decoder_lr_ratio : lr;
            handle.mutable_value() -= rate * handle.grad();
        }
        handle.zero_grad();
    }
}

Adam::Adam(double lr, double decoder_lr_ratio, ParamGroup is_decoder, double beta1, double beta2, double eps)
    : lr_(lr), ratio_(decoder_lr_ratio), is_decoder_(std::move(is_decoder)), beta1_(beta1), beta2_(beta2), eps_(eps)
{
}

void Adam::step(const NamedTensors& params)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        const Array g = handle.grad();
        auto [it, fresh] = moments_.try_emplace(name, Array::Zero(g.size()), Array::Zero(g.size()));
        auto& [m, v] = it->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.square();
        const double rate = is_decoder_(name) ? lr_ * ratio_ : lr_;
        handle.mutable_value() -= rate * (m / c1) / ((v / c2).sqrt() + eps_);
        handle.zero_grad();
    }
}

// --- logs ------------------------------------------------------------------------

namespace {

std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

std::string TrainLog::to_csv(bool with_seconds) const
{
    std::ostringstream out;
    out << "epoch,loss,dev_f1,w1,w2,w3" << (with_seconds ? ",seconds" : "") << "\n";
    for (const auto& e : epochs) {
        out << e.epoch << "," << fmt(e.loss) << "," << fmt(e.dev_f1) << "," << fmt(e.weights[0]) << ","
            << fmt(e.weights[1]) << "," << fmt(e.weights[2]);
        if (with_seconds) out << "," << fmt(e.seconds);
        out << "\n";
    }
    return out.str();
}

std::string TrainLog::weights_csv() const
{
    std::ostringstream out;
    out << "epoch,w1,w2,w3\n";
    out << 0 << "," << fmt(initial_weights[0]) << "," << fmt(initial_weights[1]) << "," << fmt(initial_weights[2])
        << "\n";
    for (const auto& e : epochs)
        out << e.epoch << "," << fmt(e.weights[0]) << "," << fmt(e.weights[1]) << "," << fmt(e.weights[2]) << "\n";
    return out.str();
}

// --- loop ------------------------------------------------------------------------

Model clone_model(const Model& model)
{
    Model copy = Model::create(model.config, model.sizes, 0);
    NamedTensors fresh;
    for (const auto& [name, t] : model.parameters()) fresh.emplace_back(name, t.detach());
    copy.load_parameters(fresh);
    const auto w = model.fusion_values();
    copy.fusion.w1.mutable_value()(0) = w[0];
    copy.fusion.w2.mutable_value()(0) = w[1];
    copy.fusion.w3.mutable_value()(0) = w[2];
    return copy;
}

namespace {

std::array<double, 3> weights_of(const Model& m)
{
    const auto w = m.fusion_values();
    return {w[0], w[1], w[2]};
}

std::vector<Array> snapshot(const NamedTensors& params)
{
    std::vector<Array> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t.value());
    return out;
}

void restore(const NamedTensors& params, const std::vector<Array>& values)
{
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor handle = params[i].second;
        handle.mutable_value() = values[i];
        handle.zero_grad();
    }
}

// Training draws from a stream distinct from the initialisation stream.
std::uint64_t train_stream_seed(std::uint64_t seed)
{
    return seed ^ 0x9E3779B97F4A7C15ULL;
}

} // namespace

TrainResult train_model(Model model, const SenseCorpus& train, const SenseCorpus& dev, const Vocabulary& vocab,
                        const SenseInventory& inventory, const TrainConfig& config, const TrainHooks& hooks)
{
    config.validate();
    std::vector<Instance> instances = make_instances(train);
    if (instances.empty()) throw UsageError("training corpus has no sense-tagged tokens");
    const bool has_dev = !make_instances(dev).empty();
    EvalOptions eval_options;
    eval_options.window = config.window();

    std::mt19937_64 rng(train_stream_seed(config.seed));
    const NamedTensors params = model.parameters();
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        handle.zero_grad();
    }
    Adam adam(config.learning_rate, config.decoder_lr_ratio, hooks.is_decoder);

    TrainResult result;
    result.log.initial_weights = weights_of(model);
    result.best_dev_f1 = -1.0;
    std::vector<Array> best = snapshot(params);
    std::vector<Array> last_good = best;
    bool have_best = false;

    for (int epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(instances.begin(), instances.end(), rng);
        const auto batches = make_batches(train, instances, vocab, config.batch_size, config.window());
        double total = 0.0;
        for (const auto& batch : batches) {
            ForwardOptions fo;
            fo.rng = &rng;
            fo.record_attention = false;
            const ForwardResult fr = forward(model, batch, fo);
            const Tensor loss = compute_loss(fr.log_probs, batch.target, loss_mask(batch, config.loss_scope));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                result.diverged = true;
                result.divergence = "loss became non-finite at epoch " + std::to_string(epoch);
                break;
            }
            loss.backward();
            try {
                clip_gradients(params, config.clip_norm);
            } catch (const NumericError& e) {
                result.diverged = true;
                result.divergence = std::string(e.what()) + " at epoch " + std::to_string(epoch);
                break;
            }
            if (config.optimizer == OptimizerKind::kSgd)
                sgd_step(params, config.learning_rate, config.decoder_lr_ratio, hooks.is_decoder);
            else
                adam.step(params);
            total += value;
        }
        if (result.diverged) break;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = total / static_cast<double>(batches.size());
        rec.dev_f1 = has_dev ? evaluate(model, dev, vocab, inventory, eval_options).all().f1
                             : std::numeric_limits<double>::quiet_NaN();
        rec.weights = weights_of(model);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        last_good = snapshot(params);
        if (!has_dev || rec.dev_f1 > result.best_dev_f1) {
            best = last_good;
            have_best = true;
            result.best_epoch = epoch;
            result.best_dev_f1 = has_dev ? rec.dev_f1 : std::numeric_limits<double>::quiet_NaN();
        }
    }
    restore(params, have_best ? best : last_good);
    result.model = std::move(model);
    return result;
}

TrainResult train(const SenseCorpus& train_corpus, const SenseCorpus& dev, const Vocabulary& vocab,
                  const SenseInventory& inventory, const ArchitectureConfig& arch, const TrainConfig& config,
                  const TrainHooks& hooks)
{
    const VocabSizes sizes{vocab.words.size(), vocab.pos.size(), vocab.output.size()};
    TrainResult result =
        train_model(Model::create(arch, sizes, config.seed), train_corpus, dev, vocab, inventory, config, hooks);
    if (config.retrain_on_dev && !result.diverged && result.best_epoch > 0) {
        SenseCorpus combined = train_corpus;
        combined.sentences.insert(combined.sentences.end(), dev.sentences.begin(), dev.sentences.end());
        TrainConfig again = config;
        again.epochs = result.best_epoch;
        TrainResult final_run =
            train_model(Model::create(arch, sizes, config.seed), combined, SenseCorpus{}, vocab, inventory, again, hooks);
        result.model = std::move(final_run.model);
        result.retrain_log = std::move(final_run.log);
        result.diverged = final_run.diverged;
        result.divergence = final_run.divergence;
    }
    return result;
}

} // namespace mawsd
