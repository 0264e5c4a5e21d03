#ifndef MAWSD_TRAINING_HPP
#define MAWSD_TRAINING_HPP

#include "mawsd/data.hpp"
#include "mawsd/eval.hpp"
#include "mawsd/model.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mawsd {

enum class OptimizerKind { kSgd, kAdam };
enum class LossScope { kSequence, kTarget };

std::string_view to_string(OptimizerKind o);
std::string_view to_string(LossScope s);
OptimizerKind parse_optimizer(std::string_view name);
LossScope parse_loss_scope(std::string_view name);

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 10;
    int epochs = 50;
    double clip_norm = 50.0;
    double decoder_lr_ratio = 5.0;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    std::uint64_t seed = 1;
    /// Sequence: every unmasked output token; target: the sense slot only.
    LossScope loss_scope = LossScope::kSequence;
    /// After selection, retrain from scratch on train+dev for the best epoch count.
    bool retrain_on_dev = false;
    int min_count = 1;
    int context = 25;
    WindowMode window_mode = WindowMode::kAroundTarget;
    int max_length = 50;

    WindowConfig window() const { return {context, window_mode, max_length}; }

    /// Throws ConfigError naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& doc);
    static const std::vector<std::string>& keys();
};

/// [B x T] mask over output positions for the chosen loss.
Eigen::ArrayXXd loss_mask(const Batch& batch, LossScope scope);

/// Mean of -log p(target) over positions where mask is 1.
/// Throws UsageError when nothing is unmasked.
Tensor compute_loss(const Tensor& log_probs, const IndexGrid& targets, const Eigen::ArrayXXd& mask);

/// Rescales all gradients by min(1, max_norm / ||g||) and returns the factor.
/// Throws NumericError naming the first non-finite parameter.
double clip_gradients(const NamedTensors& params, double max_norm);

double gradient_norm(const NamedTensors& params);

using ParamGroup = std::function<bool(const std::string&)>;

/// theta -= lr * g (lr * ratio for decoder-side names); gradients are zeroed.
void sgd_step(const NamedTensors& params, double lr, double decoder_lr_ratio,
              const ParamGroup& is_decoder = is_decoder_param);

class Adam {
public:
    Adam(double lr, double decoder_lr_ratio, ParamGroup is_decoder = is_decoder_param, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);

    /// One update; gradients are zeroed.
    void step(const NamedTensors& params);

private:
    double lr_;
    double ratio_;
    ParamGroup is_decoder_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
    std::map<std::string, std::pair<Array, Array>> moments_;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double dev_f1 = 0.0;  // NaN without a dev set
    std::array<double, 3> weights{};
    double seconds = 0.0;
};

struct TrainLog {
    std::array<double, 3> initial_weights{};
    std::vector<EpochRecord> epochs;

    /// `epoch,loss,dev_f1,w1,w2,w3,seconds`; the timing column can be dropped
    /// for run-to-run comparison.
    std::string to_csv(bool with_seconds = true) const;
    /// `epoch,w1,w2,w3` starting with the epoch-0 initial values.
    std::string weights_csv() const;
};

struct TrainResult {
    Model model;  // best by dev F1 (last epoch without a dev set)
    TrainLog log;
    int best_epoch = 0;
    double best_dev_f1 = 0.0;
    bool diverged = false;
    std::string divergence;
    /// Set when retrain_on_dev ran.
    TrainLog retrain_log;
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    ParamGroup is_decoder = is_decoder_param;
};

/// Creates a model from `arch` and the seed, then optimises it.
TrainResult train(const SenseCorpus& train, const SenseCorpus& dev, const Vocabulary& vocab,
                  const SenseInventory& inventory, const ArchitectureConfig& arch, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Same, starting from the given parameters.
TrainResult train_model(Model model, const SenseCorpus& train, const SenseCorpus& dev, const Vocabulary& vocab,
                        const SenseInventory& inventory, const TrainConfig& config, const TrainHooks& hooks = {});

/// Deep copy of a model's parameters.
Model clone_model(const Model& model);

} // namespace mawsd

#endif // MAWSD_TRAINING_HPP
