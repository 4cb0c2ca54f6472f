#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bavit/data.hpp"
#include "bavit/error.hpp"
#include "bavit/loss.hpp"
#include "bavit/net.hpp"
#include "bavit/postproc.hpp"

namespace bavit {

/// lr(epoch) = base_lr * gamma^floor(epoch / step_size).
struct LrSchedule {
    double base_lr = 1e-3;
    int step_size = 30;
    double gamma = 0.1;

    void validate() const;
    double lr_at(int epoch) const;
};

inline double lr_at(const LrSchedule& schedule, int epoch) { return schedule.lr_at(epoch); }

struct AdamHyperparams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimState {
    std::int64_t step = 0;
    int epoch = 0;  // completed epochs
    AdamHyperparams hyper;
    ModelParams<float> first_moment;
    ModelParams<float> second_moment;

    static OptimState create(const ModelConfig& config, AdamHyperparams hyper = {});
};

/// Bias-corrected Adam. Increments state.step before the update. Throws
/// NumericError naming the first tensor holding a non-finite gradient.
void adam_step(ModelParams<float>& params, const GradientSet<float>& grads, OptimState& state, double lr);

/// Scales grads so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(GradientSet<float>& grads, double max_norm);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // training tokens, measured during the epoch
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;

    /// JSON rows; wall time is omitted unless requested so reports stay reproducible.
    std::string to_json(bool include_wall_time = false) const;
};

struct TrainOptions {
    int epochs = 100;
    LrSchedule schedule;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double clip_norm = 1.0;  // <= 0 disables clipping
    ClassWeights class_weights;
    /// Called after every epoch; returning false stops training early.
    std::function<bool(const EpochStats&, const ModelParams<float>&)> on_epoch;
};

struct StepStats {
    double loss = 0.0;
    std::int64_t correct = 0;
    std::int64_t tokens = 0;
    double grad_norm = 0.0;
};

/// Raised when the loss turns non-finite; carries the state from before the failing step.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, ModelParams<float> params, OptimState state, TrainReport report)
        : NumericError(what), params_(std::move(params)), state_(std::move(state)), report_(std::move(report)) {}

    const ModelParams<float>& last_good_params() const { return params_; }
    const OptimState& last_good_state() const { return state_; }
    const TrainReport& report() const { return report_; }

private:
    ModelParams<float> params_;
    OptimState state_;
    TrainReport report_;
};

/// Owns params and optimizer state; one writer.
class Trainer {
public:
    Trainer(ModelConfig config, TrainOptions options);
    Trainer(ModelConfig config, TrainOptions options, ModelParams<float> params, OptimState state);

    /// forward -> accumulative_ce_grad -> backward -> clip -> adam_step, at the
    /// learning rate of the current epoch.
    StepStats step(const Batch& batch);
    EpochStats run_epoch(const std::vector<AnnotatedSample>& samples);
    /// Runs until options.epochs epochs are complete or on_epoch returns false.
    TrainReport run(const std::vector<AnnotatedSample>& samples);

    const ModelConfig& config() const { return config_; }
    const TrainOptions& options() const { return options_; }
    const ModelParams<float>& params() const { return params_; }
    const OptimState& state() const { return state_; }
    const TrainReport& report() const { return report_; }

private:
    ModelConfig config_;
    TrainOptions options_;
    ModelParams<float> params_;
    OptimState state_;
    TrainReport report_;
};

struct TrainResult {
    ModelParams<float> params;
    OptimState state;
    TrainReport report;
};

TrainResult train(const ModelConfig& config, const std::vector<AnnotatedSample>& samples,
                  const TrainOptions& options);

/// Shuffle seed used for a given epoch.
std::uint64_t epoch_shuffle_seed(std::uint64_t seed, int epoch);

// ---- evaluation ------------------------------------------------------------

/// Per-token P(BG), P(FG) for each image; rows grouped by image.
Matrix<float> predict_probs(const ModelParams<float>& params, const ModelConfig& config, const Batch& batch);
/// Argmax labels for one image (ties go to FG).
TokenLabelMap predict_labels(const ModelParams<float>& params, const ModelConfig& config, const FloatImage& image);

struct EvalReport {
    std::int64_t tokens = 0;
    std::int64_t true_fg = 0;
    std::int64_t true_bg = 0;
    std::int64_t false_fg = 0;  // BG predicted as FG
    std::int64_t false_bg = 0;  // FG predicted as BG

    double accuracy() const;
    double fg_precision() const;
    double fg_recall() const;
    double bg_precision() const;
    double bg_recall() const;
    void add(const TokenLabelMap& predicted, const TokenLabelMap& truth);
    std::string to_json() const;
};

/// Micro-averaged token accuracy; argmax prediction. Post-processing is applied
/// only if cca is given.
EvalReport evaluate_report(const ModelParams<float>& params, const ModelConfig& config,
                           const std::vector<AnnotatedSample>& samples, int batch_size = 32,
                           const std::optional<CcaConfig>& cca = std::nullopt);

double evaluate(const ModelParams<float>& params, const ModelConfig& config,
                const std::vector<AnnotatedSample>& samples);

/// Token accuracy of fixed predictions against labels.
double token_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

}  // namespace bavit
