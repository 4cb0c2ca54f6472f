#include "bavit/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace bavit {

void LrSchedule::validate() const {
    if (!(base_lr > 0.0)) throw std::invalid_argument("lr schedule: base_lr must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("lr schedule: gamma must be in (0,1]");
    if (step_size < 1) throw std::invalid_argument("lr schedule: step_size must be >= 1");
}

double LrSchedule::lr_at(int epoch) const {
    if (epoch < 0) throw std::invalid_argument("lr schedule: epoch must be >= 0");
    return base_lr * std::pow(gamma, epoch / step_size);
}

OptimState OptimState::create(const ModelConfig& config, AdamHyperparams hyper) {
    OptimState s;
    s.hyper = hyper;
    s.first_moment = ModelParams<float>::zeros(config);
    s.second_moment = ModelParams<float>::zeros(config);
    return s;
}

namespace {

template <typename T>
std::vector<Matrix<T>*> tensors(ModelParams<T>& p) {
    std::vector<Matrix<T>*> out;
    p.visit([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
    return out;
}

template <typename T>
std::vector<const Matrix<T>*> tensors(const ModelParams<T>& p) {
    std::vector<const Matrix<T>*> out;
    p.visit([&](const std::string&, const Matrix<T>& m) { out.push_back(&m); });
    return out;
}

template <typename T>
std::vector<std::string> tensor_names(const ModelParams<T>& p) {
    std::vector<std::string> out;
    p.visit([&](const std::string& name, const Matrix<T>&) { out.push_back(name); });
    return out;
}

}  // namespace

void adam_step(ModelParams<float>& params, const GradientSet<float>& grads, OptimState& state, double lr) {
    auto p = tensors(params);
    const auto g = tensors(grads);
    auto m = tensors(state.first_moment);
    auto v = tensors(state.second_moment);
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw GeometryError("adam: gradient/moment sets are not congruent with params");
    }
    const auto names = tensor_names(params);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]->size() != g[i]->size() || p[i]->size() != m[i]->size() || p[i]->size() != v[i]->size()) {
            throw GeometryError("adam: shape mismatch in " + names[i]);
        }
        if (!g[i]->allFinite()) throw NumericError("adam: non-finite gradient in " + names[i]);
    }

    state.step += 1;
    const double b1 = state.hyper.beta1;
    const double b2 = state.hyper.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const auto fb1 = static_cast<float>(b1);
    const auto fb2 = static_cast<float>(b2);
    const auto step_size = static_cast<float>(lr / bias1);
    const auto inv_sqrt_bias2 = static_cast<float>(1.0 / std::sqrt(bias2));
    const auto eps = static_cast<float>(state.hyper.eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
        float* pd = p[i]->data();
        const float* gd = g[i]->data();
        float* md = m[i]->data();
        float* vd = v[i]->data();
        for (Eigen::Index j = 0; j < p[i]->size(); ++j) {
            md[j] = fb1 * md[j] + (1.0f - fb1) * gd[j];
            vd[j] = fb2 * vd[j] + (1.0f - fb2) * gd[j] * gd[j];
            // m_hat / (sqrt(v_hat) + eps) with the bias corrections folded in
            pd[j] -= step_size * md[j] / (std::sqrt(vd[j]) * inv_sqrt_bias2 + eps);
        }
    }
}

double clip_grad_norm(GradientSet<float>& grads, double max_norm) {
    double sq = 0.0;
    grads.visit([&](const std::string&, const Matrix<float>& m) { sq += m.cast<double>().squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const auto factor = static_cast<float>(max_norm / (norm + 1e-6));
        grads.visit([&](const std::string&, Matrix<float>& m) { m *= factor; });
    }
    return norm;
}

std::string TrainReport::to_json(bool include_wall_time) const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json row{{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}, {"lr", e.lr}};
        if (include_wall_time) row["wall_seconds"] = e.wall_seconds;
        rows.push_back(row);
    }
    return nlohmann::json{{"epochs", rows}}.dump(2) + "\n";
}

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, int epoch) {
    // splitmix64 finalizer over (seed, epoch)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Trainer::Trainer(ModelConfig config, TrainOptions options)
    : Trainer(config, options, init_params<float>(config, options.seed), OptimState::create(config)) {}

Trainer::Trainer(ModelConfig config, TrainOptions options, ModelParams<float> params, OptimState state)
    : config_(config), options_(std::move(options)), params_(std::move(params)), state_(std::move(state)) {
    config_.validate();
    options_.schedule.validate();
    if (options_.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (options_.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
}

StepStats Trainer::step(const Batch& batch) {
    if (batch.grid.token_count() != config_.tokens() || batch.grid.image_width() != config_.image_size) {
        throw GeometryError("train: batch grid does not match model config");
    }
    auto fwd = forward(params_, config_, batch, true);
    if (!fwd.logits.allFinite()) {
        throw DivergenceError("train: non-finite logits at step " + std::to_string(state_.step + 1), params_, state_,
                              report_);
    }
    const Matrix<float> probs = softmax_tokens(fwd.logits);
    const auto loss = accumulative_ce(probs, batch.labels, options_.class_weights);
    if (!std::isfinite(loss.value)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(state_.step + 1), params_, state_,
                              report_);
    }
    StepStats stats;
    stats.loss = loss.value;
    stats.tokens = static_cast<std::int64_t>(batch.labels.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const std::uint8_t pred = probs(i, kForeground) >= probs(i, kBackground) ? 1 : 0;
        stats.correct += pred == batch.labels[static_cast<std::size_t>(i)];
    }

    const Matrix<float> d_logits = accumulative_ce_grad(fwd.logits, batch.labels, options_.class_weights);
    GradientSet<float> grads = backward(params_, fwd.cache, d_logits);
    stats.grad_norm = clip_grad_norm(grads, options_.clip_norm);
    ModelParams<float> next = params_;
    OptimState next_state = state_;
    try {
        adam_step(next, grads, next_state, options_.schedule.lr_at(state_.epoch));
    } catch (const NumericError& e) {
        throw DivergenceError(e.what(), params_, state_, report_);
    }
    params_ = std::move(next);
    state_ = std::move(next_state);
    return stats;
}

EpochStats Trainer::run_epoch(const std::vector<AnnotatedSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("train: no training samples");
    const auto start = std::chrono::steady_clock::now();
    EpochStats e;
    e.epoch = state_.epoch;
    e.lr = options_.schedule.lr_at(state_.epoch);
    double weighted_loss = 0.0;
    std::int64_t correct = 0;
    std::int64_t tokens = 0;
    for (const Batch& batch : make_batches(samples, options_.batch_size, epoch_shuffle_seed(options_.seed, e.epoch))) {
        const StepStats s = step(batch);
        weighted_loss += s.loss * static_cast<double>(s.tokens);
        correct += s.correct;
        tokens += s.tokens;
    }
    e.loss = weighted_loss / static_cast<double>(tokens);
    e.accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state_.epoch += 1;
    report_.epochs.push_back(e);
    return e;
}

TrainReport Trainer::run(const std::vector<AnnotatedSample>& samples) {
    while (state_.epoch < options_.epochs) {
        const EpochStats e = run_epoch(samples);
        if (options_.on_epoch && !options_.on_epoch(e, params_)) break;
    }
    return report_;
}

TrainResult train(const ModelConfig& config, const std::vector<AnnotatedSample>& samples,
                  const TrainOptions& options) {
    if (samples.empty() && options.epochs > 0) throw std::invalid_argument("train: no training samples");
    Trainer trainer(config, options);
    trainer.run(samples);
    return {trainer.params(), trainer.state(), trainer.report()};
}

// ---- evaluation ---------------------------------------------------------------

Matrix<float> predict_probs(const ModelParams<float>& params, const ModelConfig& config, const Batch& batch) {
    return softmax_tokens(forward(params, config, batch, false).logits);
}

TokenLabelMap predict_labels(const ModelParams<float>& params, const ModelConfig& config, const FloatImage& image) {
    const auto fwd = forward(params, config, image.values, 1, false);
    TokenLabelMap out(config.grid());
    for (int t = 0; t < config.tokens(); ++t) out.set(t, fwd.logits(t, kForeground) >= fwd.logits(t, kBackground));
    return out;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double EvalReport::accuracy() const { return ratio(true_fg + true_bg, tokens); }
double EvalReport::fg_precision() const { return ratio(true_fg, true_fg + false_fg); }
double EvalReport::fg_recall() const { return ratio(true_fg, true_fg + false_bg); }
double EvalReport::bg_precision() const { return ratio(true_bg, true_bg + false_bg); }
double EvalReport::bg_recall() const { return ratio(true_bg, true_bg + false_fg); }

void EvalReport::add(const TokenLabelMap& predicted, const TokenLabelMap& truth) {
    if (predicted.size() != truth.size()) throw GeometryError("evaluate: prediction/label size mismatch");
    for (int i = 0; i < truth.size(); ++i) {
        const bool p = predicted.at(i);
        const bool t = truth.at(i);
        ++tokens;
        if (p && t) ++true_fg;
        else if (!p && !t) ++true_bg;
        else if (p) ++false_fg;
        else ++false_bg;
    }
}

std::string EvalReport::to_json() const {
    nlohmann::json j{{"tokens", tokens},
                     {"accuracy", accuracy()},
                     {"confusion", {{"true_fg", true_fg}, {"true_bg", true_bg}, {"false_fg", false_fg}, {"false_bg", false_bg}}},
                     {"fg", {{"precision", fg_precision()}, {"recall", fg_recall()}}},
                     {"bg", {{"precision", bg_precision()}, {"recall", bg_recall()}}}};
    return j.dump(2) + "\n";
}

EvalReport evaluate_report(const ModelParams<float>& params, const ModelConfig& config,
                           const std::vector<AnnotatedSample>& samples, int batch_size,
                           const std::optional<CcaConfig>& cca_config) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    EvalReport report;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const int M = config.tokens();
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(batch_size));
        const Batch batch = pack_batch(samples, std::span(order).subspan(start, len));
        const auto logits = forward(params, config, batch, false).logits;
        for (std::size_t b = 0; b < len; ++b) {
            TokenLabelMap predicted(config.grid());
            for (int t = 0; t < M; ++t) {
                const auto row = static_cast<Eigen::Index>(b * static_cast<std::size_t>(M) + static_cast<std::size_t>(t));
                predicted.set(t, logits(row, kForeground) >= logits(row, kBackground));
            }
            if (cca_config) predicted = cca(predicted, *cca_config);
            report.add(predicted, samples[start + b].label_map);
        }
    }
    return report;
}

double evaluate(const ModelParams<float>& params, const ModelConfig& config,
                const std::vector<AnnotatedSample>& samples) {
    return evaluate_report(params, config, samples).accuracy();
}

double token_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
    if (predicted.size() != truth.size() || truth.empty()) {
        throw std::invalid_argument("token_accuracy: sizes differ or are empty");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace bavit
