#include "flamesift/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "flamesift/errors.hpp"
#include "flamesift/parallel.hpp"

namespace flamesift {

namespace {

constexpr std::size_t kReduceGroup = 8;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_same(const ParamSet& a, const ParamSet& b, const char* what) {
    if (a.size() != b.size()) throw ShapeError(std::string(what) + ": layer count mismatch");
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].weights.size() != b[k].weights.size() || a[k].bias.size() != b[k].bias.size()) {
            throw ShapeError(std::string(what) + ": block " + std::to_string(k) + " size mismatch");
        }
    }
}

}  // namespace

void LossConfig::validate() const {
    if (!(l2_coeff >= 0.0) || !(l1_coeff >= 0.0)) throw ConfigError("regularization coefficients must be >= 0");
}

double mse_loss(const Tensor& output, const Tensor& target) {
    if (output.shape() != target.shape()) {
        throw ShapeError("mse: output " + output.shape().to_string() + " vs target " + target.shape().to_string());
    }
    if (output.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output.data()[i] - target.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(output.size());
}

double mse_loss(std::span<const Tensor> outputs, std::span<const Tensor> targets) {
    if (outputs.size() != targets.size()) throw ShapeError("mse: batch sizes differ");
    if (outputs.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) s += mse_loss(outputs[i], targets[i]);
    return s / static_cast<double>(outputs.size());
}

Tensor mse_grad(const Tensor& output, const Tensor& target, std::size_t batch_size) {
    if (output.shape() != target.shape()) {
        throw ShapeError("mse: output " + output.shape().to_string() + " vs target " + target.shape().to_string());
    }
    const double k = 2.0 / (static_cast<double>(output.size()) * static_cast<double>(batch_size));
    Tensor g(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) g.data()[i] = k * (output.data()[i] - target.data()[i]);
    return g;
}

Penalty regularization(const ParamSet& params, const LossConfig& cfg) {
    double sq = 0.0, abs_sum = 0.0;
    for (const auto& block : params) {
        for (double w : block.weights) {
            sq += w * w;
            abs_sum += std::abs(w);
        }
    }
    Penalty p;
    p.group_l2 = std::sqrt(sq);
    p.l1 = abs_sum;
    p.total = cfg.l2_coeff * p.group_l2 + cfg.l1_coeff * p.l1;
    return p;
}

void add_regularization_grad(const ParamSet& params, const LossConfig& cfg, ParamSet& grads) {
    check_same(params, grads, "regularization gradient");
    if (cfg.l2_coeff == 0.0 && cfg.l1_coeff == 0.0) return;
    const double norm = regularization(params, cfg).group_l2;
    const double l2_scale = norm > 0.0 ? cfg.l2_coeff / norm : 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& w = params[k].weights;
        auto& g = grads[k].weights;
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += l2_scale * w[i] + cfg.l1_coeff * sign(w[i]);
    }
}

OptimizerState OptimizerState::zeros_for(const ParamSet& params, double learning_rate, double momentum) {
    return OptimizerState{learning_rate, momentum, zeros_like(params)};
}

ParamSet lookahead(const ParamSet& params, const OptimizerState& opt) {
    check_same(params, opt.velocity, "lookahead");
    ParamSet ahead = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < ahead[k].weights.size(); ++i) ahead[k].weights[i] += opt.momentum * opt.velocity[k].weights[i];
        for (std::size_t i = 0; i < ahead[k].bias.size(); ++i) ahead[k].bias[i] += opt.momentum * opt.velocity[k].bias[i];
    }
    return ahead;
}

void nesterov_step(ParamSet& params, const ParamSet& grads, OptimizerState& opt) {
    check_same(params, grads, "nesterov step");
    check_same(params, opt.velocity, "nesterov step velocity");
    const double mu = opt.momentum;
    const double alpha = opt.learning_rate;
    auto update = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mu * v[i] - alpha * g[i];
            w[i] += v[i];
        }
    };
    for (std::size_t k = 0; k < params.size(); ++k) {
        update(params[k].weights, grads[k].weights, opt.velocity[k].weights);
        update(params[k].bias, grads[k].bias, opt.velocity[k].bias);
    }
}

BatchGradient batch_gradient(const Model& model, std::span<const Sample* const> batch, std::size_t workers) {
    BatchGradient result{0.0, zeros_like(model.params())};
    const std::size_t n = batch.size();
    if (n == 0) return result;
    const std::size_t groups = (n + kReduceGroup - 1) / kReduceGroup;
    const std::size_t wave = std::max<std::size_t>(1, workers);

    struct Partial {
        double loss = 0.0;
        ParamSet grads;
    };
    // Groups are processed in waves of `workers`; each wave is folded into the
    // total in group order before the next starts.
    for (std::size_t first = 0; first < groups; first += wave) {
        const std::size_t count = std::min(wave, groups - first);
        std::vector<Partial> partials(count);
        parallel_for(count, workers, [&](std::size_t t) {
            const std::size_t g = first + t;
            Partial& part = partials[t];
            part.grads = zeros_like(model.params());
            for (std::size_t i = g * kReduceGroup; i < std::min(n, (g + 1) * kReduceGroup); ++i) {
                const Sample& s = *batch[i];
                LayerCache cache;
                const Tensor out = forward(model, s.input, &cache);
                part.loss += mse_loss(out, s.target);
                add_into(part.grads, backward(model, cache, mse_grad(out, s.target, n)));
            }
        });
        for (auto& part : partials) {
            result.loss += part.loss;
            add_into(result.grads, part.grads);
        }
    }
    result.loss /= static_cast<double>(n);
    return result;
}

double evaluate_mse(const Model& model, std::span<const Sample* const> samples, std::size_t workers) {
    if (samples.empty()) return 0.0;
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        losses[i] = mse_loss(forward(model, samples[i]->input), samples[i]->target);
    });
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(samples.size());
}

void TrainConfig::validate() const {
    loss.validate();
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (max_epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must be in (0, 1)");
    }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t& state) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto r = splitmix64(state);
        const auto j = static_cast<std::size_t>((static_cast<unsigned __int128>(r) * i) >> 64);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

TrainResult train(Model model, std::span<const Sample> samples, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = samples.size();
    const auto n_valid = static_cast<std::size_t>(
        std::max<double>(1.0, std::round(cfg.validation_fraction * static_cast<double>(n))));
    if (n < 2 || n_valid >= n) {
        throw ConfigError("training needs at least one training and one validation sample (got " + std::to_string(n) +
                          " samples)");
    }
    for (const auto& s : samples) {
        if (s.input.shape() != model.input_shape() || s.target.shape() != model.output_shape()) {
            throw ShapeError("sample shape " + s.input.shape().to_string() + " does not match network input " +
                             model.input_shape().to_string());
        }
    }

    std::uint64_t rng = cfg.shuffle_seed;
    const auto order = shuffled_indices(n, rng);
    std::vector<const Sample*> train_set, valid_set;
    for (std::size_t i = 0; i < n; ++i) (i < n - n_valid ? train_set : valid_set).push_back(&samples[order[i]]);

    OptimizerState opt = OptimizerState::zeros_for(model.params(), cfg.learning_rate, cfg.momentum);
    Model probe = model;
    TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity(), false};
    std::size_t patience = cfg.early_stop.patience;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto perm = shuffled_indices(train_set.size(), rng);
        std::vector<const Sample*> epoch_order(train_set.size());
        for (std::size_t i = 0; i < perm.size(); ++i) epoch_order[i] = train_set[perm[i]];

        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < epoch_order.size(); start += cfg.batch_size, ++batch_no) {
            const std::size_t len = std::min(cfg.batch_size, epoch_order.size() - start);
            const std::span<const Sample* const> batch(epoch_order.data() + start, len);

            probe.params() = lookahead(model.params(), opt);
            BatchGradient bg = batch_gradient(probe, batch, cfg.workers);
            if (!std::isfinite(bg.loss)) {
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_no));
            }
            add_regularization_grad(probe.params(), cfg.loss, bg.grads);
            nesterov_step(model.params(), bg.grads, opt);
            loss_sum += bg.loss * static_cast<double>(len);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(epoch_order.size());
        rec.valid_loss = evaluate_mse(model, valid_set, cfg.workers);
        rec.penalty = regularization(model.params(), cfg.loss).total;
        if (!std::isfinite(rec.valid_loss)) {
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);
        if (cfg.on_epoch) cfg.on_epoch(rec);

        if (rec.valid_loss < result.best_valid_loss) {
            if (rec.valid_loss < result.best_valid_loss * cfg.early_stop.improvement_threshold) {
                patience = std::max(patience, epoch * cfg.early_stop.patience_increase);
            }
            result.best_valid_loss = rec.valid_loss;
            result.best_epoch = epoch;
            result.best.params() = model.params();
        }
        if (epoch >= patience && epoch < cfg.max_epochs) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,train_loss,valid_loss,penalty\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", r.epoch, r.train_loss, r.valid_loss, r.penalty);
        out += buf;
    }
    return out;
}

}  // namespace flamesift
