#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flamesift/network.hpp"

namespace flamesift {

struct LossConfig {
    double l2_coeff = 1e-4;
    double l1_coeff = 1e-4;

    void validate() const;
};

/// Mean squared error of one frame, averaged over every pixel.
double mse_loss(const Tensor& output, const Tensor& target);
/// Per-frame MSE averaged over the batch.
double mse_loss(std::span<const Tensor> outputs, std::span<const Tensor> targets);
/// d(batch MSE)/d(output) for one member of a batch of `batch_size` frames.
Tensor mse_grad(const Tensor& output, const Tensor& target, std::size_t batch_size);

struct Penalty {
    double group_l2 = 0.0;  // sqrt of the sum of all squared weights
    double l1 = 0.0;        // sum of absolute weights
    double total = 0.0;     // l2_coeff * group_l2 + l1_coeff * l1
};

/// Weight penalty; biases are not regularized.
Penalty regularization(const ParamSet& params, const LossConfig& cfg);
/// Adds the penalty's (sub)gradient to `grads`. Subgradients at zero are zero.
void add_regularization_grad(const ParamSet& params, const LossConfig& cfg, ParamSet& grads);

struct OptimizerState {
    double learning_rate = 1e-4;
    double momentum = 0.975;
    ParamSet velocity;

    static OptimizerState zeros_for(const ParamSet& params, double learning_rate, double momentum);
};

/// Parameters shifted to the Nesterov lookahead point W + mu * v.
ParamSet lookahead(const ParamSet& params, const OptimizerState& opt);

/// v <- mu * v - alpha * g;  W <- W + v.
/// `grads` must be evaluated at lookahead(params, opt).
void nesterov_step(ParamSet& params, const ParamSet& grads, OptimizerState& opt);

struct Sample {
    Tensor input;
    Tensor target;
};

struct BatchGradient {
    double loss = 0.0;  // batch-mean MSE
    ParamSet grads;     // gradient of that loss (no penalty)
};

/// Forward/backward over `batch`, fanned out on `workers` threads. Samples
/// are reduced in fixed groups of eight, in index order, so the result is
/// bit-identical for any worker count.
BatchGradient batch_gradient(const Model& model, std::span<const Sample* const> batch, std::size_t workers = 1);

/// Mean per-frame MSE of the model over `samples`.
double evaluate_mse(const Model& model, std::span<const Sample* const> samples, std::size_t workers = 1);

struct EarlyStopConfig {
    std::size_t patience = 10;             // epochs
    double improvement_threshold = 0.995;  // relative improvement that extends patience
    std::size_t patience_increase = 2;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double penalty = 0.0;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double momentum = 0.975;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    LossConfig loss;
    EarlyStopConfig early_stop;
    double validation_fraction = 0.1;
    std::uint64_t shuffle_seed = 1;
    std::size_t workers = 1;
    std::function<void(const EpochRecord&)> on_epoch;

    void validate() const;
};

struct TrainResult {
    Model best;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_valid_loss = 0.0;
    bool stopped_early = false;
};

/// Splits `samples` (seeded shuffle, last fraction held out for validation),
/// then runs epochs of shuffled Nesterov mini-batches. Returns the parameters
/// with the lowest validation MSE seen at any epoch end.
TrainResult train(Model model, std::span<const Sample> samples, const TrainConfig& cfg);

/// `epoch,train_loss,valid_loss,penalty` rows.
std::string history_csv(std::span<const EpochRecord> history);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t& state);

}  // namespace flamesift
