#pragma once

// Forward and gradient kernels for every layer kind of the selective
// autoencoder. All functions are pure: they read their arguments and return
// fresh tensors, so they can run concurrently on disjoint data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flamesift/tensor.hpp"

namespace flamesift::kernels {

enum class Activation { relu, identity };

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
// Subgradient at exactly zero is taken as zero.
inline double relu_grad(double x) noexcept { return x > 0.0 ? 1.0 : 0.0; }

void apply_activation(Tensor& t, Activation act) noexcept;
void apply_activation(std::span<double> v, Activation act) noexcept;

// Multiplies `grad` by the activation derivative, evaluated from the
// activated output (relu(x) > 0 iff x > 0).
void activation_backward(std::span<const double> activated, std::span<double> grad, Activation act) noexcept;

/// Non-owning view of a bank of square filters.
/// weights are laid out [out_map][in_map][row][col]; bias has one entry per out map.
struct ConvKernel {
    std::size_t out_maps = 0;
    std::size_t in_maps = 0;
    std::size_t size = 0;
    std::span<const double> weights;
    std::span<const double> bias;

    void validate() const;
};

struct ConvGrads {
    Tensor input;
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Valid-mode cross-correlation (no kernel flip): output is
/// (out_maps, m - c + 1, n - c + 1).
Tensor conv_forward(const Tensor& input, const ConvKernel& kernel, Activation act);

/// Gradients of the linear part of conv_forward. `grad_out` is taken with
/// respect to the pre-activation output; run activation_backward first.
ConvGrads conv_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out);

/// Full-mode correlation: the input zero-padded by c - 1 on every side, then
/// valid conv. Output grows to (out_maps, m + c - 1, n + c - 1).
Tensor deconv_forward(const Tensor& input, const ConvKernel& kernel, Activation act);
ConvGrads deconv_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out);

Tensor zero_pad(const Tensor& input, std::size_t pad);
Tensor crop(const Tensor& input, std::size_t pad);

struct PoolSpec {
    std::size_t size = 2;
};

/// Per pooled cell, offset of the selected maximum inside its window.
struct ArgmaxMap {
    struct Offset {
        std::uint16_t row = 0;
        std::uint16_t col = 0;
    };
    Shape pooled;
    std::size_t pool_size = 0;
    std::vector<Offset> offsets;
};

struct PoolResult {
    Tensor output;
    ArgmaxMap argmax;
};

/// Non-overlapping p x p max pooling with stride p. Ties resolve to the first
/// maximum in row-major order. Dimensions must divide by p.
PoolResult maxpool_forward(const Tensor& input, PoolSpec spec);
Tensor maxpool_backward(const Tensor& grad_out, const ArgmaxMap& argmax, Shape input_shape);

/// Nearest-neighbour upscale: every cell becomes a factor x factor block.
Tensor unpool(const Tensor& input, std::size_t factor);
Tensor unpool_backward(const Tensor& grad_out, std::size_t factor);

/// Fully connected layer view; weights are row-major [out][in].
struct DenseLayer {
    std::size_t out = 0;
    std::size_t in = 0;
    std::span<const double> weights;
    std::span<const double> bias;

    void validate() const;
};

struct DenseGrads {
    std::vector<double> input;
    std::vector<double> weights;
    std::vector<double> bias;
};

std::vector<double> dense_forward(std::span<const double> input, const DenseLayer& layer, Activation act);
// `grad_out` is with respect to the pre-activation output.
DenseGrads dense_backward(std::span<const double> input, const DenseLayer& layer, std::span<const double> grad_out);

}  // namespace flamesift::kernels
