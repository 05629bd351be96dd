#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flamesift/kernels.hpp"
#include "flamesift/tensor.hpp"

namespace flamesift {

enum class LayerKind { conv, pool, dense, unpool, deconv, flatten, reshape };

const char* to_string(LayerKind kind);

/// One entry of the declarative layer list. Only the fields relevant to
/// `kind` are read: conv/deconv use maps, size, activation; pool/unpool use
/// size; dense uses units, activation; reshape uses maps, height, width.
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    std::size_t maps = 0;
    std::size_t size = 0;
    std::size_t units = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    kernels::Activation activation = kernels::Activation::relu;

    static LayerSpec conv(std::size_t maps, std::size_t size, kernels::Activation act = kernels::Activation::relu);
    static LayerSpec deconv(std::size_t maps, std::size_t size,
                            kernels::Activation act = kernels::Activation::identity);
    static LayerSpec pool(std::size_t size);
    static LayerSpec unpool(std::size_t factor);
    static LayerSpec dense(std::size_t units, kernels::Activation act = kernels::Activation::relu);
    static LayerSpec flatten();
    static LayerSpec reshape(std::size_t maps, std::size_t height, std::size_t width);

    bool has_params() const noexcept {
        return kind == LayerKind::conv || kind == LayerKind::deconv || kind == LayerKind::dense;
    }
    bool operator==(const LayerSpec&) const = default;
};

struct NetworkConfig {
    Shape input{1, 64, 64};
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 1;

    /// Shapes flowing between layers: element k is the input of layer k, the
    /// last element is the network output. Throws ConfigError naming the first
    /// layer whose input does not fit.
    std::vector<Shape> shape_chain() const;

    /// Shape chain plus the autoencoder contract: output shape equals input
    /// shape, and the layer inventory holds at least one conv, pool, dense and
    /// unpool with a single deconv as the final layer.
    void validate() const;

    std::string to_text() const;
    static NetworkConfig parse(std::string_view text);

    bool operator==(const NetworkConfig&) const = default;
};

/// 1x64x64 -> conv8 -> conv8 -> pool2 -> conv16 -> pool2 -> conv16 -> dense128
/// -> dense7688 -> 8x31x31 -> unpool2 -> deconv1 -> 1x64x64
NetworkConfig desk_config(std::uint64_t seed = 1);
/// Wider variant of the desk layout (16/32 maps, 256-unit code).
NetworkConfig paperlike_config(std::uint64_t seed = 1);
NetworkConfig preset_config(std::string_view name, std::uint64_t seed = 1);

/// z_o * (z_i * c^2 + 1) for conv/deconv, out * (in + 1) for dense, 0 otherwise.
std::size_t layer_parameter_count(const LayerSpec& spec, Shape input);

struct ParamBlock {
    std::vector<double> weights;
    std::vector<double> bias;

    bool operator==(const ParamBlock&) const = default;
};

/// One block per layer, empty for parameterless layers. Used for parameters,
/// gradients and optimizer velocity alike.
using ParamSet = std::vector<ParamBlock>;

ParamSet zeros_like(const ParamSet& params);
void add_into(ParamSet& acc, const ParamSet& delta);
void scale(ParamSet& params, double factor);
std::size_t element_count(const ParamSet& params);

class Model {
public:
    /// Validates the config and draws weights uniformly in
    /// +-sqrt(6 / (fan_in + fan_out)) from `config.seed`; biases start at zero.
    static Model build(NetworkConfig config);
    /// Same structure, every parameter zero.
    static Model zeros(NetworkConfig config);

    const NetworkConfig& config() const noexcept { return config_; }
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    Shape input_shape() const noexcept { return shapes_.front(); }
    Shape output_shape() const noexcept { return shapes_.back(); }
    std::size_t layer_count() const noexcept { return config_.layers.size(); }

    ParamSet& params() noexcept { return params_; }
    const ParamSet& params() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return element_count(params_); }

    kernels::ConvKernel conv_kernel(std::size_t layer) const;
    kernels::DenseLayer dense_layer(std::size_t layer) const;

    /// Rounds every parameter through single precision (checkpoint storage).
    void round_to_stored_precision();

private:
    explicit Model(NetworkConfig config);

    NetworkConfig config_;
    std::vector<Shape> shapes_;
    ParamSet params_;
};

/// Per-sample record of a forward pass needed by backward.
struct LayerCache {
    std::vector<Tensor> activations;          // [k] = input of layer k; back() = output
    std::vector<kernels::ArgmaxMap> argmax;   // indexed by layer; empty for non-pool layers

    bool empty() const noexcept { return activations.empty(); }
};

Tensor forward(const Model& model, const Tensor& input, LayerCache* cache = nullptr);

struct ForwardResult {
    std::vector<Tensor> outputs;
    std::vector<LayerCache> caches;
};

ForwardResult forward(const Model& model, std::span<const Tensor> batch);

/// Gradient of every parameter given dLoss/dOutput for one sample.
ParamSet backward(const Model& model, const LayerCache& cache, const Tensor& grad_output);

/// Sum of per-sample gradients, reduced in sample order.
ParamSet backward(const Model& model, std::span<const LayerCache> caches, std::span<const Tensor> grad_outputs);

}  // namespace flamesift
