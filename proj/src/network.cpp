#include "flamesift/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "flamesift/errors.hpp"

namespace flamesift {

using kernels::Activation;

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::dense: return "dense";
        case LayerKind::unpool: return "unpool";
        case LayerKind::deconv: return "deconv";
        case LayerKind::flatten: return "flatten";
        case LayerKind::reshape: return "reshape";
    }
    return "?";
}

namespace {

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::string layer_label(std::size_t index, const LayerSpec& spec) {
    return "layer " + std::to_string(index) + " (" + to_string(spec.kind) + ")";
}

}  // namespace

LayerSpec LayerSpec::conv(std::size_t maps, std::size_t size, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.maps = maps;
    s.size = size;
    s.activation = act;
    return s;
}

LayerSpec LayerSpec::deconv(std::size_t maps, std::size_t size, Activation act) {
    LayerSpec s = conv(maps, size, act);
    s.kind = LayerKind::deconv;
    return s;
}

LayerSpec LayerSpec::pool(std::size_t size) {
    LayerSpec s;
    s.kind = LayerKind::pool;
    s.size = size;
    return s;
}

LayerSpec LayerSpec::unpool(std::size_t factor) {
    LayerSpec s;
    s.kind = LayerKind::unpool;
    s.size = factor;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t units, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    s.activation = act;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::reshape(std::size_t maps, std::size_t height, std::size_t width) {
    LayerSpec s;
    s.kind = LayerKind::reshape;
    s.maps = maps;
    s.height = height;
    s.width = width;
    return s;
}

std::vector<Shape> NetworkConfig::shape_chain() const {
    if (input.size() == 0) throw ConfigError("network input shape " + input.to_string() + " is empty");
    std::vector<Shape> chain{input};
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const LayerSpec& l = layers[k];
        const Shape in = chain.back();
        auto fail = [&](const std::string& why) {
            throw ConfigError(layer_label(k, l) + ": " + why + " (input " + in.to_string() + ")");
        };
        Shape out{};
        switch (l.kind) {
            case LayerKind::conv:
                if (l.maps == 0 || l.size == 0) fail("maps and filter size must be >= 1");
                if (l.size > in.height || l.size > in.width) fail("filter larger than input");
                out = {l.maps, in.height - l.size + 1, in.width - l.size + 1};
                break;
            case LayerKind::deconv:
                if (l.maps == 0 || l.size == 0) fail("maps and filter size must be >= 1");
                out = {l.maps, in.height + l.size - 1, in.width + l.size - 1};
                break;
            case LayerKind::pool:
                if (l.size == 0) fail("pool size must be >= 1");
                if (in.height % l.size != 0 || in.width % l.size != 0) {
                    fail("pool size " + std::to_string(l.size) + " does not divide spatial dims");
                }
                out = {in.maps, in.height / l.size, in.width / l.size};
                break;
            case LayerKind::unpool:
                if (l.size == 0) fail("unpool factor must be >= 1");
                out = {in.maps, in.height * l.size, in.width * l.size};
                break;
            case LayerKind::dense:
                if (l.units == 0) fail("dense layer needs >= 1 unit");
                if (in.height != 1 || in.width != 1) fail("dense layer needs a flattened input");
                out = {l.units, 1, 1};
                break;
            case LayerKind::flatten:
                out = {in.size(), 1, 1};
                break;
            case LayerKind::reshape:
                if (Shape{l.maps, l.height, l.width}.size() != in.size()) {
                    fail("reshape target " + Shape{l.maps, l.height, l.width}.to_string() + " changes element count");
                }
                out = {l.maps, l.height, l.width};
                break;
        }
        chain.push_back(out);
    }
    return chain;
}

void NetworkConfig::validate() const {
    const auto chain = shape_chain();
    std::size_t convs = 0, pools = 0, denses = 0, unpools = 0, deconvs = 0;
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerKind::conv: ++convs; break;
            case LayerKind::pool: ++pools; break;
            case LayerKind::dense: ++denses; break;
            case LayerKind::unpool: ++unpools; break;
            case LayerKind::deconv: ++deconvs; break;
            default: break;
        }
    }
    if (convs == 0 || pools == 0 || denses == 0 || unpools == 0) {
        throw ConfigError("network needs at least one conv, pool, dense and unpool layer");
    }
    if (deconvs != 1 || layers.back().kind != LayerKind::deconv) {
        throw ConfigError("network needs exactly one deconv, as its final layer");
    }
    if (chain.back() != input) {
        throw ConfigError("network output " + chain.back().to_string() + " does not match input " + input.to_string());
    }
}

std::string NetworkConfig::to_text() const {
    std::ostringstream os;
    os << "flamesift-network 1\n";
    os << "input " << input.maps << ' ' << input.height << ' ' << input.width << '\n';
    os << "seed " << seed << '\n';
    for (const auto& l : layers) {
        os << to_string(l.kind);
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::deconv: os << ' ' << l.maps << ' ' << l.size << ' ' << activation_name(l.activation); break;
            case LayerKind::pool:
            case LayerKind::unpool: os << ' ' << l.size; break;
            case LayerKind::dense: os << ' ' << l.units << ' ' << activation_name(l.activation); break;
            case LayerKind::reshape: os << ' ' << l.maps << ' ' << l.height << ' ' << l.width; break;
            case LayerKind::flatten: break;
        }
        os << '\n';
    }
    return os.str();
}

NetworkConfig NetworkConfig::parse(std::string_view text) {
    NetworkConfig cfg;
    cfg.layers.clear();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false, saw_input = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        auto bad = [&](const std::string& why) {
            throw ConfigError("network config line " + std::to_string(lineno) + ": " + why);
        };
        auto activation = [&]() {
            std::string a;
            if (!(ls >> a)) bad("missing activation");
            if (a == "relu") return Activation::relu;
            if (a == "identity") return Activation::identity;
            bad("unknown activation '" + a + "'");
            return Activation::identity;
        };
        auto count = [&](const char* what) {
            long long v = -1;
            if (!(ls >> v) || v < 0) bad(std::string("expected non-negative ") + what);
            return static_cast<std::size_t>(v);
        };
        if (word == "flamesift-network") {
            if (count("version") != 1) bad("unsupported network descriptor version");
            saw_header = true;
            continue;
        }
        if (word == "input") {
            const std::size_t z = count("maps");
            const std::size_t h = count("height");
            cfg.input = {z, h, count("width")};
            saw_input = true;
        } else if (word == "seed") {
            unsigned long long s = 0;
            if (!(ls >> s)) bad("expected seed");
            cfg.seed = s;
        } else if (word == "conv" || word == "deconv") {
            const std::size_t maps = count("maps");
            const std::size_t size = count("filter size");
            const Activation act = activation();
            cfg.layers.push_back(word == "conv" ? LayerSpec::conv(maps, size, act) : LayerSpec::deconv(maps, size, act));
        } else if (word == "pool") {
            cfg.layers.push_back(LayerSpec::pool(count("pool size")));
        } else if (word == "unpool") {
            cfg.layers.push_back(LayerSpec::unpool(count("factor")));
        } else if (word == "dense") {
            const std::size_t units = count("units");
            cfg.layers.push_back(LayerSpec::dense(units, activation()));
        } else if (word == "flatten") {
            cfg.layers.push_back(LayerSpec::flatten());
        } else if (word == "reshape") {
            const std::size_t z = count("maps");
            const std::size_t h = count("height");
            cfg.layers.push_back(LayerSpec::reshape(z, h, count("width")));
        } else {
            bad("unknown directive '" + word + "'");
        }
        std::string extra;
        if (ls >> extra) bad("unexpected token '" + extra + "'");
    }
    if (!saw_header) throw ConfigError("network config missing 'flamesift-network 1' header");
    if (!saw_input) throw ConfigError("network config missing 'input' line");
    return cfg;
}

NetworkConfig desk_config(std::uint64_t seed) {
    NetworkConfig c;
    c.input = {1, 64, 64};
    c.seed = seed;
    c.layers = {
        LayerSpec::conv(8, 3),          // 8x62x62
        LayerSpec::conv(8, 3),          // 8x60x60
        LayerSpec::pool(2),             // 8x30x30
        LayerSpec::conv(16, 3),         // 16x28x28
        LayerSpec::pool(2),             // 16x14x14
        LayerSpec::conv(16, 3),         // 16x12x12
        LayerSpec::flatten(),           // 2304
        LayerSpec::dense(128),
        LayerSpec::dense(8 * 31 * 31),  // 7688
        LayerSpec::reshape(8, 31, 31),
        LayerSpec::unpool(2),           // 8x62x62
        LayerSpec::deconv(1, 3, Activation::identity),
    };
    return c;
}

NetworkConfig paperlike_config(std::uint64_t seed) {
    NetworkConfig c;
    c.input = {1, 64, 64};
    c.seed = seed;
    c.layers = {
        LayerSpec::conv(16, 3),
        LayerSpec::conv(16, 3),
        LayerSpec::pool(2),
        LayerSpec::conv(32, 3),
        LayerSpec::pool(2),
        LayerSpec::conv(32, 3),          // 32x12x12
        LayerSpec::flatten(),            // 4608
        LayerSpec::dense(256),
        LayerSpec::dense(16 * 31 * 31),  // 15376
        LayerSpec::reshape(16, 31, 31),
        LayerSpec::unpool(2),
        LayerSpec::deconv(1, 3, Activation::identity),
    };
    return c;
}

NetworkConfig preset_config(std::string_view name, std::uint64_t seed) {
    if (name == "desk") return desk_config(seed);
    if (name == "paperlike") return paperlike_config(seed);
    throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
}

std::size_t layer_parameter_count(const LayerSpec& spec, Shape input) {
    switch (spec.kind) {
        case LayerKind::conv:
        case LayerKind::deconv: return spec.maps * (input.maps * spec.size * spec.size + 1);
        case LayerKind::dense: return spec.units * (input.size() + 1);
        default: return 0;
    }
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet z(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        z[k].weights.assign(params[k].weights.size(), 0.0);
        z[k].bias.assign(params[k].bias.size(), 0.0);
    }
    return z;
}

void add_into(ParamSet& acc, const ParamSet& delta) {
    if (acc.size() != delta.size()) throw ShapeError("parameter sets differ in layer count");
    for (std::size_t k = 0; k < acc.size(); ++k) {
        if (acc[k].weights.size() != delta[k].weights.size() || acc[k].bias.size() != delta[k].bias.size()) {
            throw ShapeError("parameter block " + std::to_string(k) + " differs in size");
        }
        for (std::size_t i = 0; i < acc[k].weights.size(); ++i) acc[k].weights[i] += delta[k].weights[i];
        for (std::size_t i = 0; i < acc[k].bias.size(); ++i) acc[k].bias[i] += delta[k].bias[i];
    }
}

void scale(ParamSet& params, double factor) {
    for (auto& b : params) {
        for (double& w : b.weights) w *= factor;
        for (double& v : b.bias) v *= factor;
    }
}

std::size_t element_count(const ParamSet& params) {
    std::size_t n = 0;
    for (const auto& b : params) n += b.weights.size() + b.bias.size();
    return n;
}

Model::Model(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    shapes_ = config_.shape_chain();
    params_.resize(config_.layers.size());
    for (std::size_t k = 0; k < config_.layers.size(); ++k) {
        const LayerSpec& l = config_.layers[k];
        const Shape in = shapes_[k];
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::deconv:
                params_[k].weights.assign(l.maps * in.maps * l.size * l.size, 0.0);
                params_[k].bias.assign(l.maps, 0.0);
                break;
            case LayerKind::dense:
                params_[k].weights.assign(l.units * in.size(), 0.0);
                params_[k].bias.assign(l.units, 0.0);
                break;
            default: break;
        }
    }
}

Model Model::zeros(NetworkConfig config) { return Model(std::move(config)); }

Model Model::build(NetworkConfig config) {
    Model m(std::move(config));
    std::mt19937_64 rng(m.config_.seed);
    for (std::size_t k = 0; k < m.config_.layers.size(); ++k) {
        const LayerSpec& l = m.config_.layers[k];
        double fan_in = 0.0, fan_out = 0.0;
        if (l.kind == LayerKind::conv || l.kind == LayerKind::deconv) {
            fan_in = static_cast<double>(m.shapes_[k].maps * l.size * l.size);
            fan_out = static_cast<double>(l.maps * l.size * l.size);
        } else if (l.kind == LayerKind::dense) {
            fan_in = static_cast<double>(m.shapes_[k].size());
            fan_out = static_cast<double>(l.units);
        } else {
            continue;
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : m.params_[k].weights) {
            // 53 random bits mapped to [0, 1): independent of the library's distribution code.
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            w = (2.0 * u - 1.0) * limit;
        }
    }
    return m;
}

kernels::ConvKernel Model::conv_kernel(std::size_t layer) const {
    const LayerSpec& l = config_.layers.at(layer);
    if (l.kind != LayerKind::conv && l.kind != LayerKind::deconv) {
        throw UsageError(layer_label(layer, l) + " has no convolution kernel");
    }
    return {l.maps, shapes_[layer].maps, l.size, params_[layer].weights, params_[layer].bias};
}

kernels::DenseLayer Model::dense_layer(std::size_t layer) const {
    const LayerSpec& l = config_.layers.at(layer);
    if (l.kind != LayerKind::dense) throw UsageError(layer_label(layer, l) + " is not dense");
    return {l.units, shapes_[layer].size(), params_[layer].weights, params_[layer].bias};
}

void Model::round_to_stored_precision() {
    for (auto& b : params_) {
        for (double& w : b.weights) w = static_cast<double>(static_cast<float>(w));
        for (double& v : b.bias) v = static_cast<double>(static_cast<float>(v));
    }
}

Tensor forward(const Model& model, const Tensor& input, LayerCache* cache) {
    if (input.shape() != model.input_shape()) {
        throw ShapeError("input " + input.shape().to_string() + " does not match network input " +
                         model.input_shape().to_string());
    }
    const auto& layers = model.config().layers;
    const auto& shapes = model.shapes();
    if (cache) {
        cache->activations.clear();
        cache->activations.reserve(layers.size() + 1);
        cache->argmax.assign(layers.size(), {});
    }
    Tensor x = input;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const LayerSpec& l = layers[k];
        Tensor y;
        switch (l.kind) {
            case LayerKind::conv: y = kernels::conv_forward(x, model.conv_kernel(k), l.activation); break;
            case LayerKind::deconv: y = kernels::deconv_forward(x, model.conv_kernel(k), l.activation); break;
            case LayerKind::pool: {
                auto r = kernels::maxpool_forward(x, {l.size});
                y = std::move(r.output);
                if (cache) cache->argmax[k] = std::move(r.argmax);
                break;
            }
            case LayerKind::unpool: y = kernels::unpool(x, l.size); break;
            case LayerKind::dense:
                y = Tensor(shapes[k + 1], kernels::dense_forward(x.data(), model.dense_layer(k), l.activation));
                break;
            case LayerKind::flatten:
            case LayerKind::reshape: y = x.reshaped(shapes[k + 1]); break;
        }
        if (cache) {
            cache->activations.push_back(std::move(x));
        }
        x = std::move(y);
    }
    if (cache) cache->activations.push_back(x);
    return x;
}

ForwardResult forward(const Model& model, std::span<const Tensor> batch) {
    ForwardResult r;
    r.outputs.reserve(batch.size());
    r.caches.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) r.outputs.push_back(forward(model, batch[i], &r.caches[i]));
    return r;
}

ParamSet backward(const Model& model, const LayerCache& cache, const Tensor& grad_output) {
    const auto& layers = model.config().layers;
    const auto& shapes = model.shapes();
    if (cache.empty()) throw UsageError("backward called without a forward cache");
    if (cache.activations.size() != layers.size() + 1) throw UsageError("forward cache does not belong to this model");
    if (grad_output.shape() != model.output_shape()) {
        throw ShapeError("grad_output " + grad_output.shape().to_string() + " != network output " +
                         model.output_shape().to_string());
    }
    ParamSet grads = zeros_like(model.params());
    Tensor g = grad_output;
    for (std::size_t k = layers.size(); k-- > 0;) {
        const LayerSpec& l = layers[k];
        const Tensor& in = cache.activations[k];
        const Tensor& out = cache.activations[k + 1];
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::deconv: {
                kernels::activation_backward(out.data(), g.data(), l.activation);
                auto cg = l.kind == LayerKind::conv ? kernels::conv_backward(in, model.conv_kernel(k), g)
                                                    : kernels::deconv_backward(in, model.conv_kernel(k), g);
                grads[k].weights = std::move(cg.weights);
                grads[k].bias = std::move(cg.bias);
                g = std::move(cg.input);
                break;
            }
            case LayerKind::dense: {
                kernels::activation_backward(out.data(), g.data(), l.activation);
                auto dg = kernels::dense_backward(in.data(), model.dense_layer(k), g.data());
                grads[k].weights = std::move(dg.weights);
                grads[k].bias = std::move(dg.bias);
                g = Tensor(shapes[k], std::move(dg.input));
                break;
            }
            case LayerKind::pool:
                if (cache.argmax.size() != layers.size()) throw UsageError("forward cache is missing pooling argmax");
                g = kernels::maxpool_backward(g, cache.argmax[k], shapes[k]);
                break;
            case LayerKind::unpool: g = kernels::unpool_backward(g, l.size); break;
            case LayerKind::flatten:
            case LayerKind::reshape: g = g.reshaped(shapes[k]); break;
        }
    }
    return grads;
}

ParamSet backward(const Model& model, std::span<const LayerCache> caches, std::span<const Tensor> grad_outputs) {
    if (caches.size() != grad_outputs.size()) throw ShapeError("batch caches and gradients differ in count");
    ParamSet total = zeros_like(model.params());
    for (std::size_t i = 0; i < caches.size(); ++i) add_into(total, backward(model, caches[i], grad_outputs[i]));
    return total;
}

}  // namespace flamesift
