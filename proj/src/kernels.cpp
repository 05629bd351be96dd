#include "flamesift/kernels.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "flamesift/errors.hpp"

namespace flamesift::kernels {

namespace {

// Four interleaved partial sums; fixed order keeps results reproducible.
double dot(const double* a, const double* b, std::size_t n) noexcept {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

void apply_activation(std::span<double> v, Activation act) noexcept {
    if (act == Activation::relu) {
        for (double& x : v) x = relu(x);
    }
}

void apply_activation(Tensor& t, Activation act) noexcept { apply_activation(t.data(), act); }

void activation_backward(std::span<const double> activated, std::span<double> grad, Activation act) noexcept {
    if (act != Activation::relu) return;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activated[i] > 0.0)) grad[i] = 0.0;
    }
}

void ConvKernel::validate() const {
    if (size == 0 || out_maps == 0 || in_maps == 0) {
        throw ShapeError("conv kernel has a zero dimension");
    }
    if (weights.size() != out_maps * in_maps * size * size) {
        throw ShapeError("conv kernel weights length " + std::to_string(weights.size()) + " != " +
                         std::to_string(out_maps) + "x" + std::to_string(in_maps) + "x" + std::to_string(size) + "x" +
                         std::to_string(size));
    }
    if (bias.size() != out_maps) {
        throw ShapeError("conv kernel bias length " + std::to_string(bias.size()) + " != " + std::to_string(out_maps));
    }
}

Tensor conv_forward(const Tensor& input, const ConvKernel& kernel, Activation act) {
    kernel.validate();
    const Shape in = input.shape();
    const std::size_t c = kernel.size;
    if (in.maps != kernel.in_maps || in.height < c || in.width < c) {
        throw ShapeError("conv input " + in.to_string() + " incompatible with kernel " + std::to_string(kernel.out_maps) +
                         "x" + std::to_string(kernel.in_maps) + "x" + std::to_string(c) + "x" + std::to_string(c));
    }
    const std::size_t oh = in.height - c + 1;
    const std::size_t ow = in.width - c + 1;
    Tensor out(Shape{kernel.out_maps, oh, ow});
    for (std::size_t o = 0; o < kernel.out_maps; ++o) {
        auto plane = out.plane(o);
        std::fill(plane.begin(), plane.end(), kernel.bias[o]);
        for (std::size_t i = 0; i < in.maps; ++i) {
            const double* src = input.plane(i).data();
            const double* w = kernel.weights.data() + ((o * in.maps + i) * c) * c;
            for (std::size_t ky = 0; ky < c; ++ky) {
                for (std::size_t kx = 0; kx < c; ++kx) {
                    const double wv = w[ky * c + kx];
                    for (std::size_t y = 0; y < oh; ++y) {
                        axpy(wv, src + (y + ky) * in.width + kx, plane.data() + y * ow, ow);
                    }
                }
            }
        }
    }
    apply_activation(out, act);
    return out;
}

ConvGrads conv_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out) {
    kernel.validate();
    const Shape in = input.shape();
    const std::size_t c = kernel.size;
    if (in.maps != kernel.in_maps || in.height < c || in.width < c) {
        throw ShapeError("conv input " + in.to_string() + " incompatible with kernel size " + std::to_string(c));
    }
    const Shape expected{kernel.out_maps, in.height - c + 1, in.width - c + 1};
    if (grad_out.shape() != expected) {
        throw ShapeError("conv grad_out " + grad_out.shape().to_string() + " != output shape " + expected.to_string());
    }
    const std::size_t oh = expected.height;
    const std::size_t ow = expected.width;

    ConvGrads g{Tensor(in), std::vector<double>(kernel.weights.size(), 0.0), std::vector<double>(kernel.out_maps, 0.0)};
    for (std::size_t o = 0; o < kernel.out_maps; ++o) {
        const auto go = grad_out.plane(o);
        g.bias[o] = sum(go);
        for (std::size_t i = 0; i < in.maps; ++i) {
            const double* src = input.plane(i).data();
            double* dst = g.input.plane(i).data();
            const std::size_t base = ((o * in.maps + i) * c) * c;
            for (std::size_t ky = 0; ky < c; ++ky) {
                for (std::size_t kx = 0; kx < c; ++kx) {
                    const double wv = kernel.weights[base + ky * c + kx];
                    double acc = 0.0;
                    for (std::size_t y = 0; y < oh; ++y) {
                        const double* grow = go.data() + y * ow;
                        acc += dot(grow, src + (y + ky) * in.width + kx, ow);
                        axpy(wv, grow, dst + (y + ky) * in.width + kx, ow);
                    }
                    g.weights[base + ky * c + kx] = acc;
                }
            }
        }
    }
    return g;
}

Tensor zero_pad(const Tensor& input, std::size_t pad) {
    const Shape s = input.shape();
    Tensor out(Shape{s.maps, s.height + 2 * pad, s.width + 2 * pad});
    for (std::size_t z = 0; z < s.maps; ++z) {
        for (std::size_t y = 0; y < s.height; ++y) {
            const auto src = input.plane(z).subspan(y * s.width, s.width);
            std::copy(src.begin(), src.end(), &out.at(z, y + pad, pad));
        }
    }
    return out;
}

Tensor crop(const Tensor& input, std::size_t pad) {
    const Shape s = input.shape();
    if (s.height < 2 * pad || s.width < 2 * pad) {
        throw ShapeError("cannot crop " + std::to_string(pad) + " from " + s.to_string());
    }
    Tensor out(Shape{s.maps, s.height - 2 * pad, s.width - 2 * pad});
    for (std::size_t z = 0; z < s.maps; ++z) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            const double* src = input.data().data() + (z * s.height + y + pad) * s.width + pad;
            std::copy(src, src + out.width(), &out.at(z, y, 0));
        }
    }
    return out;
}

Tensor deconv_forward(const Tensor& input, const ConvKernel& kernel, Activation act) {
    kernel.validate();
    if (input.maps() != kernel.in_maps) {
        throw ShapeError("deconv input " + input.shape().to_string() + " has " + std::to_string(input.maps()) +
                         " maps, kernel expects " + std::to_string(kernel.in_maps));
    }
    return conv_forward(zero_pad(input, kernel.size - 1), kernel, act);
}

ConvGrads deconv_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out) {
    kernel.validate();
    const std::size_t pad = kernel.size - 1;
    ConvGrads g = conv_backward(zero_pad(input, pad), kernel, grad_out);
    g.input = crop(g.input, pad);
    return g;
}

PoolResult maxpool_forward(const Tensor& input, PoolSpec spec) {
    const Shape s = input.shape();
    const std::size_t p = spec.size;
    if (p == 0 || p > 65535) throw ShapeError("pool size must be in [1, 65535]");
    if (s.height % p != 0 || s.width % p != 0) {
        throw ShapeError("pool size " + std::to_string(p) + " does not divide input " + s.to_string());
    }
    const Shape pooled{s.maps, s.height / p, s.width / p};
    PoolResult r{Tensor(pooled), ArgmaxMap{pooled, p, std::vector<ArgmaxMap::Offset>(pooled.size())}};
    std::size_t cell = 0;
    for (std::size_t z = 0; z < s.maps; ++z) {
        for (std::size_t k = 0; k < pooled.height; ++k) {
            for (std::size_t l = 0; l < pooled.width; ++l, ++cell) {
                double best = -std::numeric_limits<double>::infinity();
                ArgmaxMap::Offset where{};
                bool first = true;
                for (std::size_t dy = 0; dy < p; ++dy) {
                    for (std::size_t dx = 0; dx < p; ++dx) {
                        const double v = input.at(z, k * p + dy, l * p + dx);
                        if (first || v > best) {
                            best = v;
                            where = {static_cast<std::uint16_t>(dy), static_cast<std::uint16_t>(dx)};
                            first = false;
                        }
                    }
                }
                r.output.at(z, k, l) = best;
                r.argmax.offsets[cell] = where;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const Tensor& grad_out, const ArgmaxMap& argmax, Shape input_shape) {
    const std::size_t p = argmax.pool_size;
    if (grad_out.shape() != argmax.pooled || argmax.offsets.size() != argmax.pooled.size()) {
        throw ShapeError("pool grad_out " + grad_out.shape().to_string() + " != pooled shape " +
                         argmax.pooled.to_string());
    }
    if (input_shape != Shape{argmax.pooled.maps, argmax.pooled.height * p, argmax.pooled.width * p}) {
        throw ShapeError("pool input shape " + input_shape.to_string() + " inconsistent with pooled " +
                         argmax.pooled.to_string());
    }
    Tensor g(input_shape);
    std::size_t cell = 0;
    for (std::size_t z = 0; z < argmax.pooled.maps; ++z) {
        for (std::size_t k = 0; k < argmax.pooled.height; ++k) {
            for (std::size_t l = 0; l < argmax.pooled.width; ++l, ++cell) {
                const auto off = argmax.offsets[cell];
                g.at(z, k * p + off.row, l * p + off.col) += grad_out.at(z, k, l);
            }
        }
    }
    return g;
}

Tensor unpool(const Tensor& input, std::size_t factor) {
    if (factor == 0) throw ShapeError("unpool factor must be >= 1");
    const Shape s = input.shape();
    Tensor out(Shape{s.maps, s.height * factor, s.width * factor});
    for (std::size_t z = 0; z < s.maps; ++z) {
        for (std::size_t y = 0; y < out.height(); ++y) {
            for (std::size_t x = 0; x < out.width(); ++x) {
                out.at(z, y, x) = input.at(z, y / factor, x / factor);
            }
        }
    }
    return out;
}

Tensor unpool_backward(const Tensor& grad_out, std::size_t factor) {
    if (factor == 0) throw ShapeError("unpool factor must be >= 1");
    const Shape s = grad_out.shape();
    if (s.height % factor != 0 || s.width % factor != 0) {
        throw ShapeError("unpool grad " + s.to_string() + " not divisible by factor " + std::to_string(factor));
    }
    Tensor g(Shape{s.maps, s.height / factor, s.width / factor});
    for (std::size_t z = 0; z < s.maps; ++z) {
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t x = 0; x < s.width; ++x) {
                g.at(z, y / factor, x / factor) += grad_out.at(z, y, x);
            }
        }
    }
    return g;
}

void DenseLayer::validate() const {
    if (weights.size() != out * in) {
        throw ShapeError("dense weights length " + std::to_string(weights.size()) + " != " + std::to_string(out) + "x" +
                         std::to_string(in));
    }
    if (bias.size() != out) {
        throw ShapeError("dense bias length " + std::to_string(bias.size()) + " != " + std::to_string(out));
    }
}

std::vector<double> dense_forward(std::span<const double> input, const DenseLayer& layer, Activation act) {
    layer.validate();
    if (input.size() != layer.in) {
        throw ShapeError("dense input length " + std::to_string(input.size()) + " != layer input " +
                         std::to_string(layer.in));
    }
    std::vector<double> out(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
        out[r] = layer.bias[r] + dot(layer.weights.data() + r * layer.in, input.data(), layer.in);
    }
    apply_activation(out, act);
    return out;
}

DenseGrads dense_backward(std::span<const double> input, const DenseLayer& layer, std::span<const double> grad_out) {
    layer.validate();
    if (input.size() != layer.in || grad_out.size() != layer.out) {
        throw ShapeError("dense backward: input " + std::to_string(input.size()) + "/" + std::to_string(layer.in) +
                         ", grad_out " + std::to_string(grad_out.size()) + "/" + std::to_string(layer.out));
    }
    DenseGrads g{std::vector<double>(layer.in, 0.0), std::vector<double>(layer.weights.size(), 0.0),
                 std::vector<double>(grad_out.begin(), grad_out.end())};
    for (std::size_t r = 0; r < layer.out; ++r) {
        const double gr = grad_out[r];
        if (gr == 0.0) continue;
        axpy(gr, input.data(), g.weights.data() + r * layer.in, layer.in);
        axpy(gr, layer.weights.data() + r * layer.in, g.input.data(), layer.in);
    }
    return g;
}

}  // namespace flamesift::kernels
