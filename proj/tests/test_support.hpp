#pragma once

// Test-only helpers: random generators and brute-force oracles that share no
// code with the kernels they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "flamesift/network.hpp"
#include "flamesift/tensor.hpp"

namespace flamesift::testing {

inline double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
}

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor(s, random_vector(s.size(), rng, lo, hi));
}

// out[o][y][x] = b[o] + sum_i sum_a sum_b w[o][i][a][b] * in[i][y+a][x+b]
inline Tensor oracle_conv(const Tensor& in, std::size_t out_maps, std::size_t c, const std::vector<double>& w,
                          const std::vector<double>& b, bool relu) {
    const std::size_t zi = in.maps(), oh = in.height() - c + 1, ow = in.width() - c + 1;
    Tensor out(Shape{out_maps, oh, ow});
    for (std::size_t o = 0; o < out_maps; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = b[o];
                for (std::size_t i = 0; i < zi; ++i)
                    for (std::size_t a = 0; a < c; ++a)
                        for (std::size_t bb = 0; bb < c; ++bb)
                            s += w[((o * zi + i) * c + a) * c + bb] * in.at(i, y + a, x + bb);
                out.at(o, y, x) = relu ? std::max(0.0, s) : s;
            }
    return out;
}

// Full correlation: out[o][y][x] sums every in[i][y-a'][x-b'] that lands in range.
inline Tensor oracle_full_conv(const Tensor& in, std::size_t out_maps, std::size_t c, const std::vector<double>& w,
                               const std::vector<double>& b, bool relu) {
    const std::size_t zi = in.maps(), oh = in.height() + c - 1, ow = in.width() + c - 1;
    Tensor out(Shape{out_maps, oh, ow});
    const auto pad = static_cast<long>(c) - 1;
    for (std::size_t o = 0; o < out_maps; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = b[o];
                for (std::size_t i = 0; i < zi; ++i)
                    for (std::size_t a = 0; a < c; ++a)
                        for (std::size_t bb = 0; bb < c; ++bb) {
                            const long sy = static_cast<long>(y + a) - pad;
                            const long sx = static_cast<long>(x + bb) - pad;
                            if (sy < 0 || sx < 0 || sy >= static_cast<long>(in.height()) ||
                                sx >= static_cast<long>(in.width()))
                                continue;
                            s += w[((o * zi + i) * c + a) * c + bb] * in.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                        }
                out.at(o, y, x) = relu ? std::max(0.0, s) : s;
            }
    return out;
}

inline Tensor oracle_maxpool(const Tensor& in, std::size_t p) {
    Tensor out(Shape{in.maps(), in.height() / p, in.width() / p});
    for (std::size_t z = 0; z < out.maps(); ++z)
        for (std::size_t k = 0; k < out.height(); ++k)
            for (std::size_t l = 0; l < out.width(); ++l) {
                std::vector<double> window;
                for (std::size_t a = 0; a < p; ++a)
                    for (std::size_t b = 0; b < p; ++b) window.push_back(in.at(z, k * p + a, l * p + b));
                out.at(z, k, l) = *std::max_element(window.begin(), window.end());
            }
    return out;
}

inline Tensor oracle_unpool(const Tensor& in, std::size_t f) {
    Tensor out(Shape{in.maps(), in.height() * f, in.width() * f});
    for (std::size_t z = 0; z < in.maps(); ++z)
        for (std::size_t y = 0; y < in.height(); ++y)
            for (std::size_t x = 0; x < in.width(); ++x)
                for (std::size_t a = 0; a < f; ++a)
                    for (std::size_t b = 0; b < f; ++b) out.at(z, y * f + a, x * f + b) = in.at(z, y, x);
    return out;
}

inline std::vector<double> oracle_dense(const std::vector<double>& in, std::size_t out, const std::vector<double>& w,
                                        const std::vector<double>& b, bool relu) {
    std::vector<double> y(out);
    for (std::size_t r = 0; r < out; ++r) {
        double s = b[r];
        for (std::size_t c = 0; c < in.size(); ++c) s += w[r * in.size() + c] * in[c];
        y[r] = relu ? std::max(0.0, s) : s;
    }
    return y;
}

/// Central difference of f with respect to x[i].
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|), with an absolute floor for values that are both tiny.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

/// Small random network exercising every layer kind on a 1x8x8 input.
inline NetworkConfig random_tiny_config(std::mt19937_64& rng) {
    using kernels::Activation;
    auto pick = [&](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng() % (hi - lo + 1)); };
    auto act = [&]() { return rng() % 2 ? Activation::relu : Activation::identity; };
    NetworkConfig c;
    c.input = {1, 8, 8};
    c.seed = rng();
    const std::size_t z1 = pick(1, 3), z2 = pick(1, 3), units = pick(2, 6);
    switch (rng() % 3) {
        case 0:  // 8 -conv3-> 6 -pool2-> 3 -> dense -> 3x3 -unpool2-> 6 -deconv3-> 8
            c.layers = {LayerSpec::conv(z1, 3, act()), LayerSpec::pool(2), LayerSpec::flatten(),
                        LayerSpec::dense(units, act()), LayerSpec::dense(z2 * 9, act()), LayerSpec::reshape(z2, 3, 3),
                        LayerSpec::unpool(2), LayerSpec::deconv(1, 3, Activation::identity)};
            break;
        case 1:  // 8 -conv1-> 8 -pool2-> 4 -conv3-> 2 -> dense -> 2x2 -unpool2-> 4 -deconv5-> 8
            c.layers = {LayerSpec::conv(z1, 1, act()),  LayerSpec::pool(2),
                        LayerSpec::conv(z2, 3, act()),  LayerSpec::flatten(),
                        LayerSpec::dense(units, act()), LayerSpec::dense(z2 * 4, act()),
                        LayerSpec::reshape(z2, 2, 2),   LayerSpec::unpool(2),
                        LayerSpec::deconv(1, 5, Activation::identity)};
            break;
        default:  // 8 -conv3-> 6 -conv3-> 4 -pool2-> 2 -> dense -> 3x3 -unpool2-> 6 -deconv3-> 8
            c.layers = {LayerSpec::conv(z1, 3, act()),  LayerSpec::conv(z2, 3, act()),
                        LayerSpec::pool(2),             LayerSpec::flatten(),
                        LayerSpec::dense(units, act()), LayerSpec::dense(z1 * 9, act()),
                        LayerSpec::reshape(z1, 3, 3),   LayerSpec::unpool(2),
                        LayerSpec::deconv(1, 3, Activation::identity)};
            break;
    }
    return c;
}

/// Sign pattern of every ReLU output plus every pooling argmax: if two
/// parameter settings share a pattern, the network is smooth between them.
inline std::vector<std::uint32_t> activation_pattern(const Model& model, const Tensor& input) {
    LayerCache cache;
    forward(model, input, &cache);
    std::vector<std::uint32_t> pattern;
    const auto& layers = model.config().layers;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (layers[k].has_params() && layers[k].activation == kernels::Activation::relu) {
            for (double v : cache.activations[k + 1].data()) pattern.push_back(v > 0.0 ? 1u : 0u);
        }
        for (const auto& off : cache.argmax[k].offsets) pattern.push_back(off.row * 65536u + off.col);
    }
    return pattern;
}

// Between-group over total sum of squares, straight from the definition.
inline double eta_oracle(const std::vector<std::uint8_t>& bins, const std::vector<double>& y) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double total = 0.0, between = 0.0;
    for (double v : y) total += (v - mean) * (v - mean);
    for (int b = 0; b < 256; ++b) {
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t k = 0; k < y.size(); ++k)
            if (bins[k] == b) {
                s += y[k];
                ++c;
            }
        if (c == 0) continue;
        const double m = s / static_cast<double>(c);
        between += static_cast<double>(c) * (m - mean) * (m - mean);
    }
    return between / total;
}

// Weighted least squares line through the window, solved around the weighted
// centroid and evaluated at the target index.
inline std::vector<double> wls_oracle(const std::vector<double>& y, double fraction) {
    const std::size_t n = y.size();
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        long lo = static_cast<long>(i) - static_cast<long>(k / 2);
        lo = std::clamp<long>(lo, 0, static_cast<long>(n - k));
        const long hi = lo + static_cast<long>(k) - 1;
        const double h = std::max<double>(static_cast<double>(i) - lo, hi - static_cast<double>(i)) + 1.0;
        double sw = 0.0, sx = 0.0, sy = 0.0;
        std::vector<double> w;
        for (long j = lo; j <= hi; ++j) {
            const double r = std::abs(static_cast<double>(j) - static_cast<double>(i)) / h;
            const double t = std::pow(1.0 - r * r * r, 3);
            w.push_back(t);
            sw += t;
            sx += t * static_cast<double>(j);
            sy += t * y[static_cast<std::size_t>(j)];
        }
        const double xbar = sx / sw, ybar = sy / sw;
        double sxx = 0.0, sxy = 0.0;
        for (long j = lo; j <= hi; ++j) {
            const double t = w[static_cast<std::size_t>(j - lo)];
            sxx += t * (j - xbar) * (j - xbar);
            sxy += t * (j - xbar) * (y[static_cast<std::size_t>(j)] - ybar);
        }
        out[i] = ybar + (sxy / sxx) * (static_cast<double>(i) - xbar);
    }
    return out;
}

}  // namespace flamesift::testing
