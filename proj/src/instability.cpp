#include "flamesift/instability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "flamesift/errors.hpp"
#include "flamesift/parallel.hpp"

namespace flamesift {

CorrelationRatioResult correlation_ratio(std::span<const std::uint8_t> bins, std::span<const double> values) {
    if (bins.size() != values.size()) {
        throw ShapeError("correlation ratio: " + std::to_string(bins.size()) + " input pixels vs " +
                         std::to_string(values.size()) + " output values");
    }
    CorrelationRatioResult r;
    r.total_count = values.size();
    if (values.empty()) return r;

    std::array<double, 256> bin_mean{};
    double mean = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        ++r.bin_counts[bins[k]];
        bin_mean[bins[k]] += values[k];
        mean += values[k];
    }
    mean /= static_cast<double>(values.size());
    for (std::size_t b = 0; b < 256; ++b) {
        if (r.bin_counts[b] > 0) bin_mean[b] /= static_cast<double>(r.bin_counts[b]);
    }
    std::array<double, 256> bin_ss{};
    double total_ss = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double d = values[k] - bin_mean[bins[k]];
        bin_ss[bins[k]] += d * d;
        const double t = values[k] - mean;
        total_ss += t * t;
    }
    double within = 0.0;  // sum_i Z_i sigma_i
    for (std::size_t b = 0; b < 256; ++b) {
        if (r.bin_counts[b] == 0) continue;
        r.conditional_variances[b] = bin_ss[b] / static_cast<double>(r.bin_counts[b]);
        within += bin_ss[b];
    }
    r.total_variance = total_ss / static_cast<double>(values.size());
    if (r.total_variance <= kConstantOutputVariance) {
        r.within_ratio = 1.0;
        r.eta = 0.0;
        return r;
    }
    r.within_ratio = within / total_ss;
    r.eta = std::clamp(1.0 - r.within_ratio, 0.0, 1.0);
    return r;
}

CorrelationRatioResult correlation_ratio(const Frame& input, const Tensor& output) {
    if (output.maps() != 1 || output.height() != input.height || output.width() != input.width) {
        throw ShapeError("correlation ratio: frame " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                         " vs output " + output.shape().to_string());
    }
    return correlation_ratio(input.pixels, output.data());
}

SmoothResult smooth_trace(std::span<const double> raw, double window_fraction) {
    if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
        throw ConfigError("smoothing window fraction must be in (0, 1]");
    }
    const std::size_t n = raw.size();
    SmoothResult r;
    const auto k = static_cast<std::size_t>(std::ceil(window_fraction * static_cast<double>(n)));
    if (n < 2 || k <= 2) {
        r.values.assign(raw.begin(), raw.end());
        r.degenerate_window = true;
        return r;
    }
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = std::min(i - std::min(i, k / 2), n - k);
        const std::size_t hi = lo + k - 1;
        // Bandwidth one step past the farthest window point keeps every point weighted.
        const double h = static_cast<double>(std::max(i - lo, hi - i)) + 1.0;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            const double d = static_cast<double>(j) - static_cast<double>(i);
            const double q = 1.0 - std::pow(std::abs(d) / h, 3);
            const double w = q * q * q;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            t0 += w * raw[j];
            t1 += w * d * raw[j];
        }
        const double det = s0 * s2 - s1 * s1;
        r.values[i] = det > 1e-12 * s0 * s2 ? (s2 * t0 - s1 * t1) / det : t0 / s0;
    }
    return r;
}

const char* to_string(EventKind kind) { return kind == EventKind::onset ? "onset" : "intermittency"; }

std::vector<Event> detect_events(std::span<const double> smoothed, std::span<const double> raw, double threshold,
                                 std::size_t sustain) {
    if (smoothed.size() != raw.size()) throw ShapeError("smoothed and raw series differ in length");
    if (sustain == 0) throw ConfigError("sustain must be >= 1");
    const std::size_t n = raw.size();

    std::optional<Event> onset;
    for (std::size_t i = 0; i < n && !onset;) {
        if (smoothed[i] < threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && smoothed[j] >= threshold) ++j;
        if (j - i >= sustain) onset = Event{EventKind::onset, i, j - 1};
        i = j;
    }

    std::vector<Event> events;
    const std::size_t limit = onset ? onset->start : n;
    for (std::size_t i = 0; i < limit;) {
        if (raw[i] < threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && raw[j] >= threshold) ++j;
        if (j <= limit && j - i < sustain) events.push_back(Event{EventKind::intermittency, i, j - 1});
        i = j;
    }
    if (onset) events.push_back(*onset);
    return events;
}

std::vector<double> soft_labels(std::span<const double> smoothed) {
    if (smoothed.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(smoothed.begin(), smoothed.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(smoothed.size(), 0.5);
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < smoothed.size(); ++i) out[i] = std::clamp((smoothed[i] - lo) / (hi - lo), 0.0, 1.0);
    return out;
}

std::optional<Event> InstabilityTrace::onset() const {
    for (const auto& e : events) {
        if (e.kind == EventKind::onset) return e;
    }
    return std::nullopt;
}

std::size_t InstabilityTrace::intermittency_count() const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [](const Event& e) { return e.kind == EventKind::intermittency; }));
}

double output_measure(const Frame& input, const Tensor& output) {
    const Frame pixels = denormalize(output, input);
    const std::vector<double> values(pixels.pixels.begin(), pixels.pixels.end());
    return correlation_ratio(input.pixels, values).eta;
}

double frame_measure(const Model& model, const Frame& frame) {
    const Frame fitted = fit_to(frame, model.input_shape());
    return output_measure(fitted, forward(model, normalize(fitted)));
}

InstabilityTrace build_trace(std::vector<double> raw, const AnalysisConfig& cfg) {
    InstabilityTrace t;
    auto smooth = smooth_trace(raw, cfg.window_fraction);
    t.smoothed = std::move(smooth.values);
    t.smoothing_degenerate = smooth.degenerate_window;
    t.events = detect_events(t.smoothed, raw, cfg.threshold, cfg.sustain);
    t.soft_labels = soft_labels(t.smoothed);
    t.raw = std::move(raw);
    return t;
}

InstabilityTrace analyze_sequence(const Model& model, std::span<const Frame> frames, const AnalysisConfig& cfg) {
    if (frames.empty()) throw ConfigError("cannot analyze an empty frame sequence");
    std::vector<double> raw(frames.size());
    parallel_for(frames.size(), cfg.workers, [&](std::size_t i) { raw[i] = frame_measure(model, frames[i]); });
    return build_trace(std::move(raw), cfg);
}

std::string trace_csv(const InstabilityTrace& trace) {
    std::vector<const char*> tag(trace.raw.size(), "");
    for (const auto& e : trace.events) {
        for (std::size_t i = e.start; i <= e.end && i < tag.size(); ++i) tag[i] = to_string(e.kind);
    }
    std::string out = "frame_index,raw,smoothed,soft_label,event\n";
    char buf[192];
    for (std::size_t i = 0; i < trace.raw.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%s\n", i, trace.raw[i], trace.smoothed[i],
                      trace.soft_labels[i], tag[i]);
        out += buf;
    }
    return out;
}

std::string trace_summary(const InstabilityTrace& trace) {
    std::string out;
    char buf[160];
    for (const auto& e : trace.events) {
        if (e.kind != EventKind::intermittency) continue;
        std::snprintf(buf, sizeof buf, "intermittency: frames %zu-%zu\n", e.start, e.end);
        out += buf;
    }
    if (const auto on = trace.onset()) {
        std::snprintf(buf, sizeof buf, "onset: frame %zu (sustained through %zu)\n", on->start, on->end);
        out += buf;
    } else {
        out += "no onset detected\n";
    }
    std::snprintf(buf, sizeof buf, "intermittency events before onset: %zu\n", trace.intermittency_count());
    out += buf;
    return out;
}

}  // namespace flamesift
