#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flamesift/dataflow.hpp"
#include "flamesift/network.hpp"

namespace flamesift {

/// Correlation ratio of the output values against the 8-bit intensity bins of
/// the input frame. `eta` is the reported instability measure (0 when output
/// does not depend on the input bins, 1 when it is a function of them);
/// `within_ratio` is sum_i Z_i sigma_i / (Z sigma) and eta = 1 - within_ratio.
struct CorrelationRatioResult {
    double eta = 0.0;
    double within_ratio = 1.0;
    std::array<std::size_t, 256> bin_counts{};
    std::size_t total_count = 0;
    std::array<double, 256> conditional_variances{};
    double total_variance = 0.0;
};

inline constexpr double kConstantOutputVariance = 1e-12;

/// Outputs whose total variance is at most 1e-12 score eta = 0.
CorrelationRatioResult correlation_ratio(std::span<const std::uint8_t> bins, std::span<const double> values);
CorrelationRatioResult correlation_ratio(const Frame& input, const Tensor& output);

struct SmoothResult {
    std::vector<double> values;
    bool degenerate_window = false;  // window of <= 2 points: values are the input
};

/// Local linear regression with tricube weights over a centered window of
/// ceil(window_fraction * n) points, shifted inward at the series ends.
SmoothResult smooth_trace(std::span<const double> raw, double window_fraction = 0.05);

enum class EventKind { intermittency, onset };
const char* to_string(EventKind kind);

struct Event {
    EventKind kind = EventKind::intermittency;
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    bool operator==(const Event&) const = default;
};

/// Onset: first index where `smoothed` stays >= threshold for at least
/// `sustain` frames (the event spans the whole run). Intermittency: maximal
/// runs of `raw` >= threshold shorter than `sustain` that end before onset.
std::vector<Event> detect_events(std::span<const double> smoothed, std::span<const double> raw, double threshold,
                                 std::size_t sustain);

/// Min-max scaling to [0, 1]; constant series map to 0.5.
std::vector<double> soft_labels(std::span<const double> smoothed);

struct AnalysisConfig {
    double threshold = 0.5;
    std::size_t sustain = 30;
    double window_fraction = 0.05;
    std::size_t workers = 1;
};

struct InstabilityTrace {
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::vector<double> soft_labels;
    std::vector<Event> events;
    bool smoothing_degenerate = false;

    std::optional<Event> onset() const;
    std::size_t intermittency_count() const;
};

/// Instability measure of one reconstruction: the output is mapped back to
/// 8-bit pixel space with `denormalize`, then scored against the input's bins.
double output_measure(const Frame& input, const Tensor& output);

/// Normalizes the frame (resized to the model input if needed), runs the
/// network and scores the reconstruction against the frame.
double frame_measure(const Model& model, const Frame& frame);

/// Smoothing, event detection and soft labels over an already measured series.
InstabilityTrace build_trace(std::vector<double> raw, const AnalysisConfig& cfg);

InstabilityTrace analyze_sequence(const Model& model, std::span<const Frame> frames, const AnalysisConfig& cfg = {});

/// `frame_index,raw,smoothed,soft_label,event` with event one of "",
/// "intermittency", "onset" for every frame inside an event.
std::string trace_csv(const InstabilityTrace& trace);
std::string trace_summary(const InstabilityTrace& trace);

}  // namespace flamesift
