#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flamesift/dataflow.hpp"

namespace flamesift {

enum class Regime { stable, unstable, intermittent };

const char* to_string(Regime regime);

struct ScheduleEntry {
    std::size_t start_index = 0;
    Regime regime = Regime::stable;
    double intensity = 1.0;  // in [0, 1]
};

/// Synthetic flame video standing in for high-speed combustor footage. The
/// inlet sits on the right and the flame flows left.
struct SynthParams {
    std::uint64_t seed = 1;
    std::size_t frames = 100;
    std::vector<ScheduleEntry> schedule{{0, Regime::stable, 1.0}};
    double noise = 4.0;            // Gaussian pixel noise, grey levels
    std::size_t height = 64;
    std::size_t width = 64;
    double burst_mean = 5.0;       // mean burst length inside intermittent runs
    double burst_gap = 200.0;      // mean quiet frames between bursts
    double shedding_period = 40.0; // frames for a vortex head to cross the frame
    std::string source_id = "synthetic";

    /// First entry at frame 0, indices strictly increasing and < frames,
    /// intensities in [0, 1].
    void validate() const;
};

/// Parses `regime:start[:intensity],...`, e.g. "stable:0,unstable:1000".
/// Intermittent entries default to intensity 0.6, others to 1.0.
std::vector<ScheduleEntry> parse_schedule(std::string_view text);

/// Deterministic for a seed. Labels follow the regime: intermittent runs are
/// stable except for their bursts, which are labeled unstable.
FrameDataset synth_generate(const SynthParams& params);

}  // namespace flamesift
