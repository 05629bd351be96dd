#include "flamesift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "flamesift/errors.hpp"

namespace flamesift {

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double normal() {
        // Box-Muller; u1 kept away from zero.
        const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    /// Geometric on {1, 2, ...} with the given mean.
    std::size_t geometric(double mean) {
        if (mean <= 1.0) return 1;
        const double q = 1.0 / mean;
        const double u = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        return 1 + static_cast<std::size_t>(std::floor(std::log(u) / std::log1p(-q)));
    }

private:
    std::uint64_t state_;
};

struct FramePlan {
    bool vortex = false;
    double contrast = 0.0;
};

double gauss(double d, double sigma) { return std::exp(-0.5 * (d / sigma) * (d / sigma)); }

void render(const SynthParams& p, std::size_t index, const FramePlan& plan, Frame& f) {
    Rng rng(p.seed ^ (0xa0761d6478bd642fULL * (index + 1)));
    const double flicker = 1.0 + 0.02 * rng.normal();
    const double wobble = 0.008 * rng.normal();
    const double phase0 = std::fmod(static_cast<double>(index) / p.shedding_period, 1.0);
    const double head_u = 0.85 - 0.6 * phase0;  // vortex head drifts downstream (leftwards)
    const double contrast_jitter = 0.85 + 0.15 * rng.uniform();

    f.pixels.resize(p.height * p.width);
    for (std::size_t y = 0; y < p.height; ++y) {
        const double v = p.height > 1 ? static_cast<double>(y) / static_cast<double>(p.height - 1) : 0.5;
        for (std::size_t x = 0; x < p.width; ++x) {
            const double u = p.width > 1 ? static_cast<double>(x) / static_cast<double>(p.width - 1) : 0.5;
            const double ramp = 0.25 + 0.75 * u;
            double value = 16.0 + 120.0 * flicker * ramp * gauss(v - 0.5 - wobble, 0.11);
            if (plan.vortex) {
                const double c = 150.0 * plan.contrast * contrast_jitter;
                const double lobes = gauss(u - head_u, 0.14) * (gauss(v - 0.32, 0.13) + gauss(v - 0.68, 0.13));
                const double stalk = (u > head_u ? 1.0 : gauss(u - head_u, 0.05)) * gauss(v - 0.5, 0.05);
                value += c * (lobes + 0.4 * stalk);
            }
            value += p.noise * rng.normal();
            f.pixels[y * p.width + x] = static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0));
        }
    }
}

}  // namespace

const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::stable: return "stable";
        case Regime::unstable: return "unstable";
        case Regime::intermittent: return "intermittent";
    }
    return "?";
}

void SynthParams::validate() const {
    if (frames == 0) throw ConfigError("synthetic sequence needs at least one frame");
    if (height == 0 || width == 0) throw ConfigError("synthetic frame dimensions must be >= 1");
    if (!(noise >= 0.0)) throw ConfigError("noise level must be >= 0");
    if (!(burst_mean >= 1.0) || !(burst_gap >= 1.0)) throw ConfigError("burst length and gap means must be >= 1");
    if (!(shedding_period > 0.0)) throw ConfigError("shedding period must be > 0");
    if (schedule.empty()) throw ConfigError("schedule is empty");
    if (schedule.front().start_index != 0) {
        throw ConfigError("schedule must start at frame 0, first entry starts at " +
                          std::to_string(schedule.front().start_index));
    }
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& e = schedule[i];
        if (e.start_index >= frames) {
            throw ConfigError("schedule index " + std::to_string(e.start_index) + " is out of range for " +
                              std::to_string(frames) + " frames");
        }
        if (i > 0 && e.start_index <= schedule[i - 1].start_index) {
            throw ConfigError("schedule index " + std::to_string(e.start_index) + " is not strictly increasing");
        }
        if (!(e.intensity >= 0.0 && e.intensity <= 1.0)) {
            throw ConfigError("schedule intensity at index " + std::to_string(e.start_index) + " outside [0, 1]");
        }
    }
}

std::vector<ScheduleEntry> parse_schedule(std::string_view text) {
    std::vector<ScheduleEntry> out;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::vector<std::string> parts;
        std::stringstream is(item);
        std::string part;
        while (std::getline(is, part, ':')) parts.push_back(part);
        if (parts.size() < 2 || parts.size() > 3) {
            throw ConfigError("schedule entry '" + item + "' is not regime:start[:intensity]");
        }
        ScheduleEntry e;
        if (parts[0] == "stable") e.regime = Regime::stable;
        else if (parts[0] == "unstable") e.regime = Regime::unstable;
        else if (parts[0] == "intermittent") e.regime = Regime::intermittent;
        else throw ConfigError("unknown regime '" + parts[0] + "' in schedule");
        e.intensity = e.regime == Regime::intermittent ? 0.6 : 1.0;
        try {
            std::size_t used = 0;
            if (parts[1].empty() || parts[1][0] == '-') throw std::invalid_argument("start");
            e.start_index = static_cast<std::size_t>(std::stoull(parts[1], &used));
            if (used != parts[1].size()) throw std::invalid_argument("start");
            if (parts.size() == 3) {
                e.intensity = std::stod(parts[2], &used);
                if (used != parts[2].size()) throw std::invalid_argument("intensity");
            }
        } catch (const std::logic_error&) {
            throw ConfigError("malformed number in schedule entry '" + item + "'");
        }
        out.push_back(e);
    }
    if (out.empty()) throw ConfigError("schedule is empty");
    return out;
}

FrameDataset synth_generate(const SynthParams& params) {
    params.validate();
    std::vector<FramePlan> plans(params.frames);
    Rng bursts(params.seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    for (std::size_t s = 0; s < params.schedule.size(); ++s) {
        const auto& e = params.schedule[s];
        const std::size_t end = s + 1 < params.schedule.size() ? params.schedule[s + 1].start_index : params.frames;
        if (e.regime == Regime::unstable) {
            for (std::size_t i = e.start_index; i < end; ++i) plans[i] = {true, e.intensity};
        } else if (e.regime == Regime::intermittent) {
            // Each intermittent run opens with a burst, then alternates quiet gaps and bursts.
            std::size_t i = e.start_index;
            while (i < end) {
                const std::size_t len = std::min<std::size_t>(bursts.geometric(params.burst_mean),
                                                              static_cast<std::size_t>(4.0 * params.burst_mean));
                for (std::size_t k = i; k < std::min(end, i + len); ++k) plans[k] = {true, e.intensity};
                i += len + bursts.geometric(params.burst_gap);
            }
        }
    }

    FrameDataset ds;
    ds.frames.resize(params.frames);
    for (std::size_t i = 0; i < params.frames; ++i) {
        Frame& f = ds.frames[i];
        f.height = params.height;
        f.width = params.width;
        f.sequence_index = i;
        f.source_id = params.source_id;
        f.label = plans[i].vortex ? Label::unstable : Label::stable;
        render(params, i, plans[i], f);
    }
    return ds;
}

}  // namespace flamesift
