#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flamesift/network.hpp"

namespace flamesift {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
    std::uint32_t epoch = 0;
    double best_valid_loss = 0.0;

    bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
    Model model;
    TrainingMeta meta;
};

// Layout: "FSCK", u32 version, u32 descriptor length, descriptor text,
// f32 parameters in layer order (weights then bias), u32 CRC32. All
// little-endian. Training metadata rides in the descriptor as a `meta` line.
std::vector<std::uint8_t> encode_checkpoint(const Model& model, const TrainingMeta& meta = {});
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path, const TrainingMeta& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flamesift
