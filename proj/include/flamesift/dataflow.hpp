#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flamesift/tensor.hpp"
#include "flamesift/training.hpp"

namespace flamesift {

enum class Label : std::uint8_t { stable = 0, unstable = 1, unlabeled = 2 };

const char* to_string(Label label);
/// Throws ParseError(bad_label) for anything but stable/unstable/unlabeled.
Label parse_label(std::string_view token);

/// 8-bit greyscale frame, row-major.
struct Frame {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
    Label label = Label::unlabeled;
    std::size_t sequence_index = 0;
    std::string source_id;

    std::uint8_t at(std::size_t y, std::size_t x) const noexcept { return pixels[y * width + x]; }
    bool operator==(const Frame&) const = default;
};

struct FrameDataset {
    std::vector<Frame> frames;
    std::string condition;  // free-form run name, e.g. "500_40to30"

    std::size_t count(Label label) const noexcept;
    /// Pixel buffers match their dimensions and sequence indices strictly
    /// increase within each source.
    void validate() const;
    bool operator==(const FrameDataset&) const = default;
};

/// Corner-aligned bilinear resampling, rounded half away from zero.
Frame resize_bilinear(const Frame& frame, std::size_t out_h, std::size_t out_w);

/// Zero mean, unit population standard deviation; constant frames map to zeros.
Tensor normalize(const Frame& frame);

/// Inverse of `normalize` with `reference`'s mean and deviation, rounded and
/// clamped to 8 bits. The mean offset is scaled by the output's own contrast
/// (capped at 1), so an exact reconstruction inverts exactly while a masked,
/// all-zero output comes back black.
Frame denormalize(const Tensor& output, const Frame& reference);

/// Stable frames train toward black (all zeros), unstable frames toward
/// their own normalized pixels.
Tensor make_selective_target(const Frame& frame);

/// Resized copy when the frame does not already have the model's spatial dims.
Frame fit_to(const Frame& frame, Shape input);

/// Input/target pairs for selective training. Every frame must be labeled.
std::vector<Sample> make_training_samples(const FrameDataset& dataset, Shape input);

// Manifest: `<relative_path>,<label>,<sequence_index>` per line, '#' lines
// carry `source:` and `condition:` metadata. Frames are P5 PGM files.
void save_manifest_dataset(const FrameDataset& dataset, const std::filesystem::path& dir,
                           std::string_view manifest_name = "manifest.csv");
FrameDataset load_manifest(const std::filesystem::path& manifest_path);

// Packed: "FSDS", u32 version, u32 count, u16 H, u16 W, count*H*W pixels,
// count label bytes, u32 CRC32; little-endian.
std::vector<std::uint8_t> encode_packed(const FrameDataset& dataset);
FrameDataset decode_packed(std::span<const std::uint8_t> bytes);
void save_packed(const FrameDataset& dataset, const std::filesystem::path& path);
FrameDataset load_packed(const std::filesystem::path& path);

/// `.fsds` files load as packed datasets, anything else as a manifest.
FrameDataset load_dataset(const std::filesystem::path& path);

}  // namespace flamesift
