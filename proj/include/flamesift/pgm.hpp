#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace flamesift::pgm {

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

/// Binary (P5) 8-bit greymap with maxval 255. Header comments are skipped.
Image decode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode(const Image& image);

Image read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image& image);

}  // namespace flamesift::pgm
