#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flamesift::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Writes to `<path>.tmp` and renames over `path` once the write succeeded,
/// so a failed run never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// Throws ParseError(missing_file) when absent.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void f32(float v);
    void raw(std::span<const std::uint8_t> v) { bytes_.insert(bytes_.end(), v.begin(), v.end()); }
    void text(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    /// Appends CRC32 of everything written so far.
    void finish_with_crc();

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; every overrun throws
/// ParseError(truncated) mentioning `what`.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8(const char* what);
    std::uint16_t u16(const char* what);
    std::uint32_t u32(const char* what);
    float f32(const char* what);
    std::span<const std::uint8_t> raw(std::size_t n, const char* what);
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

/// Checks the trailing CRC32 of a framed file and returns the payload without it.
std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> bytes, const char* what);

}  // namespace flamesift::io
