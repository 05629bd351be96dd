#include "flamesift/io_util.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "flamesift/errors.hpp"

namespace flamesift::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError(ParseErrorKind::io_failure, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw ParseError(ParseErrorKind::io_failure, "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ParseError(ParseErrorKind::io_failure, "cannot rename onto " + path.string() + ": " + ec.message());
    }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseErrorKind::missing_file, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw ParseError(ParseErrorKind::io_failure, "read failed for " + path.string());
    return bytes;
}

void ByteWriter::u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::finish_with_crc() { u32(crc32(bytes_)); }

std::span<const std::uint8_t> ByteReader::raw(std::size_t n, const char* what) {
    if (remaining() < n) {
        throw ParseError(ParseErrorKind::truncated, std::string("need ") + std::to_string(n) + " bytes for " + what +
                                                        ", " + std::to_string(remaining()) + " left");
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint8_t ByteReader::u8(const char* what) { return raw(1, what)[0]; }

std::uint16_t ByteReader::u16(const char* what) {
    auto b = raw(2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32(const char* what) {
    auto b = raw(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> bytes, const char* what) {
    if (bytes.size() < 4) throw ParseError(ParseErrorKind::truncated, std::string(what) + " shorter than its checksum");
    auto payload = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    const std::uint32_t stored = tail.u32("crc");
    if (stored != crc32(payload)) throw ParseError(ParseErrorKind::crc_mismatch, std::string(what) + " checksum mismatch");
    return payload;
}

}  // namespace flamesift::io
