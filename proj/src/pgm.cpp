#include "flamesift/pgm.hpp"

#include <cctype>
#include <string>

#include "flamesift/errors.hpp"
#include "flamesift/io_util.hpp"

namespace flamesift::pgm {

namespace {

class HeaderScanner {
public:
    explicit HeaderScanner(std::span<const std::uint8_t> b) : bytes_(b) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
            throw ParseError(ParseErrorKind::bad_header, std::string("expected ") + what);
        }
        unsigned long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1'000'000) throw ParseError(ParseErrorKind::bad_header, std::string(what) + " out of range");
        }
        return v;
    }

    std::size_t pos_ = 0;
    std::span<const std::uint8_t> bytes_;
};

}  // namespace

Image decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw ParseError(ParseErrorKind::bad_header, "not a binary PGM (P5)");
    }
    HeaderScanner s(bytes);
    s.pos_ = 2;
    Image img;
    img.width = s.number("width");
    img.height = s.number("height");
    const unsigned long maxval = s.number("maxval");
    if (img.width == 0 || img.height == 0) throw ParseError(ParseErrorKind::bad_header, "zero image dimension");
    if (maxval == 0 || maxval > 255) {
        throw ParseError(ParseErrorKind::bad_header, "maxval " + std::to_string(maxval) + " is not 8-bit");
    }
    if (s.pos_ >= bytes.size() || !std::isspace(bytes[s.pos_])) {
        throw ParseError(ParseErrorKind::bad_header, "missing separator before raster");
    }
    ++s.pos_;
    const std::size_t n = img.width * img.height;
    if (bytes.size() - s.pos_ < n) {
        throw ParseError(ParseErrorKind::truncated, "raster needs " + std::to_string(n) + " bytes");
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(s.pos_),
                      bytes.begin() + static_cast<std::ptrdiff_t>(s.pos_ + n));
    if (maxval != 255) {
        for (auto& p : img.pixels) {
            p = static_cast<std::uint8_t>((static_cast<unsigned>(p) * 255u + maxval / 2) / maxval);
        }
    }
    return img;
}

std::vector<std::uint8_t> encode(const Image& image) {
    if (image.pixels.size() != image.width * image.height) throw ShapeError("PGM pixel count does not match dimensions");
    io::ByteWriter w;
    w.text("P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
    w.raw(image.pixels);
    return w.take();
}

Image read(const std::filesystem::path& path) {
    try {
        return decode(io::read_file(path));
    } catch (const ParseError& e) {
        if (e.kind() == ParseErrorKind::missing_file) throw;
        throw ParseError(e.kind(), path.string() + ": " + e.what());
    }
}

void write(const std::filesystem::path& path, const Image& image) { io::write_file_atomic(path, encode(image)); }

}  // namespace flamesift::pgm
