#include "flamesift/dataflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "flamesift/errors.hpp"
#include "flamesift/io_util.hpp"
#include "flamesift/pgm.hpp"

namespace flamesift {

namespace {

constexpr char kPackedMagic[4] = {'F', 'S', 'D', 'S'};
constexpr std::uint32_t kPackedVersion = 1;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const char* to_string(Label label) {
    switch (label) {
        case Label::stable: return "stable";
        case Label::unstable: return "unstable";
        case Label::unlabeled: return "unlabeled";
    }
    return "?";
}

Label parse_label(std::string_view token) {
    if (token == "stable") return Label::stable;
    if (token == "unstable") return Label::unstable;
    if (token == "unlabeled") return Label::unlabeled;
    throw ParseError(ParseErrorKind::bad_label, "unknown label '" + std::string(token) + "'");
}

std::size_t FrameDataset::count(Label label) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(frames.begin(), frames.end(), [&](const Frame& f) { return f.label == label; }));
}

void FrameDataset::validate() const {
    std::map<std::string, std::size_t> last;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        if (f.height == 0 || f.width == 0 || f.pixels.size() != f.height * f.width) {
            throw ConfigError("frame " + std::to_string(i) + " pixel buffer does not match its dimensions");
        }
        auto it = last.find(f.source_id);
        if (it != last.end() && f.sequence_index <= it->second) {
            throw ConfigError("frame " + std::to_string(i) + ": sequence index " + std::to_string(f.sequence_index) +
                              " not increasing within source '" + f.source_id + "'");
        }
        last[f.source_id] = f.sequence_index;
    }
}

Frame resize_bilinear(const Frame& frame, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ConfigError("resize target dimensions must be >= 1");
    if (frame.pixels.size() != frame.height * frame.width || frame.pixels.empty()) {
        throw ShapeError("frame pixel buffer does not match its dimensions");
    }
    Frame out = frame;
    out.height = out_h;
    out.width = out_w;
    out.pixels.assign(out_h * out_w, 0);
    const double sy = out_h > 1 ? static_cast<double>(frame.height - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(frame.width - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = static_cast<double>(y) * sy;
        const auto y0 = std::min(static_cast<std::size_t>(fy), frame.height - 1);
        const std::size_t y1 = std::min(y0 + 1, frame.height - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = static_cast<double>(x) * sx;
            const auto x0 = std::min(static_cast<std::size_t>(fx), frame.width - 1);
            const std::size_t x1 = std::min(x0 + 1, frame.width - 1);
            const double tx = fx - static_cast<double>(x0);
            const double top = frame.at(y0, x0) * (1.0 - tx) + frame.at(y0, x1) * tx;
            const double bottom = frame.at(y1, x0) * (1.0 - tx) + frame.at(y1, x1) * tx;
            const double v = std::round(top * (1.0 - ty) + bottom * ty);
            out.pixels[y * out_w + x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return out;
}

Tensor normalize(const Frame& frame) {
    const std::size_t n = frame.pixels.size();
    Tensor t(Shape{1, frame.height, frame.width});
    if (n == 0) return t;
    double mean = 0.0;
    for (auto p : frame.pixels) mean += p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto p : frame.pixels) var += (p - mean) * (p - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) return t;
    const double inv_sd = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) t.data()[i] = (frame.pixels[i] - mean) * inv_sd;
    return t;
}

Frame denormalize(const Tensor& output, const Frame& reference) {
    if (output.maps() != 1 || output.height() != reference.height || output.width() != reference.width) {
        throw ShapeError("denormalize: output " + output.shape().to_string() + " vs frame " +
                         std::to_string(reference.height) + "x" + std::to_string(reference.width));
    }
    const std::size_t n = reference.pixels.size();
    double mean = 0.0, var = 0.0;
    for (auto p : reference.pixels) mean += p;
    mean /= static_cast<double>(n);
    for (auto p : reference.pixels) var += (p - mean) * (p - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));

    double om = 0.0, ov = 0.0;
    for (double v : output.data()) om += v;
    om /= static_cast<double>(n);
    for (double v : output.data()) ov += (v - om) * (v - om);
    const double contrast = std::min(1.0, std::sqrt(ov / static_cast<double>(n)));

    Frame out = reference;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::round(sd * output.data()[i] + mean * contrast);
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

Tensor make_selective_target(const Frame& frame) {
    switch (frame.label) {
        case Label::stable: return Tensor(Shape{1, frame.height, frame.width});
        case Label::unstable: return normalize(frame);
        case Label::unlabeled: break;
    }
    throw UsageError("selective target requested for an unlabeled frame (sequence " +
                     std::to_string(frame.sequence_index) + ")");
}

Frame fit_to(const Frame& frame, Shape input) {
    if (input.maps != 1) throw ShapeError("frames are single-map; network input is " + input.to_string());
    if (frame.height == input.height && frame.width == input.width) return frame;
    return resize_bilinear(frame, input.height, input.width);
}

std::vector<Sample> make_training_samples(const FrameDataset& dataset, Shape input) {
    std::vector<Sample> samples;
    samples.reserve(dataset.frames.size());
    for (const Frame& f : dataset.frames) {
        if (f.label == Label::unlabeled) {
            throw ConfigError("training set contains an unlabeled frame (sequence " + std::to_string(f.sequence_index) +
                              ")");
        }
        const Frame fitted = fit_to(f, input);
        samples.push_back(Sample{normalize(fitted), make_selective_target(fitted)});
    }
    return samples;
}

void save_manifest_dataset(const FrameDataset& dataset, const std::filesystem::path& dir,
                           std::string_view manifest_name) {
    dataset.validate();
    std::filesystem::create_directories(dir / "frames");
    std::ostringstream manifest;
    if (!dataset.frames.empty()) manifest << "# source: " << dataset.frames.front().source_id << '\n';
    if (!dataset.condition.empty()) manifest << "# condition: " << dataset.condition << '\n';
    char name[64];
    for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
        const Frame& f = dataset.frames[i];
        std::snprintf(name, sizeof name, "frames/frame_%06zu.pgm", i);
        pgm::write(dir / name, pgm::Image{f.width, f.height, f.pixels});
        manifest << name << ',' << to_string(f.label) << ',' << f.sequence_index << '\n';
    }
    io::write_text_atomic(dir / manifest_name, manifest.str());
}

FrameDataset load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ParseError(ParseErrorKind::missing_file, "cannot open manifest " + manifest_path.string());
    const auto base = manifest_path.parent_path();
    FrameDataset ds;
    std::string source = manifest_path.stem().string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            const std::string body = trim(std::string_view(t).substr(1));
            if (body.rfind("source:", 0) == 0) source = trim(std::string_view(body).substr(7));
            if (body.rfind("condition:", 0) == 0) ds.condition = trim(std::string_view(body).substr(10));
            continue;
        }
        const auto where = manifest_path.string() + ":" + std::to_string(lineno);
        std::vector<std::string> fields;
        std::stringstream ss(t);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(trim(field));
        if (fields.size() != 3) throw ParseError(ParseErrorKind::bad_line, where + ": expected path,label,sequence_index");
        Frame f;
        try {
            f.label = parse_label(fields[1]);
        } catch (const ParseError&) {
            throw ParseError(ParseErrorKind::bad_label, where + ": unknown label '" + fields[1] + "'");
        }
        try {
            std::size_t used = 0;
            const unsigned long long seq = std::stoull(fields[2], &used);
            if (used != fields[2].size() || fields[2][0] == '-') throw std::invalid_argument("sequence");
            f.sequence_index = static_cast<std::size_t>(seq);
        } catch (const std::logic_error&) {
            throw ParseError(ParseErrorKind::bad_line, where + ": bad sequence index '" + fields[2] + "'");
        }
        const pgm::Image img = pgm::read(base / fields[0]);
        f.height = img.height;
        f.width = img.width;
        f.pixels = img.pixels;
        f.source_id = source;
        ds.frames.push_back(std::move(f));
    }
    try {
        ds.validate();
    } catch (const ConfigError& e) {
        throw ParseError(ParseErrorKind::bad_line, manifest_path.string() + ": " + e.what());
    }
    return ds;
}

std::vector<std::uint8_t> encode_packed(const FrameDataset& dataset) {
    const std::size_t h = dataset.frames.empty() ? 0 : dataset.frames.front().height;
    const std::size_t w = dataset.frames.empty() ? 0 : dataset.frames.front().width;
    if (h > 65535 || w > 65535) throw ShapeError("packed datasets hold at most 65535x65535 frames");
    io::ByteWriter out;
    for (char c : kPackedMagic) out.u8(static_cast<std::uint8_t>(c));
    out.u32(kPackedVersion);
    out.u32(static_cast<std::uint32_t>(dataset.frames.size()));
    out.u16(static_cast<std::uint16_t>(h));
    out.u16(static_cast<std::uint16_t>(w));
    for (const Frame& f : dataset.frames) {
        if (f.height != h || f.width != w || f.pixels.size() != h * w) {
            throw ShapeError("packed datasets need uniform frame dimensions");
        }
        out.raw(f.pixels);
    }
    for (const Frame& f : dataset.frames) out.u8(static_cast<std::uint8_t>(f.label));
    out.finish_with_crc();
    return out.take();
}

FrameDataset decode_packed(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    const auto magic = r.raw(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kPackedMagic, [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
        throw ParseError(ParseErrorKind::bad_magic, "not a packed flamesift dataset");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kPackedVersion) {
        throw ParseError(ParseErrorKind::version_mismatch, "packed dataset version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("count");
    const std::size_t h = r.u16("height");
    const std::size_t w = r.u16("width");
    const std::size_t body = static_cast<std::size_t>(count) * (h * w + 1);
    if (r.remaining() < body + 4) throw ParseError(ParseErrorKind::truncated, "packed dataset body is short");
    if (r.remaining() > body + 4) throw ParseError(ParseErrorKind::bad_header, "trailing bytes after packed dataset");
    io::verify_crc(bytes, "packed dataset");
    FrameDataset ds;
    ds.frames.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Frame& f = ds.frames[i];
        f.height = h;
        f.width = w;
        const auto px = r.raw(h * w, "pixels");
        f.pixels.assign(px.begin(), px.end());
        f.sequence_index = i;
        f.source_id = "packed";
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t l = r.u8("label");
        if (l > 2) throw ParseError(ParseErrorKind::bad_label, "label byte " + std::to_string(l) + " at frame " + std::to_string(i));
        ds.frames[i].label = static_cast<Label>(l);
    }
    return ds;
}

void save_packed(const FrameDataset& dataset, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_packed(dataset));
}

FrameDataset load_packed(const std::filesystem::path& path) { return decode_packed(io::read_file(path)); }

FrameDataset load_dataset(const std::filesystem::path& path) {
    if (path.extension() == ".fsds") return load_packed(path);
    return load_manifest(path);
}

}  // namespace flamesift
