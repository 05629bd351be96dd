#include "flamesift/checkpoint.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "flamesift/errors.hpp"
#include "flamesift/io_util.hpp"

namespace flamesift {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'C', 'K'};

std::string descriptor(const Model& model, const TrainingMeta& meta) {
    std::ostringstream os;
    os.precision(17);
    os << model.config().to_text() << "# meta " << meta.epoch << ' ' << meta.best_valid_loss << '\n';
    return os.str();
}

TrainingMeta parse_meta(const std::string& text) {
    TrainingMeta meta;
    const auto at = text.rfind("# meta ");
    if (at == std::string::npos) return meta;
    std::istringstream in(text.substr(at + 7));
    if (!(in >> meta.epoch >> meta.best_valid_loss)) {
        throw ParseError(ParseErrorKind::bad_descriptor, "malformed training metadata line");
    }
    return meta;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const TrainingMeta& meta) {
    io::ByteWriter w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kCheckpointVersion);
    const std::string desc = descriptor(model, meta);
    w.u32(static_cast<std::uint32_t>(desc.size()));
    w.text(desc);
    for (const auto& block : model.params()) {
        for (double v : block.weights) w.f32(static_cast<float>(v));
        for (double v : block.bias) w.f32(static_cast<float>(v));
    }
    w.finish_with_crc();
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    const auto magic = r.raw(4, "magic");
    for (int i = 0; i < 4; ++i) {
        if (magic[i] != static_cast<std::uint8_t>(kMagic[i])) {
            throw ParseError(ParseErrorKind::bad_magic, "not a flamesift checkpoint");
        }
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw ParseError(ParseErrorKind::version_mismatch,
                         "checkpoint version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
    }
    const std::uint32_t desc_len = r.u32("descriptor length");
    const auto desc_bytes = r.raw(desc_len, "descriptor");
    const std::string desc(desc_bytes.begin(), desc_bytes.end());

    NetworkConfig config;
    try {
        config = NetworkConfig::parse(desc);
        config.validate();
    } catch (const ConfigError& e) {
        throw ParseError(ParseErrorKind::bad_descriptor, e.what());
    }
    const TrainingMeta meta = parse_meta(desc);

    Model model = Model::zeros(config);
    const std::size_t count = model.parameter_count();
    if (r.remaining() < count * 4 + 4) {
        throw ParseError(ParseErrorKind::truncated, "parameter block needs " + std::to_string(count * 4 + 4) +
                                                        " bytes, " + std::to_string(r.remaining()) + " left");
    }
    if (r.remaining() > count * 4 + 4) {
        throw ParseError(ParseErrorKind::bad_descriptor, "trailing bytes after parameter block");
    }
    io::verify_crc(bytes, "checkpoint");
    for (auto& block : model.params()) {
        for (double& v : block.weights) v = r.f32("weight");
        for (double& v : block.bias) v = r.f32("bias");
    }
    return Checkpoint{std::move(model), meta};
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const TrainingMeta& meta) {
    io::write_file_atomic(path, encode_checkpoint(model, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace flamesift
