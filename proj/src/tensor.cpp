#include "flamesift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flamesift/errors.hpp"

namespace flamesift {

std::string Shape::to_string() const {
    std::ostringstream os;
    os << maps << "x" << height << "x" << width;
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.to_string());
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.size() != size()) {
        throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
    }
    return Tensor(shape, data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("shape mismatch: " + a.shape().to_string() + " vs " + b.shape().to_string());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

const char* to_string(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::missing_file: return "missing file";
        case ParseErrorKind::io_failure: return "i/o failure";
        case ParseErrorKind::bad_magic: return "bad magic";
        case ParseErrorKind::version_mismatch: return "version mismatch";
        case ParseErrorKind::truncated: return "truncated file";
        case ParseErrorKind::crc_mismatch: return "crc mismatch";
        case ParseErrorKind::bad_descriptor: return "bad descriptor";
        case ParseErrorKind::bad_header: return "bad header";
        case ParseErrorKind::bad_label: return "bad label";
        case ParseErrorKind::bad_line: return "bad line";
    }
    return "parse error";
}

}  // namespace flamesift
