#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flamesift {

/// Extent of a rank-3 value grid: feature maps x rows x columns.
struct Shape {
    std::size_t maps = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return maps * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    bool operator==(const Shape&) const = default;
    std::string to_string() const;
};

/// Dense rank-3 grid stored map-major, then row, then column.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t maps() const noexcept { return shape_.maps; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return data_.size(); }

    double& at(std::size_t z, std::size_t y, std::size_t x) noexcept {
        return data_[(z * shape_.height + y) * shape_.width + x];
    }
    double at(std::size_t z, std::size_t y, std::size_t x) const noexcept {
        return data_[(z * shape_.height + y) * shape_.width + x];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    std::span<double> plane(std::size_t z) noexcept {
        return std::span<double>(data_).subspan(z * shape_.plane(), shape_.plane());
    }
    std::span<const double> plane(std::size_t z) const noexcept {
        return std::span<const double>(data_).subspan(z * shape_.plane(), shape_.plane());
    }

    // Same data viewed under a different shape of equal size.
    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace flamesift
