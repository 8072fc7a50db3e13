#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace freqshield {

// Row-major 2D array. Row index is y (height), column index is x (width).
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}
  Grid2D(int height, int width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& raw() const noexcept { return data_; }

  bool same_shape(int h, int w) const noexcept { return h == height_ && w == width_; }
  template <typename U>
  bool same_shape(const Grid2D<U>& o) const noexcept {
    return o.height() == height_ && o.width() == width_;
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Image = Grid2D<double>;
using LabelMap = Grid2D<int>;

}  // namespace freqshield
