#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace scenediff {

// Dense row-major H x W grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}
  Grid(int height, int width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    assert(data_.size() == static_cast<std::size_t>(height) * width);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool contains(int y, int x) const noexcept {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    assert(contains(y, x));
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// H x W x C grid, channel-fastest.
template <typename T>
class VectorGrid {
 public:
  VectorGrid() = default;
  VectorGrid(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {}
  VectorGrid(int height, int width, int channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels),
        data_(std::move(data)) {
    assert(data_.size() == static_cast<std::size_t>(height) * width * channels);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }

  std::span<T> at(int y, int x) {
    return {data_.data() + offset(y, x), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> at(int y, int x) const {
    return {data_.data() + offset(y, x), static_cast<std::size_t>(channels_)};
  }

  const std::vector<T>& storage() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  friend bool operator==(const VectorGrid&, const VectorGrid&) = default;

 private:
  std::size_t offset(int y, int x) const noexcept {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_);
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

}  // namespace scenediff
