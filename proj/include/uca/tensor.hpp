#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace uca {

/// Dense row-major H x W x C image of doubles (interleaved channels).
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int row, int col, int ch = 0) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }
  double& at(int row, int col, int ch = 0) noexcept { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch = 0) const noexcept { return data_[index(row, col, ch)]; }

  double* row_ptr(int row) noexcept { return data_.data() + index(row, 0); }
  const double* row_ptr(int row) const noexcept { return data_.data() + index(row, 0); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Binary H x W foreground indicator.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool at(int row, int col) const noexcept {
    return data_[static_cast<std::size_t>(row) * width_ + col] != 0;
  }
  void set(int row, int col, bool on) noexcept {
    data_[static_cast<std::size_t>(row) * width_ + col] = on ? 1 : 0;
  }
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : data_) n += v != 0;
    return n;
  }
  std::span<const std::uint8_t> values() const noexcept { return data_; }
  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Dense row-major matrix; feature layers are N rows (tokens) x D columns.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double* row(int r) noexcept { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const noexcept { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace uca
