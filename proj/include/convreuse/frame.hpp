#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace convreuse {

// Shapes that do not line up (frames, feature maps, weights).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A rectangle or region that falls outside the dimensions it is used against.
class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// An operation that needs state the caller has not produced yet
// (cold cache, forward pass for a different frame, ...).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Dims {
  int rows = 0;
  int cols = 0;

  long area() const { return static_cast<long>(rows) * cols; }
  bool operator==(const Dims&) const = default;
};

std::string to_string(Dims d);

/// One grayscale image, row-major, intensities in [0, 255].
class Frame {
 public:
  Frame() = default;
  Frame(int rows, int cols, std::uint8_t fill = 0);
  Frame(int rows, int cols, std::vector<std::uint8_t> pixels);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Dims dims() const { return {rows_, cols_}; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int r, int c) const { return pixels_[index(r, c)]; }
  std::uint8_t& at(int r, int c) { return pixels_[index(r, c)]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<const std::uint8_t> row(int r) const {
    return std::span<const std::uint8_t>(pixels_).subspan(index(r, 0), static_cast<std::size_t>(cols_));
  }
  std::span<std::uint8_t> row(int r) {
    return std::span<std::uint8_t>(pixels_).subspan(index(r, 0), static_cast<std::size_t>(cols_));
  }

  bool operator==(const Frame&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> pixels_;
};

}  // namespace convreuse
