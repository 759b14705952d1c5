#pragma once

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convreuse/frame.hpp"

namespace convreuse {

/// Inclusive, zero-based rectangle. An empty area is never a Rect; callers
/// use std::optional<Rect> or an empty RegionSet instead.
struct Rect {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int height() const { return row1 - row0 + 1; }
  int width() const { return col1 - col0 + 1; }
  long area() const { return static_cast<long>(height()) * width(); }

  bool contains(int r, int c) const { return r >= row0 && r <= row1 && c >= col0 && c <= col1; }
  bool contains(const Rect& o) const { return o.row0 >= row0 && o.row1 <= row1 && o.col0 >= col0 && o.col1 <= col1; }
  bool valid() const { return row0 >= 0 && col0 >= 0 && row0 <= row1 && col0 <= col1; }
  bool within(Dims d) const { return valid() && row1 < d.rows && col1 < d.cols; }

  // Declaration order gives the canonical (row0, col0, ...) ordering.
  auto operator<=>(const Rect&) const = default;
};

std::string to_string(const Rect& r);

Rect full_rect(Dims d);
std::optional<Rect> intersect(const Rect& a, const Rect& b);

/// A set of rectangles. Sets produced by normalize() (and by every diff and
/// dilation routine below) are pairwise disjoint and sorted by (row0, col0),
/// so equal coverage compares equal.
class RegionSet {
 public:
  RegionSet() = default;
  explicit RegionSet(const Rect& r) : rects_{r} {}
  explicit RegionSet(std::vector<Rect> rects) : rects_(std::move(rects)) {}

  const std::vector<Rect>& rects() const { return rects_; }
  bool empty() const { return rects_.empty(); }
  std::size_t size() const { return rects_.size(); }

  // Sum of rect areas; the covered area once normalized.
  long area() const;
  std::optional<Rect> bounds() const;
  bool contains(int r, int c) const;

  auto begin() const { return rects_.begin(); }
  auto end() const { return rects_.end(); }

  bool operator==(const RegionSet&) const = default;

 private:
  std::vector<Rect> rects_;
};

/// Square-kernel 2-D convolution geometry with symmetric zero padding.
class ConvGeometry {
 public:
  ConvGeometry(int kernel, int stride, int padding, int in_rows, int in_cols);

  // Stride 1 with (k - 1) / 2 padding: output dims equal input dims.
  static ConvGeometry same(int kernel, int in_rows, int in_cols) {
    return ConvGeometry(kernel, 1, (kernel - 1) / 2, in_rows, in_cols);
  }

  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }
  int in_rows() const { return in_.rows; }
  int in_cols() const { return in_.cols; }
  int out_rows() const { return out_.rows; }
  int out_cols() const { return out_.cols; }
  Dims in_dims() const { return in_; }
  Dims out_dims() const { return out_; }

  bool operator==(const ConvGeometry&) const = default;

 private:
  int kernel_;
  int stride_;
  int padding_;
  Dims in_;
  Dims out_;
};

/// Minimal rect covering every pixel with |curr - prev| > tol, or nothing.
std::optional<Rect> diff_bounding_rect(const Frame& prev, const Frame& curr, int tol = 0);

/// tile x tile blocks (clipped at the frame edge) that hold a changed pixel,
/// normalized.
RegionSet diff_tiled(const Frame& prev, const Frame& curr, int tile, int tol = 0);

/// diff_tiled intersected with diff_bounding_rect. Covers the same changed
/// pixels and never exceeds the bounding rect's area.
RegionSet diff_tiled_bounded(const Frame& prev, const Frame& curr, int tile, int tol = 0);

/// Output positions whose receptive field intersects `r`, clipped to the
/// output. For stride 1 and (k - 1) / 2 padding this is `r` grown by
/// (k - 1) / 2 on each side.
std::optional<Rect> affected_output_rect(const Rect& r, const ConvGeometry& g);

/// Input pixels read by the outputs in `r_out`, clipped to the input. Empty
/// only when every tap of `r_out` lands in the zero padding (padding >= k).
std::optional<Rect> required_input_rect(const Rect& r_out, const ConvGeometry& g);

/// Dilation of a whole region through one layer, normalized.
RegionSet affected_output_region(const RegionSet& rs, const ConvGeometry& g);

/// Disjoint, canonically ordered decomposition of the union of `rs`.
RegionSet normalize(const RegionSet& rs, Dims dims);

}  // namespace convreuse
