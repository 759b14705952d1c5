#include "convreuse/region.hpp"

#include <algorithm>
#include <cstdlib>

namespace convreuse {
namespace {

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int ceil_div(int a, int b) { return -floor_div(-a, b); }

void check_same_dims(const Frame& prev, const Frame& curr) {
  if (prev.dims() != curr.dims()) {
    throw ShapeError("cannot diff frames of different dimensions: " + to_string(prev.dims()) + " vs " +
                     to_string(curr.dims()));
  }
}

void check_within(const Rect& r, Dims d, const char* what) {
  if (!r.within(d)) {
    throw BoundsError(std::string(what) + " " + to_string(r) + " is outside " + to_string(d));
  }
}

struct Interval {
  int lo;
  int hi;
  bool operator==(const Interval&) const = default;
};

}  // namespace

std::string to_string(const Rect& r) {
  return "Rect(" + std::to_string(r.row0) + "," + std::to_string(r.col0) + "," + std::to_string(r.row1) + "," +
         std::to_string(r.col1) + ")";
}

Rect full_rect(Dims d) { return Rect{0, 0, d.rows - 1, d.cols - 1}; }

std::optional<Rect> intersect(const Rect& a, const Rect& b) {
  Rect r{std::max(a.row0, b.row0), std::max(a.col0, b.col0), std::min(a.row1, b.row1), std::min(a.col1, b.col1)};
  if (r.row0 > r.row1 || r.col0 > r.col1) return std::nullopt;
  return r;
}

long RegionSet::area() const {
  long total = 0;
  for (const Rect& r : rects_) total += r.area();
  return total;
}

std::optional<Rect> RegionSet::bounds() const {
  if (rects_.empty()) return std::nullopt;
  Rect b = rects_.front();
  for (const Rect& r : rects_) {
    b.row0 = std::min(b.row0, r.row0);
    b.col0 = std::min(b.col0, r.col0);
    b.row1 = std::max(b.row1, r.row1);
    b.col1 = std::max(b.col1, r.col1);
  }
  return b;
}

bool RegionSet::contains(int r, int c) const {
  return std::any_of(rects_.begin(), rects_.end(), [&](const Rect& x) { return x.contains(r, c); });
}

ConvGeometry::ConvGeometry(int kernel, int stride, int padding, int in_rows, int in_cols)
    : kernel_(kernel), stride_(stride), padding_(padding), in_{in_rows, in_cols} {
  if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("kernel size must be positive and odd, got " + std::to_string(kernel));
  if (stride <= 0) throw ShapeError("stride must be positive, got " + std::to_string(stride));
  if (padding < 0) throw ShapeError("padding must be non-negative, got " + std::to_string(padding));
  if (in_rows <= 0 || in_cols <= 0) throw ShapeError("input dimensions must be positive, got " + to_string(in_));
  if (kernel > in_rows + 2 * padding || kernel > in_cols + 2 * padding) {
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit padded input " + to_string(in_));
  }
  out_ = {(in_rows + 2 * padding - kernel) / stride + 1, (in_cols + 2 * padding - kernel) / stride + 1};
}

std::optional<Rect> diff_bounding_rect(const Frame& prev, const Frame& curr, int tol) {
  check_same_dims(prev, curr);
  Rect box{curr.rows(), curr.cols(), -1, -1};
  for (int r = 0; r < curr.rows(); ++r) {
    auto a = prev.row(r);
    auto b = curr.row(r);
    int first = -1;
    int last = -1;
    for (int c = 0; c < curr.cols(); ++c) {
      if (std::abs(int(a[c]) - int(b[c])) > tol) {
        if (first < 0) first = c;
        last = c;
      }
    }
    if (first < 0) continue;
    box.row0 = std::min(box.row0, r);
    box.row1 = r;
    box.col0 = std::min(box.col0, first);
    box.col1 = std::max(box.col1, last);
  }
  if (box.row1 < 0) return std::nullopt;
  return box;
}

RegionSet diff_tiled(const Frame& prev, const Frame& curr, int tile, int tol) {
  check_same_dims(prev, curr);
  if (tile < 1) throw ShapeError("tile size must be at least 1, got " + std::to_string(tile));
  const int tiles_r = (curr.rows() + tile - 1) / tile;
  const int tiles_c = (curr.cols() + tile - 1) / tile;
  std::vector<char> dirty(static_cast<std::size_t>(tiles_r) * tiles_c, 0);
  for (int r = 0; r < curr.rows(); ++r) {
    auto a = prev.row(r);
    auto b = curr.row(r);
    char* tile_row = dirty.data() + static_cast<std::size_t>(r / tile) * tiles_c;
    for (int c = 0; c < curr.cols(); ++c) {
      if (std::abs(int(a[c]) - int(b[c])) > tol) tile_row[c / tile] = 1;
    }
  }
  std::vector<Rect> blocks;
  for (int tr = 0; tr < tiles_r; ++tr) {
    for (int tc = 0; tc < tiles_c; ++tc) {
      if (!dirty[static_cast<std::size_t>(tr) * tiles_c + tc]) continue;
      blocks.push_back(Rect{tr * tile, tc * tile, std::min(curr.rows(), (tr + 1) * tile) - 1,
                            std::min(curr.cols(), (tc + 1) * tile) - 1});
    }
  }
  return normalize(RegionSet(std::move(blocks)), curr.dims());
}

RegionSet diff_tiled_bounded(const Frame& prev, const Frame& curr, int tile, int tol) {
  auto box = diff_bounding_rect(prev, curr, tol);
  if (!box) return {};
  RegionSet tiles = diff_tiled(prev, curr, tile, tol);
  std::vector<Rect> clipped;
  clipped.reserve(tiles.size());
  for (const Rect& r : tiles) {
    if (auto x = intersect(r, *box)) clipped.push_back(*x);
  }
  return normalize(RegionSet(std::move(clipped)), curr.dims());
}

std::optional<Rect> affected_output_rect(const Rect& r, const ConvGeometry& g) {
  check_within(r, g.in_dims(), "changed rect");
  const int k = g.kernel();
  const int s = g.stride();
  const int p = g.padding();
  // Output o reads inputs [o*s - p, o*s - p + k - 1].
  Rect out{std::max(0, ceil_div(r.row0 - k + 1 + p, s)), std::max(0, ceil_div(r.col0 - k + 1 + p, s)),
           std::min(g.out_rows() - 1, floor_div(r.row1 + p, s)), std::min(g.out_cols() - 1, floor_div(r.col1 + p, s))};
  if (out.row0 > out.row1 || out.col0 > out.col1) return std::nullopt;
  return out;
}

std::optional<Rect> required_input_rect(const Rect& r_out, const ConvGeometry& g) {
  check_within(r_out, g.out_dims(), "output rect");
  const int k = g.kernel();
  const int s = g.stride();
  const int p = g.padding();
  Rect in{std::max(0, r_out.row0 * s - p), std::max(0, r_out.col0 * s - p),
          std::min(g.in_rows() - 1, r_out.row1 * s - p + k - 1), std::min(g.in_cols() - 1, r_out.col1 * s - p + k - 1)};
  if (in.row0 > in.row1 || in.col0 > in.col1) return std::nullopt;
  return in;
}

RegionSet affected_output_region(const RegionSet& rs, const ConvGeometry& g) {
  std::vector<Rect> grown;
  grown.reserve(rs.size());
  for (const Rect& r : rs) {
    if (auto o = affected_output_rect(r, g)) grown.push_back(*o);
  }
  if (grown.size() <= 1) return RegionSet(std::move(grown));
  return normalize(RegionSet(std::move(grown)), g.out_dims());
}

RegionSet normalize(const RegionSet& rs, Dims dims) {
  for (const Rect& r : rs) check_within(r, dims, "rect");
  if (rs.empty()) return {};

  // Cut the rows at every rect edge; inside a band each rect is either fully
  // present or absent, so a band reduces to a list of merged column runs.
  std::vector<int> cuts;
  cuts.reserve(rs.size() * 2);
  for (const Rect& r : rs) {
    cuts.push_back(r.row0);
    cuts.push_back(r.row1 + 1);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  struct Band {
    int row0;
    int row1;
    std::vector<Interval> runs;
  };
  std::vector<Band> bands;
  std::vector<Interval> runs;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const int top = cuts[i];
    const int bottom = cuts[i + 1] - 1;
    runs.clear();
    for (const Rect& r : rs) {
      if (r.row0 <= top && r.row1 >= bottom) runs.push_back({r.col0, r.col1});
    }
    if (runs.empty()) continue;
    std::sort(runs.begin(), runs.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged{runs.front()};
    for (std::size_t j = 1; j < runs.size(); ++j) {
      if (runs[j].lo <= merged.back().hi + 1) {
        merged.back().hi = std::max(merged.back().hi, runs[j].hi);
      } else {
        merged.push_back(runs[j]);
      }
    }
    // Maximal vertical merge makes the result depend only on the covered set.
    if (!bands.empty() && bands.back().row1 + 1 == top && bands.back().runs == merged) {
      bands.back().row1 = bottom;
    } else {
      bands.push_back({top, bottom, std::move(merged)});
    }
  }

  std::vector<Rect> out;
  for (const Band& b : bands) {
    for (const Interval& iv : b.runs) out.push_back({b.row0, iv.lo, b.row1, iv.hi});
  }
  std::sort(out.begin(), out.end());
  return RegionSet(std::move(out));
}

}  // namespace convreuse
