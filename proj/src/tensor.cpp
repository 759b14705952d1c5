#include "convreuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace convreuse {
namespace {

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int ceil_div(int a, int b) { return -floor_div(-a, b); }

template <typename T>
void check_conv_shapes(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g) {
  if (input.dims() != g.in_dims()) {
    throw ShapeError("conv input is " + to_string(input.dims()) + " but geometry expects " + to_string(g.in_dims()));
  }
  if (w.in_channels != input.channels()) {
    throw ShapeError("conv weights take " + std::to_string(w.in_channels) + " channels, input has " +
                     std::to_string(input.channels()));
  }
  if (w.kernel != g.kernel()) {
    throw ShapeError("conv weights have kernel " + std::to_string(w.kernel) + ", geometry has " +
                     std::to_string(g.kernel()));
  }
}

// dst_row(c, orow) points at the destination element for column r.col0.
template <typename T, typename DstRow>
void conv_rect(const FeatureMap<T>& in, const ConvWeights<T>& w, const ConvGeometry& g, const Rect& r,
               DstRow dst_row) {
  const int k = g.kernel();
  const int s = g.stride();
  const int p = g.padding();
  const int width = r.width();
  for (int oc = 0; oc < w.out_channels; ++oc) {
    const T b = w.bias[oc];
    for (int orow = r.row0; orow <= r.row1; ++orow) std::fill_n(dst_row(oc, orow), width, b);
    for (int ci = 0; ci < w.in_channels; ++ci) {
      for (int dr = 0; dr < k; ++dr) {
        for (int orow = r.row0; orow <= r.row1; ++orow) {
          const int ir = orow * s - p + dr;
          if (ir < 0 || ir >= in.rows()) continue;
          const T* src = in.row_ptr(ci, ir);
          T* dst = dst_row(oc, orow);
          for (int dc = 0; dc < k; ++dc) {
            const T wt = w.w(oc, ci, dr, dc);
            const int lo = std::max(r.col0, ceil_div(p - dc, s));
            const int hi = std::min(r.col1, floor_div(in.cols() - 1 + p - dc, s));
            if (lo > hi) continue;
            T* __restrict d = dst + (lo - r.col0);
            if (s == 1) {
              const T* __restrict x = src + (lo - p + dc);
              const int n = hi - lo + 1;
              for (int i = 0; i < n; ++i) d[i] += wt * x[i];
            } else {
              for (int oc_col = lo; oc_col <= hi; ++oc_col) *d++ += wt * src[oc_col * s - p + dc];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
FeatureMap<T>::FeatureMap(int channels, int rows, int cols, T fill) : channels_(channels), rows_(rows), cols_(cols) {
  if (channels <= 0 || rows <= 0 || cols <= 0) {
    throw ShapeError("feature map dimensions must be positive, got " + std::to_string(channels) + "x" +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  data_.assign(static_cast<std::size_t>(channels) * rows * cols, fill);
}

template <typename T>
ConvWeights<T>::ConvWeights(int out, int in, int k) : out_channels(out), in_channels(in), kernel(k) {
  if (out <= 0 || in <= 0 || k <= 0 || k % 2 == 0) {
    throw ShapeError("invalid conv weight shape " + std::to_string(out) + "x" + std::to_string(in) + "x" +
                     std::to_string(k));
  }
  weights.assign(static_cast<std::size_t>(out) * in * k * k, T(0));
  bias.assign(static_cast<std::size_t>(out), T(0));
}

template <typename T>
DenseWeights<T>::DenseWeights(int in, int out) : in_size(in), out_size(out) {
  if (in <= 0 || out <= 0) {
    throw ShapeError("invalid dense weight shape " + std::to_string(out) + "x" + std::to_string(in));
  }
  weights.assign(static_cast<std::size_t>(out) * in, T(0));
  bias.assign(static_cast<std::size_t>(out), T(0));
}

template <typename T>
ConvWeights<T> random_conv_weights(int out, int in, int k, Rng& rng) {
  ConvWeights<T> w(out, in, k);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  for (T& x : w.weights) x = static_cast<T>(rng.uniform(-bound, bound));
  for (T& x : w.bias) x = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

template <typename T>
DenseWeights<T> random_dense_weights(int in, int out, Rng& rng) {
  DenseWeights<T> w(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (T& x : w.weights) x = static_cast<T>(rng.uniform(-bound, bound));
  for (T& x : w.bias) x = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g) {
  check_conv_shapes(input, w, g);
  FeatureMap<T> out(w.out_channels, g.out_rows(), g.out_cols());
  conv_rect(input, w, g, full_rect(g.out_dims()), [&](int c, int r) { return out.row_ptr(c, r); });
  return out;
}

template <typename T>
FeatureMap<T> conv2d_region(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g,
                            const Rect& r_out) {
  check_conv_shapes(input, w, g);
  if (!r_out.within(g.out_dims())) {
    throw BoundsError("output rect " + to_string(r_out) + " is outside " + to_string(g.out_dims()));
  }
  FeatureMap<T> patch(w.out_channels, r_out.height(), r_out.width());
  conv_rect(input, w, g, r_out, [&](int c, int r) { return patch.row_ptr(c, r - r_out.row0); });
  return patch;
}

template <typename T>
void conv2d_region_into(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g,
                        const Rect& r_out, FeatureMap<T>& out) {
  check_conv_shapes(input, w, g);
  if (out.channels() != w.out_channels || out.dims() != g.out_dims()) {
    throw ShapeError("conv destination is " + std::to_string(out.channels()) + "x" + to_string(out.dims()) +
                     ", expected " + std::to_string(w.out_channels) + "x" + to_string(g.out_dims()));
  }
  if (!r_out.within(g.out_dims())) {
    throw BoundsError("output rect " + to_string(r_out) + " is outside " + to_string(g.out_dims()));
  }
  conv_rect(input, w, g, r_out, [&](int c, int r) { return out.row_ptr(c, r) + r_out.col0; });
}

template <typename T>
FeatureMap<T> relu(FeatureMap<T> x) {
  for (T& v : x.data()) v = v > T(0) ? v : T(0);
  return x;
}

template <typename T>
void relu_region(FeatureMap<T>& x, const Rect& r) {
  if (!r.within(x.dims())) throw BoundsError("relu rect " + to_string(r) + " is outside " + to_string(x.dims()));
  for (int c = 0; c < x.channels(); ++c) {
    for (int row = r.row0; row <= r.row1; ++row) {
      T* p = x.row_ptr(c, row);
      for (int col = r.col0; col <= r.col1; ++col) p[col] = p[col] > T(0) ? p[col] : T(0);
    }
  }
}

template <typename T>
std::vector<T> dense(std::span<const T> x, const DenseWeights<T>& w) {
  if (x.size() != static_cast<std::size_t>(w.in_size)) {
    throw ShapeError("dense layer expects " + std::to_string(w.in_size) + " inputs, got " + std::to_string(x.size()));
  }
  std::vector<T> logits(static_cast<std::size_t>(w.out_size));
  for (int o = 0; o < w.out_size; ++o) {
    const T* row = w.weights.data() + static_cast<std::size_t>(o) * w.in_size;
    T acc = w.bias[o];
    for (int i = 0; i < w.in_size; ++i) acc += row[i] * x[i];
    logits[o] = acc;
  }
  return logits;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> probs(logits.size());
  if (logits.empty()) return probs;
  const T peak = *std::max_element(logits.begin(), logits.end());
  T sum = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    sum += probs[i];
  }
  for (T& p : probs) p /= sum;
  return probs;
}

#define CONVREUSE_INSTANTIATE(T)                                                                              \
  template class FeatureMap<T>;                                                                               \
  template struct ConvWeights<T>;                                                                             \
  template struct DenseWeights<T>;                                                                            \
  template ConvWeights<T> random_conv_weights<T>(int, int, int, Rng&);                                        \
  template DenseWeights<T> random_dense_weights<T>(int, int, Rng&);                                           \
  template FeatureMap<T> conv2d<T>(const FeatureMap<T>&, const ConvWeights<T>&, const ConvGeometry&);         \
  template FeatureMap<T> conv2d_region<T>(const FeatureMap<T>&, const ConvWeights<T>&, const ConvGeometry&,   \
                                          const Rect&);                                                       \
  template void conv2d_region_into<T>(const FeatureMap<T>&, const ConvWeights<T>&, const ConvGeometry&,       \
                                      const Rect&, FeatureMap<T>&);                                           \
  template FeatureMap<T> relu<T>(FeatureMap<T>);                                                              \
  template void relu_region<T>(FeatureMap<T>&, const Rect&);                                                  \
  template std::vector<T> dense<T>(std::span<const T>, const DenseWeights<T>&);                               \
  template std::vector<T> softmax<T>(std::span<const T>);

CONVREUSE_INSTANTIATE(float)
CONVREUSE_INSTANTIATE(double)

#undef CONVREUSE_INSTANTIATE

}  // namespace convreuse
