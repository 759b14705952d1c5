#pragma once

#include <cstring>
#include <span>
#include <vector>

#include "convreuse/random.hpp"
#include "convreuse/region.hpp"

namespace convreuse {

/// Channel-major activation tensor: data[(c * rows + r) * cols + col].
template <typename T>
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int rows, int cols, T fill = T(0));

  int channels() const { return channels_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Dims dims() const { return {rows_, cols_}; }
  std::size_t size() const { return data_.size(); }

  T& at(int c, int r, int col) { return data_[offset(c, r, col)]; }
  const T& at(int c, int r, int col) const { return data_[offset(c, r, col)]; }
  T* row_ptr(int c, int r) { return data_.data() + offset(c, r, 0); }
  const T* row_ptr(int c, int r) const { return data_.data() + offset(c, r, 0); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  std::size_t offset(int c, int r, int col) const {
    return (static_cast<std::size_t>(c) * rows_ + static_cast<std::size_t>(r)) * cols_ + static_cast<std::size_t>(col);
  }

 private:
  int channels_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 0;
  std::vector<T> weights;  // [out][in][k][k]
  std::vector<T> bias;     // [out]

  ConvWeights() = default;
  ConvWeights(int out, int in, int k);

  std::size_t index(int o, int i, int dr, int dc) const {
    return ((static_cast<std::size_t>(o) * in_channels + i) * kernel + dr) * kernel + dc;
  }
  T& w(int o, int i, int dr, int dc) { return weights[index(o, i, dr, dc)]; }
  const T& w(int o, int i, int dr, int dc) const { return weights[index(o, i, dr, dc)]; }
};

template <typename T>
struct DenseWeights {
  int in_size = 0;
  int out_size = 0;
  std::vector<T> weights;  // [out][in]
  std::vector<T> bias;     // [out]

  DenseWeights() = default;
  DenseWeights(int in, int out);

  T& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in_size + i]; }
  const T& w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in_size + i]; }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, drawn in
// double so float and double nets built from one seed agree to rounding.
template <typename T>
ConvWeights<T> random_conv_weights(int out, int in, int k, Rng& rng);
template <typename T>
DenseWeights<T> random_dense_weights(int in, int out, Rng& rng);

/// Full 2-D convolution with zero padding. Each output is
/// bias + sum over (in channel, kernel row, kernel col) in that order.
template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g);

/// The `r_out` slice of conv2d(input), as a channels x height x width patch.
/// Bitwise equal to the same slice of the full result.
template <typename T>
FeatureMap<T> conv2d_region(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g,
                            const Rect& r_out);

/// Recomputes the `r_out` slice of `out` in place; everything outside is untouched.
template <typename T>
void conv2d_region_into(const FeatureMap<T>& input, const ConvWeights<T>& w, const ConvGeometry& g,
                        const Rect& r_out, FeatureMap<T>& out);

template <typename T>
FeatureMap<T> relu(FeatureMap<T> x);

template <typename T>
void relu_region(FeatureMap<T>& x, const Rect& r);

template <typename T>
std::vector<T> dense(std::span<const T> x, const DenseWeights<T>& w);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
bool bitwise_equal(std::span<const T> a, std::span<const T> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

}  // namespace convreuse
