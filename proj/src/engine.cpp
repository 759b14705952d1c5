#include "convreuse/engine.hpp"

#include <algorithm>
#include <string>

namespace convreuse {

NetConfig NetConfig::make(int rows, int cols, int filters1, int filters2, int kernel, int actions) {
  NetConfig cfg;
  cfg.input_rows = rows;
  cfg.input_cols = cols;
  cfg.filters1 = filters1;
  cfg.filters2 = filters2;
  cfg.layer1 = LayerGeometry::same(kernel);
  cfg.layer2 = LayerGeometry::same(kernel);
  cfg.action_count = actions;
  cfg.validate();
  return cfg;
}

void NetConfig::validate() const {
  if (filters1 <= 0 || filters2 <= 0) {
    throw ShapeError("filter counts must be positive, got " + std::to_string(filters1) + "/" + std::to_string(filters2));
  }
  if (action_count <= 0) throw ShapeError("action count must be positive");
  if (diff.tile < 1) throw ShapeError("diff tile must be at least 1");
  if (diff.tolerance < 0) throw ShapeError("diff tolerance must be non-negative");
  // Constructing the geometries checks kernel/stride/padding and that each
  // layer's output is non-empty.
  (void)geometry2();
}

ConvGeometry NetConfig::geometry1() const {
  return ConvGeometry(layer1.kernel, layer1.stride, layer1.padding, input_rows, input_cols);
}

ConvGeometry NetConfig::geometry2() const {
  const ConvGeometry g1 = geometry1();
  return ConvGeometry(layer2.kernel, layer2.stride, layer2.padding, g1.out_rows(), g1.out_cols());
}

int NetConfig::dense_inputs() const { return filters2 * static_cast<int>(geometry2().out_dims().area()); }

template <typename T>
NetWeights<T> init_weights(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  NetWeights<T> w;
  w.conv1 = random_conv_weights<T>(cfg.filters1, 1, cfg.layer1.kernel, rng);
  w.conv2 = random_conv_weights<T>(cfg.filters2, cfg.filters1, cfg.layer2.kernel, rng);
  w.dense = random_dense_weights<T>(cfg.dense_inputs(), cfg.action_count, rng);
  return w;
}

const char* to_string(StepMode m) { return m == StepMode::full ? "full" : "reuse"; }

std::int64_t conv_mac_count(const NetConfig& cfg, const RegionSet& dirty1, const RegionSet& dirty2) {
  const std::int64_t k1 = cfg.layer1.kernel;
  const std::int64_t k2 = cfg.layer2.kernel;
  return dirty1.area() * cfg.filters1 * 1 * k1 * k1 + dirty2.area() * cfg.filters2 * cfg.filters1 * k2 * k2;
}

std::int64_t dense_mac_count(const NetConfig& cfg, const RegionSet& dirty2) {
  if (cfg.dense_delta_mode) return dirty2.area() * cfg.filters2 * cfg.action_count;
  return static_cast<std::int64_t>(cfg.dense_inputs()) * cfg.action_count;
}

std::int64_t mac_count(const NetConfig& cfg, const RegionSet& dirty1, const RegionSet& dirty2) {
  return conv_mac_count(cfg, dirty1, dirty2) + dense_mac_count(cfg, dirty2);
}

std::int64_t full_conv_mac_count(const NetConfig& cfg) {
  return conv_mac_count(cfg, RegionSet(full_rect(cfg.geometry1().out_dims())),
                        RegionSet(full_rect(cfg.geometry2().out_dims())));
}

std::int64_t full_mac_count(const NetConfig& cfg) {
  return full_conv_mac_count(cfg) + static_cast<std::int64_t>(cfg.dense_inputs()) * cfg.action_count;
}

template <typename T>
CachedNet<T>::CachedNet(NetConfig cfg, NetWeights<T> weights)
    : cfg_(cfg), geom1_(cfg.geometry1()), geom2_(cfg.geometry2()), weights_(std::move(weights)) {
  cfg_.validate();
  const auto& w = weights_;
  if (w.conv1.out_channels != cfg_.filters1 || w.conv1.in_channels != 1 || w.conv1.kernel != cfg_.layer1.kernel ||
      w.conv2.out_channels != cfg_.filters2 || w.conv2.in_channels != cfg_.filters1 ||
      w.conv2.kernel != cfg_.layer2.kernel || w.dense.in_size != cfg_.dense_inputs() ||
      w.dense.out_size != cfg_.action_count) {
    throw ShapeError("network weights do not match the configuration");
  }
}

template <typename T>
void CachedNet<T>::check_frame(const Frame& frame) const {
  if (frame.dims() != geom1_.in_dims()) {
    throw ShapeError("frame is " + to_string(frame.dims()) + " but the network expects " + to_string(geom1_.in_dims()));
  }
}

template <typename T>
const typename CachedNet<T>::Cache& CachedNet<T>::require_cache() const {
  if (!warm_) throw StateError("activation cache is cold");
  return cache_;
}

template <typename T>
void CachedNet<T>::invalidate() {
  warm_ = false;
  last_dirty_.reset();
}

template <typename T>
NetWeights<T>& CachedNet<T>::edit_weights() {
  invalidate();
  return weights_;
}

template <typename T>
const Frame& CachedNet<T>::prev_frame() const {
  return require_cache().frame;
}
template <typename T>
const FeatureMap<T>& CachedNet<T>::input_map() const {
  return require_cache().input;
}
template <typename T>
const FeatureMap<T>& CachedNet<T>::cache1() const {
  return require_cache().act1;
}
template <typename T>
const FeatureMap<T>& CachedNet<T>::cache2() const {
  return require_cache().act2;
}
template <typename T>
const std::vector<T>& CachedNet<T>::cached_logits() const {
  return require_cache().logits;
}
template <typename T>
const std::vector<T>& CachedNet<T>::cached_probs() const {
  return require_cache().probs;
}

template <typename T>
StepOutput<T> CachedNet<T>::forward_full(const Frame& frame) {
  check_frame(frame);
  Cache& c = cache_;
  if (c.input.size() == 0) {
    c.input = FeatureMap<T>(1, geom1_.in_rows(), geom1_.in_cols());
    c.act1 = FeatureMap<T>(cfg_.filters1, geom1_.out_rows(), geom1_.out_cols());
    c.act2 = FeatureMap<T>(cfg_.filters2, geom2_.out_rows(), geom2_.out_cols());
  }
  const auto pixels = frame.pixels();
  auto input = c.input.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) input[i] = static_cast<T>(pixels[i]) / T(255);
  c.frame = frame;

  const Rect full1 = full_rect(geom1_.out_dims());
  const Rect full2 = full_rect(geom2_.out_dims());
  conv2d_region_into(c.input, weights_.conv1, geom1_, full1, c.act1);
  relu_region(c.act1, full1);
  conv2d_region_into(c.act1, weights_.conv2, geom2_, full2, c.act2);
  relu_region(c.act2, full2);
  c.logits = dense(std::span<const T>(c.act2.data()), weights_.dense);
  c.probs = softmax(std::span<const T>(c.logits));
  warm_ = true;

  StepOutput<T> out;
  out.probs = c.probs;
  out.logits = c.logits;
  out.dirty_in = RegionSet(full_rect(frame.dims()));
  out.dirty1 = RegionSet(full1);
  out.dirty2 = RegionSet(full2);
  out.macs_used = full_mac_count(cfg_);
  out.mode = StepMode::full;
  last_dirty_ = DirtyRegions{out.dirty_in, out.dirty1, out.dirty2};
  mac_counter_ += out.macs_used;
  return out;
}

template <typename T>
StepOutput<T> CachedNet<T>::forward_reuse(const Frame& frame) {
  if (!warm_) return forward_full(frame);
  check_frame(frame);
  Cache& c = cache_;

  StepOutput<T> out;
  out.mode = StepMode::reuse;
  if (cfg_.diff.strategy == DiffStrategy::bounding_rect) {
    if (auto box = diff_bounding_rect(c.frame, frame, cfg_.diff.tolerance)) out.dirty_in = RegionSet(*box);
  } else {
    out.dirty_in = diff_tiled_bounded(c.frame, frame, cfg_.diff.tile, cfg_.diff.tolerance);
  }

  if (out.dirty_in.empty()) {
    out.probs = c.probs;
    out.logits = c.logits;
    out.macs_used = mac_count(cfg_, out.dirty1, out.dirty2);
    last_dirty_ = DirtyRegions{};
    mac_counter_ += out.macs_used;
    return out;
  }

  // Splice the changed pixels into the cached frame and input map. With a
  // nonzero tolerance the cache keeps the old values of sub-threshold pixels.
  for (const Rect& r : out.dirty_in) {
    for (int row = r.row0; row <= r.row1; ++row) {
      auto src = frame.row(row);
      auto dst = c.frame.row(row);
      T* in = c.input.row_ptr(0, row);
      for (int col = r.col0; col <= r.col1; ++col) {
        dst[col] = src[col];
        in[col] = static_cast<T>(src[col]) / T(255);
      }
    }
  }

  out.dirty1 = affected_output_region(out.dirty_in, geom1_);
  for (const Rect& r : out.dirty1) {
    conv2d_region_into(c.input, weights_.conv1, geom1_, r, c.act1);
    relu_region(c.act1, r);
  }

  out.dirty2 = affected_output_region(out.dirty1, geom2_);
  if (cfg_.dense_delta_mode) gather(c.act2, out.dirty2, old_slice_);
  for (const Rect& r : out.dirty2) {
    conv2d_region_into(c.act1, weights_.conv2, geom2_, r, c.act2);
    relu_region(c.act2, r);
  }

  if (cfg_.dense_delta_mode) {
    gather(c.act2, out.dirty2, new_slice_);
    c.logits = dense_delta(out.dirty2, old_slice_, new_slice_);
  } else {
    c.logits = dense(std::span<const T>(c.act2.data()), weights_.dense);
  }
  c.probs = softmax(std::span<const T>(c.logits));

  out.probs = c.probs;
  out.logits = c.logits;
  out.macs_used = mac_count(cfg_, out.dirty1, out.dirty2);
  last_dirty_ = DirtyRegions{out.dirty_in, out.dirty1, out.dirty2};
  mac_counter_ += out.macs_used;
  return out;
}

template <typename T>
void CachedNet<T>::gather(const FeatureMap<T>& map, const RegionSet& region, std::vector<T>& out) const {
  out.clear();
  out.reserve(static_cast<std::size_t>(region.area()) * map.channels());
  for (int ch = 0; ch < map.channels(); ++ch) {
    for (const Rect& r : region) {
      for (int row = r.row0; row <= r.row1; ++row) {
        const T* p = map.row_ptr(ch, row);
        out.insert(out.end(), p + r.col0, p + r.col1 + 1);
      }
    }
  }
}

template <typename T>
std::vector<T> CachedNet<T>::dense_delta(const RegionSet& changed, std::span<const T> old_slice,
                                         std::span<const T> new_slice) const {
  const Cache& c = require_cache();
  const std::size_t expected = static_cast<std::size_t>(changed.area()) * cfg_.filters2;
  if (old_slice.size() != expected || new_slice.size() != expected) {
    throw ShapeError("dense delta slices must hold " + std::to_string(expected) + " values");
  }
  for (const Rect& r : changed) {
    if (!r.within(geom2_.out_dims())) throw BoundsError("changed rect " + to_string(r) + " is outside layer 2");
  }
  const auto& w = weights_.dense;
  std::vector<T> logits(c.logits);
  for (int o = 0; o < w.out_size; ++o) {
    const T* row = w.weights.data() + static_cast<std::size_t>(o) * w.in_size;
    T delta = T(0);
    std::size_t k = 0;
    for (int ch = 0; ch < cfg_.filters2; ++ch) {
      for (const Rect& r : changed) {
        for (int rr = r.row0; rr <= r.row1; ++rr) {
          const std::size_t base = c.act2.offset(ch, rr, 0);
          for (int cc = r.col0; cc <= r.col1; ++cc, ++k) delta += row[base + cc] * (new_slice[k] - old_slice[k]);
        }
      }
    }
    logits[o] += delta;
  }
  return logits;
}

template class CachedNet<float>;
template class CachedNet<double>;
template NetWeights<float> init_weights<float>(const NetConfig&, std::uint64_t);
template NetWeights<double> init_weights<double>(const NetConfig&, std::uint64_t);

}  // namespace convreuse
