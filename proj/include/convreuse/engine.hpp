#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "convreuse/frame.hpp"
#include "convreuse/region.hpp"
#include "convreuse/tensor.hpp"

namespace convreuse {

struct LayerGeometry {
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  static LayerGeometry same(int kernel) { return {kernel, 1, (kernel - 1) / 2}; }
};

enum class DiffStrategy { bounding_rect, tiled };

struct DiffConfig {
  DiffStrategy strategy = DiffStrategy::bounding_rect;
  int tile = 8;
  int tolerance = 0;
};

/// conv1 -> relu -> conv2 -> relu -> flatten -> dense -> softmax.
struct NetConfig {
  int filters1 = 20;
  int filters2 = 40;
  LayerGeometry layer1;
  LayerGeometry layer2;
  int input_rows = 0;
  int input_cols = 0;
  int action_count = 3;
  bool dense_delta_mode = false;
  DiffConfig diff;

  static NetConfig make(int rows, int cols, int filters1, int filters2, int kernel = 3, int actions = 3);

  // Throws ShapeError unless the layer geometries chain.
  void validate() const;

  ConvGeometry geometry1() const;
  ConvGeometry geometry2() const;
  int dense_inputs() const;
};

template <typename T>
struct NetWeights {
  ConvWeights<T> conv1;
  ConvWeights<T> conv2;
  DenseWeights<T> dense;
};

template <typename T>
NetWeights<T> init_weights(const NetConfig& cfg, std::uint64_t seed);

enum class StepMode { full, reuse };

const char* to_string(StepMode m);

struct DirtyRegions {
  RegionSet input;
  RegionSet layer1;
  RegionSet layer2;
};

template <typename T>
struct StepOutput {
  std::vector<T> probs;
  std::vector<T> logits;
  RegionSet dirty_in;
  RegionSet dirty1;
  RegionSet dirty2;
  std::int64_t macs_used = 0;
  StepMode mode = StepMode::full;
};

/// Analytic multiply-accumulate counts. Conv layers cost
/// (dirty output positions) x out_channels x in_channels x k^2; the dense
/// layer costs in x out, or (changed inputs) x out in delta mode.
std::int64_t conv_mac_count(const NetConfig& cfg, const RegionSet& dirty1, const RegionSet& dirty2);
std::int64_t dense_mac_count(const NetConfig& cfg, const RegionSet& dirty2);
std::int64_t mac_count(const NetConfig& cfg, const RegionSet& dirty1, const RegionSet& dirty2);
std::int64_t full_mac_count(const NetConfig& cfg);
std::int64_t full_conv_mac_count(const NetConfig& cfg);

/// The two-conv-plus-dense policy network with per-layer activation caches.
///
/// forward_full evaluates every layer over the whole frame. forward_reuse
/// diffs the frame against the previous one, grows the changed region
/// through each conv layer and recomputes only those positions, splicing
/// them into the cached activations. With dense delta mode off the two
/// paths produce bitwise identical probabilities.
///
/// Not thread-safe; one instance per thread.
template <typename T>
class CachedNet {
 public:
  CachedNet(NetConfig cfg, NetWeights<T> weights);

  StepOutput<T> forward_full(const Frame& frame);
  StepOutput<T> forward_reuse(const Frame& frame);

  // cached_logits + W[:, changed] . (new - old). `changed` lists regions of
  // the layer-2 activation map; the slices hold every channel of those
  // positions, channel-major, then rect order, then row-major.
  std::vector<T> dense_delta(const RegionSet& changed, std::span<const T> old_slice,
                             std::span<const T> new_slice) const;

  // Drops the caches; the next forward_reuse takes the full path.
  void invalidate();
  bool warm() const { return warm_; }

  const NetConfig& config() const { return cfg_; }
  const NetWeights<T>& weights() const { return weights_; }
  // Mutable access for training updates. Invalidates the caches.
  NetWeights<T>& edit_weights();

  // Valid only while warm().
  const Frame& prev_frame() const;
  const FeatureMap<T>& input_map() const;
  const FeatureMap<T>& cache1() const;
  const FeatureMap<T>& cache2() const;
  const std::vector<T>& cached_logits() const;
  const std::vector<T>& cached_probs() const;

  // Regions recomputed by the most recent forward pass.
  const std::optional<DirtyRegions>& last_dirty() const { return last_dirty_; }
  std::int64_t mac_counter() const { return mac_counter_; }

 private:
  struct Cache {
    Frame frame;
    FeatureMap<T> input;
    FeatureMap<T> act1;
    FeatureMap<T> act2;
    std::vector<T> logits;
    std::vector<T> probs;
  };

  void check_frame(const Frame& frame) const;
  const Cache& require_cache() const;
  void gather(const FeatureMap<T>& map, const RegionSet& region, std::vector<T>& out) const;

  NetConfig cfg_;
  ConvGeometry geom1_;
  ConvGeometry geom2_;
  NetWeights<T> weights_;
  // Buffers outlive invalidate(); warm_ says whether their contents are current.
  Cache cache_;
  bool warm_ = false;
  std::optional<DirtyRegions> last_dirty_;
  std::int64_t mac_counter_ = 0;
  std::vector<T> old_slice_;
  std::vector<T> new_slice_;
};

extern template class CachedNet<float>;
extern template class CachedNet<double>;

}  // namespace convreuse
