#include "convreuse/grad.hpp"

#include <algorithm>
#include <chrono>
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

// Valid output-column range [lo, hi] inside `r` for kernel column dc.
std::pair<int, int> tap_columns(const Rect& r, const ConvGeometry& g, int dc) {
  const int s = g.stride();
  const int p = g.padding();
  return {std::max(r.col0, ceil_div(p - dc, s)), std::min(r.col1, floor_div(g.in_cols() - 1 + p - dc, s))};
}

// Weight and bias gradients of one conv layer over the output positions of
// `r`, given the upstream gradient `dz` (same shape as the layer output).
template <typename T>
void conv_weight_grad(const FeatureMap<T>& dz, const FeatureMap<T>& input, const ConvGeometry& g, const Rect& r,
                      ConvWeights<T>& grad) {
  const int k = g.kernel();
  const int s = g.stride();
  const int p = g.padding();
  for (int oc = 0; oc < grad.out_channels; ++oc) {
    T bias_acc = T(0);
    for (int orow = r.row0; orow <= r.row1; ++orow) {
      const T* d = dz.row_ptr(oc, orow);
      for (int ocol = r.col0; ocol <= r.col1; ++ocol) bias_acc += d[ocol];
    }
    grad.bias[oc] += bias_acc;
    for (int ci = 0; ci < grad.in_channels; ++ci) {
      for (int dr = 0; dr < k; ++dr) {
        for (int dc = 0; dc < k; ++dc) {
          const auto [lo, hi] = tap_columns(r, g, dc);
          T acc = T(0);
          for (int orow = r.row0; orow <= r.row1; ++orow) {
            const int ir = orow * s - p + dr;
            if (ir < 0 || ir >= g.in_rows()) continue;
            const T* d = dz.row_ptr(oc, orow);
            const T* x = input.row_ptr(ci, ir);
            for (int ocol = lo; ocol <= hi; ++ocol) acc += d[ocol] * x[ocol * s - p + dc];
          }
          grad.w(oc, ci, dr, dc) += acc;
        }
      }
    }
  }
}

// d_input += conv^T(dz) restricted to the outputs in `r`.
template <typename T>
void conv_input_grad(const FeatureMap<T>& dz, const ConvWeights<T>& w, const ConvGeometry& g, const Rect& r,
                     FeatureMap<T>& d_input) {
  const int k = g.kernel();
  const int s = g.stride();
  const int p = g.padding();
  for (int oc = 0; oc < w.out_channels; ++oc) {
    for (int ci = 0; ci < w.in_channels; ++ci) {
      for (int dr = 0; dr < k; ++dr) {
        for (int orow = r.row0; orow <= r.row1; ++orow) {
          const int ir = orow * s - p + dr;
          if (ir < 0 || ir >= g.in_rows()) continue;
          const T* d = dz.row_ptr(oc, orow);
          T* dx = d_input.row_ptr(ci, ir);
          for (int dc = 0; dc < k; ++dc) {
            const T wt = w.w(oc, ci, dr, dc);
            const auto [lo, hi] = tap_columns(r, g, dc);
            for (int ocol = lo; ocol <= hi; ++ocol) dx[ocol * s - p + dc] += wt * d[ocol];
          }
        }
      }
    }
  }
}

template <typename T>
void check_shapes(const NetWeights<T>& w, const Gradients<T>& g) {
  if (g.conv1.weights.size() != w.conv1.weights.size() || g.conv2.weights.size() != w.conv2.weights.size() ||
      g.dense.weights.size() != w.dense.weights.size() || g.conv1.bias.size() != w.conv1.bias.size() ||
      g.conv2.bias.size() != w.conv2.bias.size() || g.dense.bias.size() != w.dense.bias.size()) {
    throw ShapeError("gradient buffers do not match the network");
  }
}

template <typename T>
void backward_regions(const CachedNet<T>& net, const Frame& frame, int action, T scale, const RegionSet& dirty1,
                      const RegionSet& dirty2, Gradients<T>& g) {
  if (!net.warm() || net.prev_frame() != frame) {
    throw StateError("backward pass needs the forward state of this frame; run a forward pass on it first");
  }
  const NetConfig& cfg = net.config();
  if (action < 0 || action >= cfg.action_count) {
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, " + std::to_string(cfg.action_count) +
                            ")");
  }
  const NetWeights<T>& w = net.weights();
  check_shapes(w, g);
  const ConvGeometry g1 = cfg.geometry1();
  const ConvGeometry g2 = cfg.geometry2();
  const FeatureMap<T>& act1 = net.cache1();
  const FeatureMap<T>& act2 = net.cache2();
  const std::vector<T>& probs = net.cached_probs();

  // d(scale * log softmax(z)[a]) / dz = scale * (onehot(a) - probs)
  std::vector<T> dlogits(probs.size());
  for (std::size_t o = 0; o < probs.size(); ++o) {
    dlogits[o] = scale * ((static_cast<int>(o) == action ? T(1) : T(0)) - probs[o]);
  }

  const auto x2 = act2.data();
  const int n_in = w.dense.in_size;
  for (int o = 0; o < w.dense.out_size; ++o) {
    g.dense.bias[o] += dlogits[o];
    T* gw = g.dense.weights.data() + static_cast<std::size_t>(o) * n_in;
    const T d = dlogits[o];
    for (int i = 0; i < n_in; ++i) gw[i] += d * x2[i];
  }
  if (dirty2.empty()) return;

  // Layer-2 pre-activation gradient, only where it is consumed.
  FeatureMap<T> dz2(act2.channels(), act2.rows(), act2.cols());
  for (int c = 0; c < act2.channels(); ++c) {
    for (const Rect& r : dirty2) {
      for (int row = r.row0; row <= r.row1; ++row) {
        for (int col = r.col0; col <= r.col1; ++col) {
          const std::size_t idx = act2.offset(c, row, col);
          if (!(x2[idx] > T(0))) continue;
          T v = T(0);
          for (int o = 0; o < w.dense.out_size; ++o) v += w.dense.w(o, static_cast<int>(idx)) * dlogits[o];
          dz2.data()[idx] = v;
        }
      }
    }
  }

  FeatureMap<T> da1(act1.channels(), act1.rows(), act1.cols());
  for (const Rect& r : dirty2) {
    conv_weight_grad(dz2, act1, g2, r, g.conv2);
    conv_input_grad(dz2, w.conv2, g2, r, da1);
  }
  if (dirty1.empty()) return;

  for (int c = 0; c < act1.channels(); ++c) {
    for (const Rect& r : dirty1) {
      for (int row = r.row0; row <= r.row1; ++row) {
        T* d = da1.row_ptr(c, row);
        const T* a = act1.row_ptr(c, row);
        for (int col = r.col0; col <= r.col1; ++col) d[col] = a[col] > T(0) ? d[col] : T(0);
      }
    }
  }
  for (const Rect& r : dirty1) conv_weight_grad(da1, net.input_map(), g1, r, g.conv1);
}

}  // namespace

template <typename T>
Gradients<T> Gradients<T>::zeros_like(const NetWeights<T>& w) {
  Gradients<T> g;
  g.conv1 = ConvWeights<T>(w.conv1.out_channels, w.conv1.in_channels, w.conv1.kernel);
  g.conv2 = ConvWeights<T>(w.conv2.out_channels, w.conv2.in_channels, w.conv2.kernel);
  g.dense = DenseWeights<T>(w.dense.in_size, w.dense.out_size);
  return g;
}

template <typename T>
void Gradients<T>::add_scaled(const Gradients& other, T factor) {
  std::vector<std::span<const T>> src;
  other.for_each_block([&](std::span<const T> b) { src.push_back(b); });
  std::size_t i = 0;
  for_each_block([&](std::span<T> dst) {
    const auto s = src[i++];
    if (s.size() != dst.size()) throw ShapeError("gradient shapes differ");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += factor * s[j];
  });
}

template <typename T>
void Gradients<T>::scale(T factor) {
  for_each_block([&](std::span<T> b) {
    for (T& x : b) x *= factor;
  });
}

template <typename T>
void Gradients<T>::set_zero() {
  for_each_block([](std::span<T> b) { std::fill(b.begin(), b.end(), T(0)); });
}

template <typename T>
double Gradients<T>::norm() const {
  double sum = 0;
  for_each_block([&](std::span<const T> b) {
    for (T x : b) sum += static_cast<double>(x) * static_cast<double>(x);
  });
  return std::sqrt(sum);
}

template <typename T>
bool Gradients<T>::finite() const {
  bool ok = true;
  for_each_block([&](std::span<const T> b) {
    for (T x : b) ok = ok && std::isfinite(x);
  });
  return ok;
}

template <typename T>
void accumulate_backward_full(const CachedNet<T>& net, const Frame& frame, int action, T scale, Gradients<T>& into) {
  const NetConfig& cfg = net.config();
  backward_regions(net, frame, action, scale, RegionSet(full_rect(cfg.geometry1().out_dims())),
                   RegionSet(full_rect(cfg.geometry2().out_dims())), into);
}

template <typename T>
void accumulate_backward_reuse(const CachedNet<T>& net, const Frame& frame, int action, T scale, Gradients<T>& into) {
  const auto& dirty = net.last_dirty();
  if (!dirty) throw StateError("no dirty regions recorded; run forward_reuse first");
  backward_regions(net, frame, action, scale, dirty->layer1, dirty->layer2, into);
}

template <typename T>
Gradients<T> backward_full(const CachedNet<T>& net, const Frame& frame, int action, T scale) {
  auto g = Gradients<T>::zeros_like(net.weights());
  accumulate_backward_full(net, frame, action, scale, g);
  return g;
}

template <typename T>
Gradients<T> backward_reuse(const CachedNet<T>& net, const Frame& frame, int action, T scale) {
  auto g = Gradients<T>::zeros_like(net.weights());
  accumulate_backward_reuse(net, frame, action, scale, g);
  return g;
}

template <typename T>
Gradients<T> backward_reuse(const CachedNet<T>& net, const TraceStep<T>& step, T scale) {
  auto g = Gradients<T>::zeros_like(net.weights());
  backward_regions(net, step.frame, step.action, scale, step.dirty.layer1, step.dirty.layer2, g);
  return g;
}

std::vector<double> returns_to_go(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("discount must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double running = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

template <typename T>
void apply_update(NetWeights<T>& weights, const Gradients<T>& grads, T alpha) {
  auto step = [alpha](std::vector<T>& dst, const std::vector<T>& g) {
    if (dst.size() != g.size()) throw ShapeError("gradient shapes differ from the weights");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * g[i];
  };
  step(weights.conv1.weights, grads.conv1.weights);
  step(weights.conv1.bias, grads.conv1.bias);
  step(weights.conv2.weights, grads.conv2.weights);
  step(weights.conv2.bias, grads.conv2.bias);
  step(weights.dense.weights, grads.dense.weights);
  step(weights.dense.bias, grads.dense.bias);
}

template <typename T>
ReinforceTrainer<T>::ReinforceTrainer(CachedNet<T>& net, PaddleEnv& env, TrainConfig cfg)
    : net_(net),
      env_(env),
      cfg_(cfg),
      rng_(cfg.seed),
      obs_(downsample(env.render(), cfg.downsample)),
      eligibility_(Gradients<T>::zeros_like(net.weights())),
      accumulated_(Gradients<T>::zeros_like(net.weights())) {
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("discount must lie in [0, 1]");
  if (!(cfg.alpha >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (net.config().action_count != kPaddleActions) {
    throw ShapeError("paddle training needs a " + std::to_string(kPaddleActions) + "-action policy");
  }
}

template <typename T>
int ReinforceTrainer<T>::sample(std::span<const T> probs) {
  const double u = rng_.uniform01();
  double cum = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += static_cast<double>(probs[i]);
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

template <typename T>
TrainStepResult ReinforceTrainer<T>::step() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  StepOutput<T> out = cfg_.mode == StepMode::full ? net_.forward_full(obs_) : net_.forward_reuse(obs_);
  const int action = sample(out.probs);
  eligibility_.scale(static_cast<T>(cfg_.gamma));
  if (cfg_.mode == StepMode::full) {
    accumulate_backward_full(net_, obs_, action, T(1), eligibility_);
  } else {
    accumulate_backward_reuse(net_, obs_, action, T(1), eligibility_);
  }
  model_seconds_ += std::chrono::duration<double>(clock::now() - t0).count();

  if (cfg_.record_trace) {
    trace_.steps.push_back(
        {obs_, action, out.probs[static_cast<std::size_t>(action)], 0.0, DirtyRegions{out.dirty_in, out.dirty1, out.dirty2}});
  }

  PaddleStep env_step = env_.step(static_cast<PaddleAction>(action));
  if (cfg_.record_trace) trace_.steps.back().reward = env_step.reward;
  if (env_step.reward != 0.0) {
    const auto t1 = clock::now();
    accumulated_.add_scaled(eligibility_, static_cast<T>(env_step.reward));
    model_seconds_ += std::chrono::duration<double>(clock::now() - t1).count();
  }
  episode_return_ += env_step.reward;
  ++episode_steps_;
  obs_ = downsample(env_step.frame, cfg_.downsample);

  TrainStepResult result{action, env_step.reward, env_step.done, out.macs_used};
  if (env_step.done) finish_episode();
  return result;
}

template <typename T>
void ReinforceTrainer<T>::finish_episode() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  if (!accumulated_.finite()) {
    throw DivergenceError("non-finite policy gradient after episode " + std::to_string(episodes_ + 1) + " (" +
                          std::to_string(episode_steps_) + " steps, return " + std::to_string(episode_return_) + ")");
  }
  EpisodeResult result{episode_return_, accumulated_.norm(), episode_steps_};
  apply_update(net_.edit_weights(), accumulated_, static_cast<T>(cfg_.alpha));
  eligibility_.set_zero();
  accumulated_.set_zero();
  model_seconds_ += std::chrono::duration<double>(clock::now() - t0).count();

  ++episodes_;
  episode_return_ = 0;
  episode_steps_ = 0;
  last_episode_ = result;
}

template <typename T>
EpisodeResult ReinforceTrainer<T>::run_episode() {
  const long before = episodes_;
  if (cfg_.record_trace) trace_.steps.clear();
  while (episodes_ == before) step();
  return *last_episode_;
}

template <typename T>
EpisodeResult reinforce_episode(CachedNet<T>& net, PaddleEnv& env, const TrainConfig& cfg) {
  ReinforceTrainer<T> trainer(net, env, cfg);
  return trainer.run_episode();
}

#define CONVREUSE_INSTANTIATE(T)                                                                                  \
  template struct Gradients<T>;                                                                                   \
  template Gradients<T> backward_full<T>(const CachedNet<T>&, const Frame&, int, T);                              \
  template Gradients<T> backward_reuse<T>(const CachedNet<T>&, const Frame&, int, T);                             \
  template Gradients<T> backward_reuse<T>(const CachedNet<T>&, const TraceStep<T>&, T);                           \
  template void accumulate_backward_full<T>(const CachedNet<T>&, const Frame&, int, T, Gradients<T>&);            \
  template void accumulate_backward_reuse<T>(const CachedNet<T>&, const Frame&, int, T, Gradients<T>&);           \
  template void apply_update<T>(NetWeights<T>&, const Gradients<T>&, T);                                          \
  template class ReinforceTrainer<T>;                                                                             \
  template EpisodeResult reinforce_episode<T>(CachedNet<T>&, PaddleEnv&, const TrainConfig&);

CONVREUSE_INSTANTIATE(float)
CONVREUSE_INSTANTIATE(double)

#undef CONVREUSE_INSTANTIATE

}  // namespace convreuse
