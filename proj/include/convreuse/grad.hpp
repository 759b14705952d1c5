#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "convreuse/engine.hpp"
#include "convreuse/frames.hpp"
#include "convreuse/random.hpp"

namespace convreuse {

/// Parameter gradients, shape-matched to NetWeights.
template <typename T>
struct Gradients {
  ConvWeights<T> conv1;
  ConvWeights<T> conv2;
  DenseWeights<T> dense;

  static Gradients zeros_like(const NetWeights<T>& w);

  void add_scaled(const Gradients& other, T factor);
  void scale(T factor);
  void set_zero();
  double norm() const;
  bool finite() const;

  // Calls fn(span) on each parameter block in a fixed order.
  template <typename Fn>
  void for_each_block(Fn&& fn) {
    fn(std::span<T>(conv1.weights));
    fn(std::span<T>(conv1.bias));
    fn(std::span<T>(conv2.weights));
    fn(std::span<T>(conv2.bias));
    fn(std::span<T>(dense.weights));
    fn(std::span<T>(dense.bias));
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    fn(std::span<const T>(conv1.weights));
    fn(std::span<const T>(conv1.bias));
    fn(std::span<const T>(conv2.weights));
    fn(std::span<const T>(conv2.bias));
    fn(std::span<const T>(dense.weights));
    fn(std::span<const T>(dense.bias));
  }
};

/// Gradient of scale * log pi(action | frame) with respect to every weight
/// and bias. The net must be warm on `frame` (its last forward pass ran on it).
template <typename T>
Gradients<T> backward_full(const CachedNet<T>& net, const Frame& frame, int action, T scale);

/// Reuse-mode gradient: cached activations outside the recorded dirty
/// regions are constants, so conv weight and bias gradients only collect
/// contributions from output positions the last forward pass recomputed.
/// Dense gradients match backward_full. With full-frame dirty regions the
/// result is bitwise equal to backward_full.
template <typename T>
Gradients<T> backward_reuse(const CachedNet<T>& net, const Frame& frame, int action, T scale);

template <typename T>
struct TraceStep;

/// Same, using the dirty regions recorded in a trace step.
template <typename T>
Gradients<T> backward_reuse(const CachedNet<T>& net, const TraceStep<T>& step, T scale);

/// Accumulating forms: into += gradient. `into` must be shaped like the net.
template <typename T>
void accumulate_backward_full(const CachedNet<T>& net, const Frame& frame, int action, T scale, Gradients<T>& into);
template <typename T>
void accumulate_backward_reuse(const CachedNet<T>& net, const Frame& frame, int action, T scale, Gradients<T>& into);

/// G_t = sum_j gamma^j r_{t+j}.
std::vector<double> returns_to_go(std::span<const double> rewards, double gamma);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double gamma = 0.99;
  double alpha = 1e-3;
  long steps = 3000;
  std::uint64_t seed = 1;
  StepMode mode = StepMode::full;
  int downsample = 4;
  bool record_trace = false;
};

template <typename T>
struct TraceStep {
  Frame frame;
  int action = 0;
  T prob = 0;
  double reward = 0;
  DirtyRegions dirty;
};

template <typename T>
struct EpisodeTrace {
  std::vector<TraceStep<T>> steps;
};

struct TrainStepResult {
  int action = 0;
  double reward = 0;
  bool done = false;
  std::int64_t macs = 0;
};

struct EpisodeResult {
  double episode_return = 0;
  double gradient_norm = 0;
  long steps = 0;
};

/// Plain REINFORCE on a PaddleEnv. Actions are sampled from the policy, and
/// sum_t G_t grad log pi(a_t | s_t) is accumulated online through an
/// eligibility trace (e_t = gamma e_{t-1} + grad_t, sum += r_t e_t), which
/// equals the returns-to-go form without storing per-step activations.
/// theta <- theta + alpha * sum at each episode end.
template <typename T>
class ReinforceTrainer {
 public:
  ReinforceTrainer(CachedNet<T>& net, PaddleEnv& env, TrainConfig cfg);

  TrainStepResult step();

  // Steps until the current episode ends and returns its summary.
  EpisodeResult run_episode();

  const Frame& observation() const { return obs_; }
  // Wall time spent in forward, backward and weight updates.
  double model_seconds() const { return model_seconds_; }
  const EpisodeTrace<T>& trace() const { return trace_; }
  const std::optional<EpisodeResult>& last_episode() const { return last_episode_; }
  long episodes() const { return episodes_; }

 private:
  int sample(std::span<const T> probs);
  void finish_episode();

  CachedNet<T>& net_;
  PaddleEnv& env_;
  TrainConfig cfg_;
  Rng rng_;
  Frame obs_;
  Gradients<T> eligibility_;
  Gradients<T> accumulated_;
  EpisodeTrace<T> trace_;
  double episode_return_ = 0;
  long episode_steps_ = 0;
  long episodes_ = 0;
  double model_seconds_ = 0;
  std::optional<EpisodeResult> last_episode_;
};

template <typename T>
void apply_update(NetWeights<T>& weights, const Gradients<T>& grads, T alpha);

template <typename T>
EpisodeResult reinforce_episode(CachedNet<T>& net, PaddleEnv& env, const TrainConfig& cfg);

extern template class ReinforceTrainer<float>;
extern template class ReinforceTrainer<double>;

}  // namespace convreuse
