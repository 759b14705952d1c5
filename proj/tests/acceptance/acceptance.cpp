// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "convreuse/bench.hpp"
#include "convreuse/engine.hpp"
#include "convreuse/frames.hpp"
#include "convreuse/grad.hpp"
#include "grad_oracles.hpp"

using namespace convreuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Frame> take(FrameSource& src, int n, int factor) {
  std::vector<Frame> out;
  for (int i = 0; i < n; ++i) out.push_back(downsample(*src.next(), factor));
  return out;
}

// 160x160 raw frames of a 10x10 sprite moving 2 px per frame; halved to an
// 80x80 input with a 5x5 sprite moving 1 px.
std::vector<Frame> small_sprite_frames(int n) {
  SpriteConfig sc;
  sc.rows = sc.cols = 160;
  sc.sprite_rows = sc.sprite_cols = 10;
  sc.velocity_rows = 0;
  sc.velocity_cols = 2;
  sc.start_row = 60;
  sc.start_col = 40;
  std::vector<Frame> out;
  for (int t = 0; t < n; ++t) out.push_back(downsample(sprite_frame(sc, t), 2));
  return out;
}

// 1. forward_reuse is bitwise forward_full.
Outcome equivalence() {
  const auto t0 = Clock::now();
  struct Case {
    int k, f1, f2, steps;
  };
  const Case cases[] = {{1, 20, 40, 100}, {3, 4, 8, 100}, {3, 40, 80, 30}, {5, 20, 40, 50}};
  long steps = 0, mismatches = 0;
  for (const Case& c : cases) {
    SpriteSource sprite(SpriteConfig{});
    NoisePatchSource noise(208, 160, 32, 5);
    StaticSource still(sprite_frame(SpriteConfig{}, 0));
    FullChangeSource change(208, 160, 5);
    for (FrameSource* src : std::initializer_list<FrameSource*>{&sprite, &noise, &still, &change}) {
      const auto frames = take(*src, c.steps, 4);
      const auto cfg = NetConfig::make(frames[0].rows(), frames[0].cols(), c.f1, c.f2, c.k, 3);
      const auto w = init_weights<float>(cfg, 2024);
      CachedNet<float> full(cfg, w), reuse(cfg, w);
      for (const Frame& f : frames) {
        const auto a = full.forward_full(f);
        const auto b = reuse.forward_reuse(f);
        if (!bitwise_equal<float>(a.probs, b.probs)) ++mismatches;
        ++steps;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {steps >= 1000 && mismatches == 0 && elapsed < 120,
          std::to_string(steps) + " steps over sprite/noise/static/fullchange, k in {1,3,5}, filters up to 40/80: " +
              std::to_string(mismatches) + " mismatching steps, " + fmt("%.1f s", elapsed)};
}

// 2. Predicted affected rect vs actual output changes.
Outcome dilation() {
  Rng rng(99);
  const int cases = 10000;
  int escapes = 0, exact = 0, same_checks = 0, same_ok = 0;
  for (int trial = 0; trial < cases; ++trial) {
    const int k = 1 + 2 * rng.below(4);
    const int s = 1 + rng.below(3);
    const int p = rng.below(k);
    const int rows = k + rng.below(20), cols = k + rng.below(20);
    const ConvGeometry g(k, s, p, rows, cols);
    const int in_c = 1 + rng.below(2), out_c = 1 + rng.below(2);
    FeatureMap<double> before(in_c, rows, cols);
    for (auto& v : before.data()) v = rng.uniform(-1, 1);
    const auto w = random_conv_weights<double>(out_c, in_c, k, rng);
    const int y0 = rng.below(rows), x0 = rng.below(cols);
    const Rect r{y0, x0, y0 + rng.below(std::min(6, rows - y0)), x0 + rng.below(std::min(6, cols - x0))};
    FeatureMap<double> after = before;
    for (int c = 0; c < in_c; ++c) {
      for (int y = r.row0; y <= r.row1; ++y) {
        for (int x = r.col0; x <= r.col1; ++x) after.at(c, y, x) = rng.uniform(-1, 1);
      }
    }
    const auto a = conv2d(before, w, g), b = conv2d(after, w, g);
    std::optional<Rect> actual;
    for (int c = 0; c < out_c; ++c) {
      for (int y = 0; y < g.out_rows(); ++y) {
        for (int x = 0; x < g.out_cols(); ++x) {
          if (a.at(c, y, x) == b.at(c, y, x)) continue;
          if (!actual) {
            actual = Rect{y, x, y, x};
          } else {
            actual = Rect{std::min(actual->row0, y), std::min(actual->col0, x), std::max(actual->row1, y),
                          std::max(actual->col1, x)};
          }
        }
      }
    }
    const auto predicted = affected_output_rect(r, g);
    if (actual && (!predicted || !predicted->contains(*actual))) ++escapes;
    if (actual == predicted) ++exact;

    if (s == 1 && p == (k - 1) / 2) {
      const int h = (k - 1) / 2;
      const Rect grown{std::max(0, r.row0 - h), std::max(0, r.col0 - h), std::min(rows - 1, r.row1 + h),
                       std::min(cols - 1, r.col1 + h)};
      ++same_checks;
      same_ok += predicted && *predicted == grown;
    }
  }
  const double rate = double(exact) / cases;
  return {escapes == 0 && rate >= 0.99 && same_ok == same_checks,
          std::to_string(cases) + " fuzzed cases: " + std::to_string(escapes) + " changed outputs outside the " +
              "predicted rect, exact match " + fmt("%.2f%%", 100 * rate) + ", (k-1)/2 growth held in " +
              std::to_string(same_ok) + "/" + std::to_string(same_checks) + " same-padding cases"};
}

// 3. Small moving sprite: MAC ratio and wall-clock ordering.
Outcome small_change_cost() {
  const auto frames = small_sprite_frames(3000);
  BenchConfig cfg;
  cfg.source = "sprite 5x5 @ 1px, 80x80";
  cfg.steps = 3000;
  cfg.repeats = 2;
  cfg.filters = {{20, 40}};
  cfg.downsample = 2;
  const auto recs = run_inference_bench(cfg, frames);
  const auto net = NetConfig::make(80, 80, 20, 40, 3, 3);

  // Conv share of the per-step MACs, first (cold, full) step excluded.
  CachedNet<float> probe(net, init_weights<float>(net, cfg.seed));
  probe.forward_reuse(frames[0]);
  double conv = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto out = probe.forward_reuse(frames[i]);
    conv += static_cast<double>(conv_mac_count(net, out.dirty1, out.dirty2));
  }
  conv /= static_cast<double>(frames.size() - 1);
  const double ratio = conv / static_cast<double>(full_conv_mac_count(net));
  const double full_s = recs[0].mean_seconds, reuse_s = recs[1].mean_seconds;
  return {ratio <= 0.05 && reuse_s < full_s,
          "conv MACs/step reuse/full = " + fmt("%.4f", ratio) + "; 3000 steps mean over " +
              std::to_string(cfg.repeats) + " runs: full " + fmt("%.3f s", full_s) + ", reuse " +
              fmt("%.3f s", reuse_s) + " (speedup " + fmt("%.1fx)", full_s / reuse_s)};
}

// 4. Full-frame change: reuse does exactly the full work.
Outcome full_change_cost() {
  BenchConfig cfg;
  cfg.source = "fullchange";
  cfg.steps = 300;
  cfg.repeats = 3;
  cfg.filters = {{20, 40}};
  const auto recs = run_inference_bench(cfg);
  const auto net = NetConfig::make(52, 40, 20, 40, 3, 3);
  CachedNet<float> probe(net, init_weights<float>(net, cfg.seed));
  FullChangeSource src(208, 160, cfg.seed);
  probe.forward_reuse(downsample(*src.next(), 4));
  bool equal = true;
  for (int i = 1; i < cfg.steps; ++i) {
    const auto out = probe.forward_reuse(downsample(*src.next(), 4));
    equal = equal && conv_mac_count(net, out.dirty1, out.dirty2) == full_conv_mac_count(net);
  }
  equal = equal && recs[0].macs_per_step == recs[1].macs_per_step;
  const double ratio = recs[1].mean_seconds / recs[0].mean_seconds;
  return {equal, std::string("conv MACs equal to full on every step: ") + (equal ? "yes" : "no") +
                     "; reported only: reuse/full time = " + fmt("%.3f", ratio) +
                     (ratio >= 0.95 ? " (no gain, as expected)" : "")};
}

// 5. Gradients.
Outcome gradients() {
  const auto t0 = Clock::now();
  const auto cfg = NetConfig::make(16, 16, 4, 8, 3, 3);
  const auto w0 = init_weights<double>(cfg, 5);
  Rng rng(77);
  const Frame frame = oracle::random_frame(16, 16, rng);
  const int action = 2;
  CachedNet<double> net(cfg, w0);
  net.forward_full(frame);
  const auto grad = backward_full(net, frame, action, 1.0);

  const double h = 1e-5;
  const auto base = oracle::naive_forward(cfg, w0, frame);
  long checked = 0, skipped = 0;
  double fd_worst = 0;
  auto w = w0;
  auto probe = [&](std::vector<double>& params, std::span<const double> analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const auto up = oracle::naive_forward(cfg, w, frame);
      params[i] = keep - h;
      const auto down = oracle::naive_forward(cfg, w, frame);
      params[i] = keep;
      if (!oracle::same_signs(up.z1, base.z1) || !oracle::same_signs(down.z1, base.z1) ||
          !oracle::same_signs(up.z2, base.z2) || !oracle::same_signs(down.z2, base.z2)) {
        ++skipped;
        continue;
      }
      const double fd = (std::log(up.probs[action]) - std::log(down.probs[action])) / (2 * h);
      fd_worst = std::max(fd_worst, std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-6}));
      ++checked;
    }
  };
  probe(w.conv1.weights, grad.conv1.weights);
  probe(w.conv1.bias, grad.conv1.bias);
  probe(w.conv2.weights, grad.conv2.weights);
  probe(w.conv2.bias, grad.conv2.bias);
  probe(w.dense.weights, grad.dense.weights);
  probe(w.dense.bias, grad.dense.bias);

  bool full_bitwise = true;
  for (int a = 0; a < 3; ++a) {
    full_bitwise = full_bitwise && oracle::bitwise_same(backward_reuse(net, frame, a, 1.0), backward_full(net, frame, a, 1.0));
  }

  // Fuzzed sprite: random size, velocity and background per run.
  double mask_worst = 0;
  int mask_steps = 0;
  while (mask_steps < 100) {
    SpriteConfig sc;
    sc.rows = sc.cols = 16;
    sc.sprite_rows = 1 + rng.below(4);
    sc.sprite_cols = 1 + rng.below(4);
    sc.velocity_rows = rng.below(3) - 1;
    sc.velocity_cols = 1 + rng.below(2);
    sc.start_row = rng.below(12);
    sc.start_col = rng.below(12);
    sc.background = static_cast<std::uint8_t>(rng.below(100));
    CachedNet<double> reuse(cfg, w0);
    reuse.forward_reuse(sprite_frame(sc, 0));
    for (int t = 1; t <= 20; ++t, ++mask_steps) {
      const Frame f = sprite_frame(sc, t);
      reuse.forward_reuse(f);
      const auto& d = *reuse.last_dirty();
      const int a = rng.below(3);
      mask_worst = std::max(mask_worst, oracle::blockwise_relative_error(
                                            backward_reuse(reuse, f, a, 1.0),
                                            oracle::masked_gradient(cfg, w0, f, a, d.layer1, d.layer2)));
    }
  }
  const double elapsed = seconds_since(t0);
  return {fd_worst <= 1e-4 && full_bitwise && mask_worst <= 1e-6 && elapsed < 60,
          "finite differences: max rel err " + fmt("%.2e", fd_worst) + " over " + std::to_string(checked) +
              " params (" + std::to_string(skipped) + " skipped at ReLU kinks); reuse with full dirty bitwise: " +
              (full_bitwise ? "yes" : "no") + "; mask oracle over " + std::to_string(mask_steps) +
              " sprite steps: max rel err " + fmt("%.2e", mask_worst) + "; " + fmt("%.1f s", elapsed)};
}

// 6. Change statistics.
Outcome change_statistics() {
  // Columns 20..64 of 80: the sprite stays clear of the wrap.
  const auto frames = small_sprite_frames(40);
  const auto s = change_stats(frames, 8);
  bool ordered = true;
  std::string worst;
  SpriteSource sprite(SpriteConfig{});
  PaddleSource paddle(PaddleConfig{}, 3);
  NoisePatchSource noise(208, 160, 32, 3);
  FullChangeSource change(208, 160, 3);
  StaticSource still(sprite_frame(SpriteConfig{}, 0));
  for (FrameSource* src : std::initializer_list<FrameSource*>{&sprite, &paddle, &noise, &change, &still}) {
    const auto f = take(*src, 500, 4);
    const auto st = change_stats(f, 8);
    const double area = static_cast<double>(f[0].dims().area());
    const bool ok = st.mean_changed_pixels <= st.mean_tiled_area && st.mean_tiled_area <= st.mean_bounding_rect_area &&
                    st.mean_bounding_rect_area <= area;
    ordered = ordered && ok;
    worst += " " + src->name() + " " + fmt("%.1f", st.mean_changed_pixels) + "/" + fmt("%.1f", st.mean_tiled_area) +
             "/" + fmt("%.1f", st.mean_bounding_rect_area);
  }
  return {s.mean_changed_pixels == 10.0 && s.mean_bounding_rect_area == 30.0 && ordered,
          "sprite changed " + fmt("%g", s.mean_changed_pixels) + ", rect " + fmt("%g", s.mean_bounding_rect_area) +
              "; changed/tiled/rect:" + worst};
}

// 7. CLI defaults and report formats.
Outcome protocol() {
  const char* argv[] = {"convreuse_bench"};
  const auto cli = parse_bench_args(1, argv);
  const bool defaults = !cli.stop && cli.config.steps == 3000 && cli.config.repeats == 10;

  BenchConfig cfg;
  cfg.steps = 30;
  cfg.repeats = 2;
  cfg.filters = {{4, 8}, {8, 16}};
  const auto recs = run_inference_bench(cfg);
  const std::string csv = emit_table(recs, TableFormat::csv);
  const bool header = csv.compare(0, csv.find('\n'), kCsvHeader) == 0 &&
                      std::string(kCsvHeader) ==
                          "source,mode,filters1,filters2,downsample,steps,mean_seconds,std_seconds,"
                          "mean_changed_pixels,mean_rect_area,macs_per_step,speedup_vs_full";
  const auto back = parse_csv(csv);
  bool round_trip = back.size() == recs.size();
  for (std::size_t i = 0; round_trip && i < recs.size(); ++i) {
    const auto &a = recs[i], &b = back[i];
    round_trip = a.source == b.source && a.mode == b.mode && a.filters1 == b.filters1 && a.filters2 == b.filters2 &&
                 a.downsample == b.downsample && a.steps == b.steps && a.mean_changed_pixels == b.mean_changed_pixels &&
                 a.mean_rect_area == b.mean_rect_area && a.macs_per_step == b.macs_per_step;
  }
  const std::string md = emit_table(recs, TableFormat::md);
  BenchRecord full, reuse;
  full.source = reuse.source = "Breakout";
  reuse.mode = StepMode::reuse;
  full.mean_seconds = 3.0;
  reuse.mean_seconds = 1.6;
  const std::string paper_row = emit_table({full, reuse}, TableFormat::md);
  const bool mean_row = md.find("| Mean |") != std::string::npos &&
                        paper_row.find("| Breakout | 3.0 | 1.6 |") != std::string::npos &&
                        paper_row.find("| Mean | 3.0 | 1.6 |") != std::string::npos;
  return {defaults && header && round_trip && mean_row,
          std::string("defaults steps=3000 repeats=10: ") + (defaults ? "yes" : "no") +
              "; CSV header exact: " + (header ? "yes" : "no") + "; round trip: " + (round_trip ? "yes" : "no") +
              "; Markdown mean row: " + (mean_row ? "yes" : "no")};
}

// 8. Training smoke test.
Outcome training() {
  BenchConfig cfg;
  cfg.source = "paddle";
  cfg.train = true;
  cfg.steps = 3000;
  cfg.repeats = 1;
  cfg.filters = {{8, 16}};
  const auto a = run_training_bench(cfg);
  const auto b = run_training_bench(cfg);
  bool valid = a.size() == 2 && a[0].mode == StepMode::full && a[1].mode == StepMode::reuse &&
               a[1].speedup_vs_full.has_value();
  bool finite = true, same = a.size() == b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    finite = finite && !a[i].diverged && !b[i].diverged && std::isfinite(a[i].mean_episode_return);
    valid = valid && a[i].mean_seconds > 0 && a[i].episodes > 0;
    same = same && a[i].output_digest == b[i].output_digest && a[i].macs_per_step == b[i].macs_per_step &&
           a[i].mean_changed_pixels == b[i].mean_changed_pixels && a[i].mean_rect_area == b[i].mean_rect_area &&
           a[i].episodes == b[i].episodes && a[i].mean_episode_return == b[i].mean_episode_return;
  }
  std::string detail = std::string("finite: ") + (finite ? "yes" : "no") + "; record pair valid: " +
                       (valid ? "yes" : "no") + "; rerun identical: " + (same ? "yes" : "no");
  if (a.size() == 2) {
    detail += "; " + std::to_string(a[0].episodes) + " episodes, mean return full " +
              fmt("%.3f", a[0].mean_episode_return) + " / reuse " + fmt("%.3f", a[1].mean_episode_return) +
              ", model time full " + fmt("%.2f s", a[0].mean_seconds) + " / reuse " + fmt("%.2f s", a[1].mean_seconds);
  }
  return {finite && valid && same, detail};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"1 equivalence", equivalence},         {"2 dilation geometry", dilation},
      {"3 small-change cost", small_change_cost}, {"4 full-change cost", full_change_cost},
      {"5 gradients", gradients},             {"6 change statistics", change_statistics},
      {"7 protocol", protocol},               {"8 training smoke", training},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
