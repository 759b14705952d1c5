#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "convreuse/engine.hpp"
#include "convreuse/frames.hpp"

namespace convreuse {

enum class TableFormat { csv, md };

struct FilterPair {
  int first = 20;
  int second = 40;
  bool operator==(const FilterPair&) const = default;
};

struct BenchConfig {
  std::string source = "sprite";  // sprite | paddle | noise | fullchange | static | pgm:<dir>
  std::vector<StepMode> modes{StepMode::full, StepMode::reuse};
  long steps = 3000;
  int repeats = 10;
  std::vector<FilterPair> filters{{20, 40}, {40, 80}, {80, 160}};
  int downsample = 4;
  int kernel = 3;
  DiffConfig diff;
  std::uint64_t seed = 1;
  bool train = false;
  double gamma = 0.99;
  double alpha = 1e-3;
  TableFormat format = TableFormat::csv;
  std::string out_path;  // empty: stdout

  void validate() const;
};

/// One row of the report. The CSV carries the first twelve fields; the rest
/// are diagnostics kept in memory.
struct BenchRecord {
  std::string source;
  StepMode mode = StepMode::full;
  int filters1 = 0;
  int filters2 = 0;
  int downsample = 0;
  long steps = 0;
  double mean_seconds = 0;
  double std_seconds = 0;
  double mean_changed_pixels = 0;
  double mean_rect_area = 0;
  double macs_per_step = 0;
  std::optional<double> speedup_vs_full;  // reuse rows with a matching full row

  std::vector<double> run_seconds;
  std::uint64_t output_digest = 0;  // hash of per-step probabilities (inference) or actions (training)
  double mean_episode_return = 0;
  long episodes = 0;
  bool diverged = false;
};

class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wall-clock seconds for `n` calls of `step(i)` on a monotonic clock.
template <typename Step>
double time_loop(long n, Step&& step) {
  const auto t0 = std::chrono::steady_clock::now();
  for (long i = 0; i < n; ++i) step(i);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Preprocessed (downsampled) frames for the inference bench.
std::vector<Frame> bench_frames(const BenchConfig& cfg, long count);

std::unique_ptr<FrameSource> make_source(const std::string& source, std::uint64_t seed);

/// Times the forward pass per (filter pair, mode). Frames are generated and
/// preprocessed up front; every repeat starts from a cold net with the same
/// seeded weights. When both modes run, per-step probabilities must match
/// bitwise or VerificationError is thrown.
std::vector<BenchRecord> run_inference_bench(const BenchConfig& cfg);

/// Same protocol over caller-supplied, already preprocessed frames (at least
/// cfg.steps of them, one size). cfg.source only labels the records.
std::vector<BenchRecord> run_inference_bench(const BenchConfig& cfg, const std::vector<Frame>& frames);

/// Times forward + backward + REINFORCE update per step on the paddle env.
/// Environment stepping and preprocessing are excluded from the timing.
std::vector<BenchRecord> run_training_bench(const BenchConfig& cfg);

inline constexpr const char* kCsvHeader =
    "source,mode,filters1,filters2,downsample,steps,mean_seconds,std_seconds,mean_changed_pixels,mean_rect_area,"
    "macs_per_step,speedup_vs_full";

std::string emit_table(const std::vector<BenchRecord>& records, TableFormat format);
std::vector<BenchRecord> parse_csv(const std::string& text);

/// mean and sample standard deviation (n - 1; zero for one sample).
std::pair<double, double> mean_std(const std::vector<double>& xs);

// Command line -------------------------------------------------------------

struct CliResult {
  BenchConfig config;
  bool stop = false;  // help requested or bad arguments; exit with exit_code
  int exit_code = 0;
  std::string message;
};

CliResult parse_bench_args(int argc, const char* const* argv);

}  // namespace convreuse
