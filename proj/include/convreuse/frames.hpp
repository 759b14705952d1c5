#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convreuse/frame.hpp"
#include "convreuse/random.hpp"

namespace convreuse {

// ---------------------------------------------------------------------------
// Preprocessing

/// round(0.299 R + 0.587 G + 0.114 B) per pixel, computed in exact integer
/// arithmetic (ties round up).
Frame to_grayscale(int rows, int cols, std::span<const std::uint8_t> red, std::span<const std::uint8_t> green,
                   std::span<const std::uint8_t> blue);

/// Block mean over factor x factor blocks, rounded half up. Trailing rows and
/// columns that do not fill a block are dropped.
Frame downsample(const Frame& f, int factor);

// ---------------------------------------------------------------------------
// Sources

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // nullopt once the source is exhausted.
  virtual std::optional<Frame> next() = 0;
  virtual std::string name() const = 0;
};

struct SpriteConfig {
  int rows = 208;
  int cols = 160;
  int sprite_rows = 8;
  int sprite_cols = 8;
  int velocity_rows = 0;
  int velocity_cols = 4;
  std::uint8_t sprite_intensity = 255;
  std::uint8_t background = 0;
  int start_row = 100;
  int start_col = 40;
};

/// Frame t of a sprite moving at constant velocity, wrapping at every edge.
Frame sprite_frame(const SpriteConfig& cfg, long t);

class SpriteSource : public FrameSource {
 public:
  explicit SpriteSource(SpriteConfig cfg);
  std::optional<Frame> next() override { return sprite_frame(cfg_, t_++); }
  std::string name() const override { return "sprite"; }

 private:
  SpriteConfig cfg_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Paddle-catch environment: a ball falls one cell per step toward a paddle on
// the bottom row. The game lives on a coarse grid; each cell renders as a
// cell x cell pixel square.

enum class PaddleAction { left = 0, stay = 1, right = 2 };
inline constexpr int kPaddleActions = 3;

struct PaddleConfig {
  int grid_rows = 52;
  int grid_cols = 40;
  int cell = 4;
  int paddle_width = 5;
  int fall_rate = 1;
  std::uint8_t ball_intensity = 255;
  std::uint8_t paddle_intensity = 128;
  std::uint8_t background = 0;
};

struct PaddleEnvState {
  int ball_row = 0;
  int ball_col = 0;
  int paddle_col = 0;  // leftmost grid column of the paddle
  int catches = 0;
  int misses = 0;
  double total_reward = 0;
};

struct PaddleStep {
  Frame frame;
  double reward = 0;
  bool done = false;
};

class PaddleEnv {
 public:
  PaddleEnv(PaddleConfig cfg, std::uint64_t seed);
  PaddleEnv(PaddleConfig cfg, PaddleEnvState state, std::uint64_t seed);

  // Paddle moves one column (clamped), ball falls. When the ball reaches
  // the paddle row the episode ends with +1 (caught) or -1 (missed) and the
  // ball respawns at the top; the returned frame shows the respawned state.
  PaddleStep step(PaddleAction action);

  Frame render() const;
  const PaddleEnvState& state() const { return state_; }
  const PaddleConfig& config() const { return cfg_; }
  int frame_rows() const { return cfg_.grid_rows * cfg_.cell; }
  int frame_cols() const { return cfg_.grid_cols * cfg_.cell; }

 private:
  void respawn();

  PaddleConfig cfg_;
  PaddleEnvState state_;
  Rng rng_;
};

/// Paddle env driven by uniformly random actions.
class PaddleSource : public FrameSource {
 public:
  PaddleSource(PaddleConfig cfg, std::uint64_t seed);
  std::optional<Frame> next() override;
  std::string name() const override { return "paddle"; }

 private:
  PaddleEnv env_;
  Rng actions_;
  bool started_ = false;
};

/// Same frame forever.
class StaticSource : public FrameSource {
 public:
  explicit StaticSource(Frame frame) : frame_(std::move(frame)) {}
  std::optional<Frame> next() override { return frame_; }
  std::string name() const override { return "static"; }

 private:
  Frame frame_;
};

/// Each step overwrites one randomly placed rectangle with random pixels.
class NoisePatchSource : public FrameSource {
 public:
  NoisePatchSource(int rows, int cols, int max_patch, std::uint64_t seed);
  std::optional<Frame> next() override;
  std::string name() const override { return "noise"; }

 private:
  Frame frame_;
  int max_patch_;
  Rng rng_;
  bool started_ = false;
};

/// Every pixel changes on every step.
class FullChangeSource : public FrameSource {
 public:
  FullChangeSource(int rows, int cols, std::uint64_t seed);
  std::optional<Frame> next() override;
  std::string name() const override { return "fullchange"; }

 private:
  Frame base_;
  long t_ = 0;
};

/// Replays a fixed list of frames once.
class FrameListSource : public FrameSource {
 public:
  FrameListSource(std::vector<Frame> frames, std::string name)
      : frames_(std::move(frames)), name_(std::move(name)) {}
  std::optional<Frame> next() override;
  std::string name() const override { return name_; }

 private:
  std::vector<Frame> frames_;
  std::string name_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

class PgmError : public std::runtime_error {
 public:
  enum class Kind { io, malformed_header, unsupported_maxval, truncated, dims_drift, empty_source };

  PgmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

/// Every *.pgm file in `dir`, in lexicographic filename order. All frames
/// must share one size.
std::vector<Frame> read_pgm_sequence(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Change statistics

struct ChangeStats {
  long frames_observed = 0;
  double mean_changed_pixels = 0;
  double mean_bounding_rect_area = 0;
  double mean_tiled_area = 0;
};

class SourceExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step means over the n_frames - 1 consecutive pairs of the next
/// n_frames frames. Tiled area is diff_tiled_bounded's, so
/// changed <= tiled <= bounding rect <= frame area.
ChangeStats change_stats(FrameSource& source, long n_frames, int tile);
ChangeStats change_stats(std::span<const Frame> frames, int tile);

}  // namespace convreuse
