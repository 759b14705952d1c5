#include "convreuse/frames.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "convreuse/region.hpp"

namespace convreuse {
namespace {

int wrap(long v, int n) {
  long m = v % n;
  return static_cast<int>(m < 0 ? m + n : m);
}

}  // namespace

Frame to_grayscale(int rows, int cols, std::span<const std::uint8_t> red, std::span<const std::uint8_t> green,
                   std::span<const std::uint8_t> blue) {
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rows <= 0 || cols <= 0 || red.size() != n || green.size() != n || blue.size() != n) {
    throw ShapeError("grayscale conversion needs three " + to_string(Dims{rows, cols}) + " planes");
  }
  std::vector<std::uint8_t> gray(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int weighted = 299 * red[i] + 587 * green[i] + 114 * blue[i];
    gray[i] = static_cast<std::uint8_t>(std::min(255, (weighted + 500) / 1000));
  }
  return Frame(rows, cols, std::move(gray));
}

Frame downsample(const Frame& f, int factor) {
  if (factor < 1) throw ShapeError("downsample factor must be at least 1, got " + std::to_string(factor));
  if (factor > f.rows() || factor > f.cols()) {
    throw ShapeError("downsample factor " + std::to_string(factor) + " exceeds frame " + to_string(f.dims()));
  }
  if (factor == 1) return f;
  const int rows = f.rows() / factor;
  const int cols = f.cols() / factor;
  const int block = factor * factor;
  Frame out(rows, cols);
  std::vector<int> sums(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    std::fill(sums.begin(), sums.end(), 0);
    for (int dr = 0; dr < factor; ++dr) {
      auto src = f.row(r * factor + dr);
      for (int c = 0; c < cols * factor; ++c) sums[c / factor] += src[c];
    }
    auto dst = out.row(r);
    for (int c = 0; c < cols; ++c) dst[c] = static_cast<std::uint8_t>((sums[c] + block / 2) / block);
  }
  return out;
}

// ---------------------------------------------------------------------------

Frame sprite_frame(const SpriteConfig& cfg, long t) {
  if (t < 0) throw std::invalid_argument("sprite step index must be non-negative");
  Frame f(cfg.rows, cfg.cols, cfg.background);
  const int top = wrap(cfg.start_row + t * cfg.velocity_rows, cfg.rows);
  const int left = wrap(cfg.start_col + t * cfg.velocity_cols, cfg.cols);
  for (int i = 0; i < cfg.sprite_rows; ++i) {
    auto row = f.row((top + i) % cfg.rows);
    for (int j = 0; j < cfg.sprite_cols; ++j) row[(left + j) % cfg.cols] = cfg.sprite_intensity;
  }
  return f;
}

SpriteSource::SpriteSource(SpriteConfig cfg) : cfg_(cfg) {
  if (cfg.rows <= 0 || cfg.cols <= 0 || cfg.sprite_rows <= 0 || cfg.sprite_cols <= 0 || cfg.sprite_rows > cfg.rows ||
      cfg.sprite_cols > cfg.cols) {
    throw ShapeError("sprite must be non-empty and fit inside the frame");
  }
  if (cfg.sprite_intensity == cfg.background) throw std::invalid_argument("sprite intensity equals background");
}

// ---------------------------------------------------------------------------

PaddleEnv::PaddleEnv(PaddleConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  if (cfg.grid_rows < 2 || cfg.grid_cols < 1 || cfg.cell < 1 || cfg.paddle_width < 1 ||
      cfg.paddle_width > cfg.grid_cols || cfg.fall_rate < 1) {
    throw ShapeError("invalid paddle environment configuration");
  }
  state_.paddle_col = (cfg.grid_cols - cfg.paddle_width) / 2;
  respawn();
}

PaddleEnv::PaddleEnv(PaddleConfig cfg, PaddleEnvState state, std::uint64_t seed) : PaddleEnv(cfg, seed) {
  if (state.ball_row < 0 || state.ball_row >= cfg.grid_rows - 1 || state.ball_col < 0 ||
      state.ball_col >= cfg.grid_cols || state.paddle_col < 0 || state.paddle_col > cfg.grid_cols - cfg.paddle_width) {
    throw BoundsError("paddle environment state out of bounds");
  }
  state_ = state;
}

void PaddleEnv::respawn() {
  state_.ball_row = 0;
  state_.ball_col = rng_.below(cfg_.grid_cols);
}

PaddleStep PaddleEnv::step(PaddleAction action) {
  const int move = static_cast<int>(action) - 1;
  state_.paddle_col = std::clamp(state_.paddle_col + move, 0, cfg_.grid_cols - cfg_.paddle_width);
  state_.ball_row += cfg_.fall_rate;

  PaddleStep out;
  if (state_.ball_row >= cfg_.grid_rows - 1) {
    const bool caught =
        state_.ball_col >= state_.paddle_col && state_.ball_col < state_.paddle_col + cfg_.paddle_width;
    out.reward = caught ? 1.0 : -1.0;
    out.done = true;
    (caught ? state_.catches : state_.misses)++;
    state_.total_reward += out.reward;
    respawn();
  }
  out.frame = render();
  return out;
}

Frame PaddleEnv::render() const {
  Frame f(frame_rows(), frame_cols(), cfg_.background);
  auto fill_cell = [&](int gr, int gc, std::uint8_t v) {
    for (int r = gr * cfg_.cell; r < (gr + 1) * cfg_.cell; ++r) {
      auto row = f.row(r);
      std::fill(row.begin() + gc * cfg_.cell, row.begin() + (gc + 1) * cfg_.cell, v);
    }
  };
  for (int c = 0; c < cfg_.paddle_width; ++c) fill_cell(cfg_.grid_rows - 1, state_.paddle_col + c, cfg_.paddle_intensity);
  fill_cell(state_.ball_row, state_.ball_col, cfg_.ball_intensity);
  return f;
}

PaddleSource::PaddleSource(PaddleConfig cfg, std::uint64_t seed) : env_(cfg, seed), actions_(seed ^ 0x9e3779b97f4a7c15ULL) {}

std::optional<Frame> PaddleSource::next() {
  if (!started_) {
    started_ = true;
    return env_.render();
  }
  return env_.step(static_cast<PaddleAction>(actions_.below(kPaddleActions))).frame;
}

NoisePatchSource::NoisePatchSource(int rows, int cols, int max_patch, std::uint64_t seed)
    : frame_(rows, cols, 0), max_patch_(max_patch), rng_(seed) {
  if (max_patch < 1) throw ShapeError("noise patch size must be at least 1");
}

std::optional<Frame> NoisePatchSource::next() {
  if (!started_) {
    started_ = true;
    return frame_;
  }
  const int h = 1 + rng_.below(std::min(max_patch_, frame_.rows()));
  const int w = 1 + rng_.below(std::min(max_patch_, frame_.cols()));
  const int top = rng_.below(frame_.rows() - h + 1);
  const int left = rng_.below(frame_.cols() - w + 1);
  for (int r = top; r < top + h; ++r) {
    auto row = frame_.row(r);
    for (int c = left; c < left + w; ++c) row[c] = static_cast<std::uint8_t>(rng_.below(256));
  }
  return frame_;
}

FullChangeSource::FullChangeSource(int rows, int cols, std::uint64_t seed) : base_(rows, cols) {
  Rng rng(seed);
  for (int r = 0; r < rows; ++r) {
    for (auto& px : base_.row(r)) px = static_cast<std::uint8_t>(rng.below(256));
  }
}

std::optional<Frame> FullChangeSource::next() {
  Frame f = base_;
  const int shift = static_cast<int>(t_++ % 256);
  for (int r = 0; r < f.rows(); ++r) {
    for (auto& px : f.row(r)) px = static_cast<std::uint8_t>((px + shift) % 256);
  }
  return f;
}

std::optional<Frame> FrameListSource::next() {
  if (pos_ >= frames_.size()) return std::nullopt;
  return frames_[pos_++];
}

// ---------------------------------------------------------------------------

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& bytes, const std::string& file) : bytes_(bytes), file_(file) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int read_int(const char* field) {
    skip_space_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) fail(std::string(field) + " is too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(std::string("missing ") + field);
    return static_cast<int>(value);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw PgmError(PgmError::Kind::malformed_header, file_ + ": malformed PGM header: " + why);
  }

  std::size_t pos_ = 0;

 private:
  const std::vector<char>& bytes_;
  const std::string& file_;
};

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError(PgmError::Kind::io, name + ": cannot open");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  HeaderReader h(bytes, name);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') h.fail("expected magic P5");
  h.pos_ = 2;
  const int cols = h.read_int("width");
  const int rows = h.read_int("height");
  const int maxval = h.read_int("maxval");
  if (rows <= 0 || cols <= 0) h.fail("zero dimension");
  if (maxval != 255) {
    throw PgmError(PgmError::Kind::unsupported_maxval, name + ": maxval " + std::to_string(maxval) + " is not 255");
  }
  if (h.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[h.pos_]))) {
    h.fail("expected a single whitespace byte after maxval");
  }
  ++h.pos_;
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (bytes.size() - h.pos_ < n) {
    throw PgmError(PgmError::Kind::truncated, name + ": expected " + std::to_string(n) + " pixel bytes, found " +
                                                  std::to_string(bytes.size() - h.pos_));
  }
  std::vector<std::uint8_t> pixels(n);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + h.pos_), n, pixels.begin());
  return Frame(rows, cols, std::move(pixels));
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PgmError(PgmError::Kind::io, path.string() + ": cannot open for writing");
  out << "P5\n" << frame.cols() << ' ' << frame.rows() << "\n255\n";
  auto px = frame.pixels();
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw PgmError(PgmError::Kind::io, path.string() + ": write failed");
}

std::vector<Frame> read_pgm_sequence(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw PgmError(PgmError::Kind::io, dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  if (files.empty()) throw PgmError(PgmError::Kind::empty_source, dir.string() + ": no .pgm files");
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  std::vector<Frame> frames;
  frames.reserve(files.size());
  for (const auto& file : files) {
    Frame f = read_pgm(file);
    if (!frames.empty() && f.dims() != frames.front().dims()) {
      throw PgmError(PgmError::Kind::dims_drift, file.string() + ": frame is " + to_string(f.dims()) +
                                                     " but the sequence started at " +
                                                     to_string(frames.front().dims()));
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

// ---------------------------------------------------------------------------

namespace {

class ChangeAccumulator {
 public:
  explicit ChangeAccumulator(int tile) : tile_(tile) {}

  void add(const Frame& a, const Frame& b) {
    if (a.dims() != b.dims()) throw ShapeError("change statistics need frames of one size");
    auto pa = a.pixels();
    auto pb = b.pixels();
    long count = 0;
    for (std::size_t j = 0; j < pa.size(); ++j) count += pa[j] != pb[j];
    changed_ += static_cast<double>(count);
    if (auto box = diff_bounding_rect(a, b)) rect_ += static_cast<double>(box->area());
    tiled_ += static_cast<double>(diff_tiled_bounded(a, b, tile_).area());
    ++pairs_;
  }

  ChangeStats finish(long frames) const {
    ChangeStats stats;
    stats.frames_observed = frames;
    if (pairs_ == 0) return stats;
    const double n = static_cast<double>(pairs_);
    stats.mean_changed_pixels = changed_ / n;
    stats.mean_bounding_rect_area = rect_ / n;
    stats.mean_tiled_area = tiled_ / n;
    return stats;
  }

 private:
  int tile_;
  long pairs_ = 0;
  double changed_ = 0;
  double rect_ = 0;
  double tiled_ = 0;
};

}  // namespace

ChangeStats change_stats(std::span<const Frame> frames, int tile) {
  ChangeAccumulator acc(tile);
  for (std::size_t i = 1; i < frames.size(); ++i) acc.add(frames[i - 1], frames[i]);
  return acc.finish(static_cast<long>(frames.size()));
}

ChangeStats change_stats(FrameSource& source, long n_frames, int tile) {
  ChangeAccumulator acc(tile);
  std::optional<Frame> prev;
  for (long i = 0; i < n_frames; ++i) {
    auto f = source.next();
    if (!f) {
      throw SourceExhausted(source.name() + " ran out after " + std::to_string(i) + " of " + std::to_string(n_frames) +
                            " frames");
    }
    if (prev) acc.add(*prev, *f);
    prev = std::move(f);
  }
  return acc.finish(n_frames);
}

}  // namespace convreuse
