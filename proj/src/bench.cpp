#include "convreuse/bench.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <span>
#include <sstream>

#include "convreuse/grad.hpp"

namespace convreuse {
namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * kFnvPrime;
  return h;
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> csv_split(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

template <typename Number>
Number parse_number(const std::string& s, const char* field, std::size_t line_no) {
  Number v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

struct Preprocessed {
  std::vector<Frame> frames;
  ChangeStats stats;
};

NetConfig bench_net(const BenchConfig& cfg, Dims input, FilterPair fp) {
  NetConfig net = NetConfig::make(input.rows, input.cols, fp.first, fp.second, cfg.kernel, kPaddleActions);
  net.diff = cfg.diff;
  return net;
}

void fill_speedups(std::vector<BenchRecord>& group) {
  const BenchRecord* full = nullptr;
  for (const auto& r : group) {
    if (r.mode == StepMode::full) full = &r;
  }
  if (!full) return;
  for (auto& r : group) {
    if (r.mode == StepMode::reuse && r.mean_seconds > 0) r.speedup_vs_full = full->mean_seconds / r.mean_seconds;
  }
}

}  // namespace

void BenchConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be at least 1");
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  if (modes.empty()) throw std::invalid_argument("at least one mode is required");
  if (filters.empty()) throw std::invalid_argument("at least one filter pair is required");
  for (const auto& f : filters) {
    if (f.first <= 0 || f.second <= 0) throw std::invalid_argument("filter counts must be positive");
  }
  if (downsample < 1) throw std::invalid_argument("downsample factor must be at least 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("kernel size must be positive and odd");
  if (diff.tile < 1) throw std::invalid_argument("diff tile must be at least 1");
  if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(alpha >= 0)) throw std::invalid_argument("alpha must be non-negative");
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::unique_ptr<FrameSource> make_source(const std::string& source, std::uint64_t seed) {
  if (source == "sprite") return std::make_unique<SpriteSource>(SpriteConfig{});
  if (source == "paddle") return std::make_unique<PaddleSource>(PaddleConfig{}, seed);
  const SpriteConfig sprite;
  if (source == "noise") return std::make_unique<NoisePatchSource>(sprite.rows, sprite.cols, 32, seed);
  if (source == "fullchange") return std::make_unique<FullChangeSource>(sprite.rows, sprite.cols, seed);
  if (source == "static") return std::make_unique<StaticSource>(sprite_frame(sprite, 0));
  if (source.rfind("pgm:", 0) == 0) {
    const std::string dir = source.substr(4);
    return std::make_unique<FrameListSource>(read_pgm_sequence(dir), source);
  }
  throw std::invalid_argument("unknown source '" + source + "' (expected sprite, paddle, noise, fullchange, static or pgm:<dir>)");
}

std::vector<Frame> bench_frames(const BenchConfig& cfg, long count) {
  auto source = make_source(cfg.source, cfg.seed);
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    auto f = source->next();
    if (!f) {
      throw SourceExhausted("source " + source->name() + " yielded " + std::to_string(i) + " frames, " +
                            std::to_string(count) + " needed");
    }
    frames.push_back(downsample(*f, cfg.downsample));
  }
  return frames;
}

std::vector<BenchRecord> run_inference_bench(const BenchConfig& cfg) {
  cfg.validate();
  return run_inference_bench(cfg, bench_frames(cfg, cfg.steps));
}

std::vector<BenchRecord> run_inference_bench(const BenchConfig& cfg, const std::vector<Frame>& all_frames) {
  cfg.validate();
  if (static_cast<long>(all_frames.size()) < cfg.steps) {
    throw SourceExhausted(std::to_string(all_frames.size()) + " frames supplied, " + std::to_string(cfg.steps) +
                          " needed");
  }
  const std::span<const Frame> frames(all_frames.data(), static_cast<std::size_t>(cfg.steps));
  const ChangeStats stats = change_stats(frames, cfg.diff.tile);
  const Dims input = frames.front().dims();

  std::vector<BenchRecord> records;
  for (const FilterPair& fp : cfg.filters) {
    const NetConfig net_cfg = bench_net(cfg, input, fp);
    const NetWeights<float> weights = init_weights<float>(net_cfg, cfg.seed);
    const std::size_t per_step = static_cast<std::size_t>(net_cfg.action_count);

    std::vector<BenchRecord> group;
    std::vector<float> reference;
    std::optional<StepMode> reference_mode;
    for (StepMode mode : cfg.modes) {
      BenchRecord rec;
      rec.source = cfg.source;
      rec.mode = mode;
      rec.filters1 = fp.first;
      rec.filters2 = fp.second;
      rec.downsample = cfg.downsample;
      rec.steps = cfg.steps;
      rec.mean_changed_pixels = stats.mean_changed_pixels;
      rec.mean_rect_area = stats.mean_bounding_rect_area;

      std::vector<float> probs(static_cast<std::size_t>(cfg.steps) * per_step);
      std::int64_t macs = 0;
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        CachedNet<float> net(net_cfg, weights);
        rec.run_seconds.push_back(time_loop(cfg.steps, [&](long i) {
          const Frame& f = frames[static_cast<std::size_t>(i)];
          StepOutput<float> out = mode == StepMode::full ? net.forward_full(f) : net.forward_reuse(f);
          std::memcpy(probs.data() + static_cast<std::size_t>(i) * per_step, out.probs.data(), per_step * sizeof(float));
        }));
        if (rep == 0) macs = net.mac_counter();
      }
      std::tie(rec.mean_seconds, rec.std_seconds) = mean_std(rec.run_seconds);
      rec.macs_per_step = static_cast<double>(macs) / static_cast<double>(cfg.steps);
      rec.output_digest = fnv1a(probs.data(), probs.size() * sizeof(float));

      if (reference_mode) {
        for (long i = 0; i < cfg.steps; ++i) {
          const std::size_t at = static_cast<std::size_t>(i) * per_step;
          if (std::memcmp(probs.data() + at, reference.data() + at, per_step * sizeof(float)) != 0) {
            throw VerificationError("filters " + std::to_string(fp.first) + "/" + std::to_string(fp.second) + ": " +
                                    to_string(mode) + " and " + to_string(*reference_mode) +
                                    " probabilities differ at step " + std::to_string(i));
          }
        }
      } else {
        reference = std::move(probs);
        reference_mode = mode;
      }
      group.push_back(std::move(rec));
    }
    fill_speedups(group);
    records.insert(records.end(), group.begin(), group.end());
  }
  return records;
}

std::vector<BenchRecord> run_training_bench(const BenchConfig& cfg) {
  cfg.validate();
  if (cfg.source != "paddle") throw std::invalid_argument("training needs an environment; use --source paddle");
  const PaddleConfig env_cfg;
  const Dims input = downsample(PaddleEnv(env_cfg, cfg.seed).render(), cfg.downsample).dims();

  std::vector<BenchRecord> records;
  for (const FilterPair& fp : cfg.filters) {
    const NetConfig net_cfg = bench_net(cfg, input, fp);
    const NetWeights<float> weights = init_weights<float>(net_cfg, cfg.seed);

    std::vector<BenchRecord> group;
    for (StepMode mode : cfg.modes) {
      BenchRecord rec;
      rec.source = cfg.source;
      rec.mode = mode;
      rec.filters1 = fp.first;
      rec.filters2 = fp.second;
      rec.downsample = cfg.downsample;
      rec.steps = cfg.steps;

      for (int rep = 0; rep < cfg.repeats; ++rep) {
        CachedNet<float> net(net_cfg, weights);
        PaddleEnv env(env_cfg, cfg.seed + 1);
        TrainConfig tcfg;
        tcfg.gamma = cfg.gamma;
        tcfg.alpha = cfg.alpha;
        tcfg.steps = cfg.steps;
        tcfg.seed = cfg.seed + 2;
        tcfg.mode = mode;
        tcfg.downsample = cfg.downsample;
        ReinforceTrainer<float> trainer(net, env, tcfg);

        const bool first = rep == 0;
        std::vector<Frame> observed;
        std::vector<int> actions;
        std::int64_t macs = 0;
        double returns = 0;
        if (first) observed.push_back(trainer.observation());
        try {
          for (long i = 0; i < cfg.steps; ++i) {
            const TrainStepResult r = trainer.step();
            if (!first) continue;
            actions.push_back(r.action);
            macs += r.macs;
            observed.push_back(trainer.observation());
            if (r.done) returns += trainer.last_episode()->episode_return;
          }
        } catch (const DivergenceError&) {
          rec.diverged = true;
        }
        rec.run_seconds.push_back(trainer.model_seconds());
        if (first) {
          observed.pop_back();  // the observation after the final step is never fed to the model
          const ChangeStats stats = change_stats(observed, cfg.diff.tile);
          rec.mean_changed_pixels = stats.mean_changed_pixels;
          rec.mean_rect_area = stats.mean_bounding_rect_area;
          rec.macs_per_step = static_cast<double>(macs) / static_cast<double>(cfg.steps);
          rec.output_digest = fnv1a(actions.data(), actions.size() * sizeof(int));
          rec.episodes = trainer.episodes();
          rec.mean_episode_return = rec.episodes > 0 ? returns / static_cast<double>(rec.episodes) : 0.0;
        }
      }
      std::tie(rec.mean_seconds, rec.std_seconds) = mean_std(rec.run_seconds);
      group.push_back(std::move(rec));
    }
    fill_speedups(group);
    records.insert(records.end(), group.begin(), group.end());
  }
  return records;
}

std::string emit_table(const std::vector<BenchRecord>& records, TableFormat format) {
  if (records.empty()) throw std::invalid_argument("no benchmark records to emit");
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
      out << csv_quote(r.source) << ',' << to_string(r.mode) << ',' << r.filters1 << ',' << r.filters2 << ','
          << r.downsample << ',' << r.steps << ',' << shortest(r.mean_seconds) << ',' << shortest(r.std_seconds) << ','
          << shortest(r.mean_changed_pixels) << ',' << shortest(r.mean_rect_area) << ',' << shortest(r.macs_per_step)
          << ',' << (r.speedup_vs_full ? shortest(*r.speedup_vs_full) : "") << '\n';
    }
    return out.str();
  }

  // One table per (filters, downsample, steps), sources as rows and modes as
  // columns, closed by a mean row.
  struct Key {
    int f1, f2, ds;
    long steps;
    auto operator<=>(const Key&) const = default;
  };
  std::vector<Key> order;
  std::map<Key, std::vector<const BenchRecord*>> groups;
  for (const auto& r : records) {
    const Key k{r.filters1, r.filters2, r.downsample, r.steps};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }

  out << "Times are mean wall-clock seconds per run for the model step only; frame generation and "
         "preprocessing are excluded.\n";
  for (const Key& k : order) {
    std::vector<std::string> sources;
    std::map<std::string, std::map<StepMode, double>> cells;
    for (const BenchRecord* r : groups[k]) {
      if (!cells.count(r->source)) sources.push_back(r->source);
      cells[r->source][r->mode] = r->mean_seconds;
    }
    out << "\n### filters " << k.f1 << '/' << k.f2 << ", downsample " << k.ds << ", " << k.steps << " steps\n\n";
    out << "| source | full | reuse |\n|---|---:|---:|\n";
    std::map<StepMode, std::pair<double, int>> sums;
    for (const auto& s : sources) {
      out << "| " << s;
      for (StepMode m : {StepMode::full, StepMode::reuse}) {
        auto it = cells[s].find(m);
        if (it == cells[s].end()) {
          out << " | ";
        } else {
          out << " | " << fixed1(it->second);
          sums[m].first += it->second;
          sums[m].second += 1;
        }
      }
      out << " |\n";
    }
    out << "| Mean";
    for (StepMode m : {StepMode::full, StepMode::reuse}) {
      auto it = sums.find(m);
      out << " | " << (it == sums.end() ? "" : fixed1(it->second.first / it->second.second));
    }
    out << " |\n";
  }
  return out.str();
}

std::vector<BenchRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::invalid_argument("CSV header mismatch");
  std::vector<BenchRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_split(line, line_no);
    if (f.size() != 12) {
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected 12 fields, got " +
                                  std::to_string(f.size()));
    }
    BenchRecord r;
    r.source = f[0];
    if (f[1] == "full") {
      r.mode = StepMode::full;
    } else if (f[1] == "reuse") {
      r.mode = StepMode::reuse;
    } else {
      throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": unknown mode '" + f[1] + "'");
    }
    r.filters1 = parse_number<int>(f[2], "filters1", line_no);
    r.filters2 = parse_number<int>(f[3], "filters2", line_no);
    r.downsample = parse_number<int>(f[4], "downsample", line_no);
    r.steps = parse_number<long>(f[5], "steps", line_no);
    r.mean_seconds = parse_number<double>(f[6], "mean_seconds", line_no);
    r.std_seconds = parse_number<double>(f[7], "std_seconds", line_no);
    r.mean_changed_pixels = parse_number<double>(f[8], "mean_changed_pixels", line_no);
    r.mean_rect_area = parse_number<double>(f[9], "mean_rect_area", line_no);
    r.macs_per_step = parse_number<double>(f[10], "macs_per_step", line_no);
    if (!f[11].empty()) r.speedup_vs_full = parse_number<double>(f[11], "speedup_vs_full", line_no);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace convreuse
