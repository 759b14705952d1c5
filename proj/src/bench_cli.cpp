#include <charconv>

#include <CLI11.hpp>

#include "convreuse/bench.hpp"

namespace convreuse {
namespace {

int parse_positive(const std::string& s, const std::string& what) {
  int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || v < 1) {
    throw CLI::ValidationError(what, "expected a positive integer, got '" + s + "'");
  }
  return v;
}

FilterPair parse_filters(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--filters", "expected F1,F2, got '" + s + "'");
  return {parse_positive(s.substr(0, comma), "--filters"), parse_positive(s.substr(comma + 1), "--filters")};
}

DiffConfig parse_diff(const std::string& s) {
  DiffConfig d;
  if (s == "rect") return d;
  if (s.rfind("tiled:", 0) == 0) {
    d.strategy = DiffStrategy::tiled;
    d.tile = parse_positive(s.substr(6), "--diff");
    return d;
  }
  throw CLI::ValidationError("--diff", "expected rect or tiled:N, got '" + s + "'");
}

}  // namespace

CliResult parse_bench_args(int argc, const char* const* argv) {
  CliResult result;
  BenchConfig& cfg = result.config;

  CLI::App app{"Times full and incremental (reuse) inference or training of a small conv policy net."};
  app.name("convreuse_bench");

  std::string mode = "both";
  std::vector<std::string> filters;
  std::string diff = "rect";
  std::string format = "csv";

  app.add_option("--source", cfg.source, "sprite | paddle | noise | fullchange | static | pgm:<dir>")
      ->capture_default_str();
  app.add_option("--mode", mode, "full | reuse | both")
      ->check(CLI::IsMember({"full", "reuse", "both"}))
      ->capture_default_str();
  app.add_option("--steps", cfg.steps, "steps per run")->capture_default_str();
  app.add_option("--repeats", cfg.repeats, "timed runs per configuration")->capture_default_str();
  app.add_option("--filters", filters, "filter pair F1,F2 (repeatable; default 20,40 40,80 80,160)")
      ->delimiter('\0')
      ->take_all();
  app.add_option("--downsample", cfg.downsample, "downsample factor")
      ->check(CLI::IsMember({2, 4}))
      ->capture_default_str();
  app.add_option("--kernel", cfg.kernel, "conv kernel size (odd)")->capture_default_str();
  app.add_option("--diff", diff, "rect | tiled:N")->capture_default_str();
  app.add_flag("--train", cfg.train, "run the training bench (paddle source only)");
  app.add_option("--seed", cfg.seed, "seed for weights, sources and sampling")->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "discount (training)")->capture_default_str();
  app.add_option("--alpha", cfg.alpha, "learning rate (training)")->capture_default_str();
  app.add_option("--format", format, "csv | md")->check(CLI::IsMember({"csv", "md"}))->capture_default_str();
  app.add_option("--out", cfg.out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
    if (!filters.empty()) {
      cfg.filters.clear();
      for (const auto& f : filters) cfg.filters.push_back(parse_filters(f));
    }
    cfg.diff = parse_diff(diff);
    cfg.format = format == "md" ? TableFormat::md : TableFormat::csv;
    if (mode == "full") {
      cfg.modes = {StepMode::full};
    } else if (mode == "reuse") {
      cfg.modes = {StepMode::reuse};
    }
    cfg.validate();
  } catch (const CLI::CallForHelp&) {
    result.stop = true;
    result.exit_code = 0;
    result.message = app.help();
  } catch (const CLI::ParseError& e) {
    result.stop = true;
    result.exit_code = e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    result.message = e.what();
  } catch (const std::invalid_argument& e) {
    result.stop = true;
    result.exit_code = 2;
    result.message = e.what();
  }
  return result;
}

}  // namespace convreuse
