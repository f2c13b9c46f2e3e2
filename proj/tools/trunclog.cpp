// trunclog <command> --config file.json [--out dir] [--seed N] [--steps N]
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "trunclog/experiments.hpp"

namespace {

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

int run(const std::string& command, const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
        std::optional<int> steps) {
  using namespace trunclog;
  try {
    ExperimentConfig cfg = config.empty() ? config_from_json(json::object()) : load_config(config);
    if (seed) cfg.seed = *seed;
    if (steps) {
      if (*steps < 1) throw ConfigError("--steps must be >= 1");
      cfg.steps_per_unit = *steps;
    }
    const Report r = run_command(command, cfg);
    std::filesystem::create_directories(out);
    write_report(r, out);
    for (const auto& c : r.checks)
      std::cout << (c.passed ? "[pass] " : "[FAIL] ") << c.name << " = " << format_double(c.value)
                << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
    if (r.convergence && r.convergence->fit)
      std::cout << "slope " << format_double(r.convergence->fit->slope) << " over " << r.convergence->fit->used << " points\n";
    std::cout << r.command << ": " << (r.passed() ? "PASS" : "FAIL") << "  -> " << out << "/" << r.command << ".json\n";
    return r.passed() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated Magnus logarithms: identity checks and order experiments"};
  app.require_subcommand(1);
  std::string config, out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::string chosen;
  for (const auto& name : trunclog::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--steps", steps, "override RK4 steps per unit time");
    sub->callback([&chosen, name] { chosen = name; });
  }
  app.footer("commands: " + join(trunclog::command_names(), ", "));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run(chosen, config, out, seed, steps);
}
