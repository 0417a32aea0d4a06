#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace swirl::cli;
  CLI::App app{"Switching inverse reinforcement learning over discrete state spaces", "swirl"};
  app.require_subcommand(1);

  RunOptions options;
  std::size_t workers = 0;
  std::string output;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "experiment config file")->required();
    sub->add_option("--workers", workers, "worker threads (default from config, else 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--output", output, "output directory (overrides the config)");
    sub->add_flag("--verbose", options.verbose, "progress messages on stderr");
  };
  auto* simulate = app.add_subcommand("simulate", "sample gridworld trajectories and ground truth");
  auto* fit = app.add_subcommand("fit", "multi-seed fits of every model in the grid");
  auto* evaluate = app.add_subcommand("evaluate", "metrics, comparison table, robustness sweep");
  auto* segment = app.add_subcommand("segment", "per-trajectory mode labels and posteriors");
  for (auto* sub : {simulate, fit, evaluate, segment}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (workers > 0) options.workers = workers;
  if (!output.empty()) options.output = output;

  try {
    if (simulate->parsed()) cmd_simulate(options);
    if (fit->parsed()) cmd_fit(options);
    if (evaluate->parsed()) cmd_evaluate(options);
    if (segment->parsed()) cmd_segment(options);
  } catch (...) {
    std::string message;
    const int rc = exit_code_for_current_exception(&message);
    std::cerr << "swirl: " << message << '\n';
    return rc;
  }
  return 0;
}
