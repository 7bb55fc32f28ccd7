#include "experiment/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace fnascent::experiment;
  CLI::App app{"Gradient ascent over the diffusion coefficient for convex fully nonlinear PDEs"};
  app.require_subcommand(1);

  CommandOptions options;
  std::uint64_t seed = 0;
  int max_iter = 0;
  std::string out;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", options.config_path, "experiment configuration (YAML)");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--out", out, "artifact directory (overrides the configured output)");
    sub->add_option("--max-iter", max_iter, "overrides ascent.max_iterations");
  };
  for (const char* name : {"run-merton", "run-stochvol", "solve-semilinear"}) {
    add_common(app.add_subcommand(name, std::string("run the ") + name + " experiment"), true);
  }
  auto* report = app.add_subcommand("report", "re-summarise an artifact directory");
  report->add_option("--out", out, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--seed")) options.seed = seed;
  if (given("--max-iter")) options.max_iter = max_iter;
  if (given("--out")) options.out = out;
  return run_command(sub->get_name(), options, std::cout, std::cerr);
}
