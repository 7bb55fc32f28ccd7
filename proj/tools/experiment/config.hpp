#pragma once

#include "fnascent/ascent.hpp"
#include "fnascent/bsde.hpp"
#include "fnascent/problems.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fnascent::experiment {

struct ProblemConfig {
  std::string kind;  // merton | stochvol | stochvol-leverage | heat
  std::vector<double> lambda;
  std::vector<double> kappa;
  std::vector<double> theta;
  std::vector<double> nu;
  std::vector<double> rho;
  double eta = 1.0;
  double horizon = 1.0;
  PremiumKind premium = PremiumKind::Linear;
  int dim = 1;             // heat only
  double diffusion = 0.5;  // heat only
};

/// Fixed-sigma solve for the solve-semilinear command.
struct SemilinearConfig {
  bool present = false;
  double sigma = 0.0;    // value of the free diffusion entries
  std::string terminal;  // quadratic | exponential; must match the problem
};

struct TestConfig {
  Vector region_lo;
  Vector region_hi;
  int points = 1000;
  std::vector<int> slices;  // time-step indices
  int slice_points = 41;
  int slice_axis = 0;
  std::vector<Vector> eval_points;  // (t, x_0, ..., x_{d-1})
  int sigma_points = 10;
  int residual_paths = 256;
};

struct ExperimentConfig {
  ProblemConfig problem;
  bsde::SolverConfig solver;
  bool drifted = false;
  bool warm_start = true;
  ascent::AscentConfig ascent;
  SemilinearConfig semilinear;
  TestConfig test;
  std::uint64_t seed = 0;
  std::string output = "runs/out";
  std::string source_name;  // file name used in error messages
  std::string source_text;  // verbatim config text

  int dim() const;
};

/// Parses and validates. Every error is a ConfigError whose message starts
/// with "<name>:<line>:<column>: ".
ExperimentConfig parse_config(const std::string& text, const std::string& name = "<config>");
ExperimentConfig load_config(const std::string& path);

ProblemPtr make_problem(const ProblemConfig& config);

/// Normalised echo with a stable key order.
nlohmann::ordered_json to_json(const ExperimentConfig& config);

}  // namespace fnascent::experiment
