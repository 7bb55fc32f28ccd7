#include "runner.hpp"

#include "fnascent/parallel.hpp"
#include "fnascent/residual.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace fnascent::experiment {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class IoError : public Error {
 public:
  using Error::Error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

json vec_json(const Vector& v) {
  auto a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string iteration_dir_name(int m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%02d", m);
  return buf;
}

std::string slice_file_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slice_t%02d.csv", step);
  return buf;
}

/// Oracle of the fully nonlinear problem, or null.
FieldPtr try_oracle(const Problem& problem) {
  try {
    return problem.oracle();
  } catch (const NoOracleError&) {
    return nullptr;
  }
}

FieldPtr try_semilinear_oracle(const Problem& problem, const DiffusionField& sigma) {
  try {
    return problem.semilinear_oracle(sigma);
  } catch (const NoOracleError&) {
    return nullptr;
  }
}

bool has_optimal_sigma(const Problem& problem) {
  try {
    (void)problem.optimal_sigma(0.0, Vector::Zero(problem.dim()));
    return true;
  } catch (const NoOracleError&) {
    return false;
  }
}

Vector region_mid(const ExperimentConfig& c) { return 0.5 * (c.test.region_lo + c.test.region_hi); }

/// Points on the slice line at time step n: the axis coordinate sweeps the
/// region, the others sit at the region midpoint.
std::vector<Vector> slice_line(const ExperimentConfig& c) {
  std::vector<Vector> xs;
  const int axis = c.test.slice_axis;
  const int n = c.test.slice_points;
  for (int i = 0; i < n; ++i) {
    Vector x = region_mid(c);
    const double u = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    x(axis) = c.test.region_lo(axis) + u * (c.test.region_hi(axis) - c.test.region_lo(axis));
    xs.push_back(x);
  }
  return xs;
}

residual::TestPoints test_points(const ExperimentConfig& c) {
  return residual::uniform_points(c.problem.horizon, c.test.region_lo, c.test.region_hi,
                                  c.test.points, c.seed ^ 0x7e57ULL);
}

void write_slices(const fs::path& dir, const ExperimentConfig& c, const FieldEstimate& field,
                  const FieldEstimate* oracle, const DiffusionField& sigma, const Problem& problem,
                  bool with_sigma_star) {
  if (c.test.slices.empty()) return;
  fs::create_directories(dir);
  const auto free = sigma.free_entries();
  const double dt = c.solver.grid.horizon / c.solver.grid.steps;
  const auto line = slice_line(c);
  for (int step : c.test.slices) {
    const double t = step * dt;
    auto out = open_out(dir / slice_file_name(step));
    out << "t,x,v_hat,v_oracle";
    if (!free.empty()) {
      out << ",sigma_hat";
      if (with_sigma_star) out << ",sigma_star";
    }
    out << '\n';
    for (const Vector& x : line) {
      out << format_real(t) << ',' << format_real(x(c.test.slice_axis)) << ','
          << format_real(field.value(t, x)) << ','
          << format_real(oracle ? oracle->value(t, x) : kNaN);
      if (!free.empty()) {
        const auto [r, k] = free.front();
        out << ',' << format_real(sigma(t, x)(r, k));
        if (with_sigma_star) out << ',' << format_real(problem.optimal_sigma(t, x)(r, k));
      }
      out << '\n';
    }
  }
}

json pointwise_json(const ExperimentConfig& c, const FieldEstimate& field, const FieldEstimate* oracle) {
  auto a = json::array();
  const int d = c.dim();
  for (const Vector& e : c.test.eval_points) {
    const double t = e(0);
    const Vector x = e.tail(d);
    const double v_hat = field.value(t, x);
    const double v = oracle ? oracle->value(t, x) : kNaN;
    json p;
    p["t"] = t;
    p["x"] = vec_json(x);
    p["v_hat"] = number_or_null(v_hat);
    p["v_oracle"] = number_or_null(v);
    p["abs_error"] = number_or_null(std::abs(v_hat - v));
    a.push_back(std::move(p));
  }
  return a;
}

/// sup over the slice grid at every time step and the test points of the
/// largest free-entry deviation from sigma*, plus relative errors at sampled
/// points.
json sigma_check_json(const ExperimentConfig& c, const Problem& problem, const DiffusionField& sigma) {
  const auto free = sigma.free_entries();
  if (free.empty() || !has_optimal_sigma(problem)) return nullptr;
  auto deviation = [&](double t, const Vector& x) {
    const Matrix s = sigma(t, x);
    const Matrix star = problem.optimal_sigma(t, x);
    double worst = 0.0;
    for (const auto& [r, k] : free) worst = std::max(worst, std::abs(s(r, k) - star(r, k)));
    return worst;
  };
  double sup = 0.0;
  const auto line = slice_line(c);
  const double dt = c.solver.grid.horizon / c.solver.grid.steps;
  for (int n = 0; n <= c.solver.grid.steps; ++n) {
    for (const Vector& x : line) sup = std::max(sup, deviation(n * dt, x));
  }
  const auto pts = test_points(c);
  for (std::size_t i = 0; i < pts.size(); ++i) sup = std::max(sup, deviation(pts.t[i], pts.x.col(i)));

  const auto sampled = residual::uniform_points(c.problem.horizon, c.test.region_lo, c.test.region_hi,
                                                c.test.sigma_points, c.seed ^ 0x5167ULL);
  auto points = json::array();
  double worst_rel = 0.0;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const double t = sampled.t[i];
    const Vector x = sampled.x.col(i);
    const Matrix s = sigma(t, x);
    const Matrix star = problem.optimal_sigma(t, x);
    Vector hat(static_cast<Eigen::Index>(free.size())), opt(hat.size());
    double rel = 0.0;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const auto [r, col] = free[k];
      hat(static_cast<Eigen::Index>(k)) = s(r, col);
      opt(static_cast<Eigen::Index>(k)) = star(r, col);
      rel = std::max(rel, std::abs(s(r, col) - star(r, col)) / std::max(std::abs(star(r, col)), 1e-300));
    }
    worst_rel = std::max(worst_rel, rel);
    json p;
    p["t"] = t;
    p["x"] = vec_json(x);
    p["sigma_hat"] = vec_json(hat);
    p["sigma_star"] = vec_json(opt);
    p["relative_error"] = rel;
    points.push_back(std::move(p));
  }
  json j;
  j["sup_error"] = sup;
  j["max_relative_error"] = worst_rel;
  j["points"] = std::move(points);
  return j;
}

json residual_json(const fs::path& dir, const ExperimentConfig& c, const Problem& problem,
                   const FieldEstimate& field, const DiffusionField& sigma) {
  const auto samples = residual::sample_residuals(problem, field, sigma, test_points(c));
  {
    auto out = open_out(dir / "residual.csv");
    residual::write_residual_csv(samples, out);
  }
  double sum = 0.0;
  int used = 0;
  for (const auto& s : samples) {
    if (s.violation) continue;
    sum += s.residual;
    ++used;
  }
  json j;
  j["pointwise_mean"] = used > 0 ? json(sum / used) : json(nullptr);
  j["violation_fraction"] = samples.empty() ? 0.0 : 1.0 - static_cast<double>(used) / samples.size();
  j["count"] = samples.size();
  try {
    const auto pr = residual::path_residual(problem, field, sigma, c.solver.grid,
                                            sde::uniform_box(c.test.region_lo, c.test.region_hi),
                                            c.test.residual_paths, c.seed ^ 0x9a7ULL);
    json p;
    p["estimate"] = number_or_null(pr.estimate);
    p["standard_error"] = number_or_null(pr.standard_error);
    p["violation_fraction"] = pr.violation_fraction;
    p["paths"] = pr.paths;
    j["path"] = std::move(p);
    j["path_error"] = nullptr;
  } catch (const residual::UnreliableEstimateError& e) {
    j["path"] = nullptr;
    j["path_error"] = e.what();
  }
  return j;
}

void write_sigma(const fs::path& dir, const DiffusionField& sigma) {
  const auto free = sigma.free_entries();
  if (sigma.kind() == DiffusionField::Kind::Network) {
    for (std::size_t k = 0; k < free.size(); ++k) {
      nn::save_checkpoint(sigma.networks()[k], (dir / ("sigma_" + std::to_string(free[k].first) + "_" +
                                                       std::to_string(free[k].second) + ".net"))
                                                   .string());
    }
    return;
  }
  auto out = open_out(dir / "sigma.csv");
  out << "row,col,value\n";
  const Vector x0 = Vector::Zero(sigma.dim());
  const Matrix s = sigma(0.0, x0);
  for (int r = 0; r < s.rows(); ++r) {
    for (int k = 0; k < s.cols(); ++k) out << r << ',' << k << ',' << format_real(s(r, k)) << '\n';
  }
}

void write_loss(const fs::path& path, const std::vector<double>& history) {
  auto out = open_out(path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) out << e + 1 << ',' << format_real(history[e]) << '\n';
}

void write_networks(const fs::path& dir, const bsde::Networks& nets, bool with_value) {
  nn::save_checkpoint(nets.field, (dir / "field.net").string());
  if (with_value) nn::save_checkpoint(nets.value, (dir / "value.net").string());
}

json record_json(const ascent::IterationRecord& r) {
  json j;
  j["m"] = r.m;
  j["norm"] = number_or_null(r.norm);
  j["mse"] = number_or_null(r.mse);
  j["std"] = number_or_null(r.std);
  j["loss"] = number_or_null(r.loss);
  j["seconds"] = r.seconds;
  j["refit_residual"] = number_or_null(r.refit_residual);
  j["probe_value"] = number_or_null(r.probe_value);
  return j;
}

json summary_header(const std::string& command, const ExperimentConfig& c) {
  json j;
  j["schema_version"] = 1;
  j["command"] = command;
  j["problem"] = c.problem.kind;
  j["seed"] = c.seed;
  return j;
}

void write_summary(const fs::path& dir, json summary, const ExperimentConfig& c) {
  summary["config_text"] = c.source_text;
  summary["config"] = to_json(c);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

/// Optimal sigma reported at t = 0 and the region midpoint; echoed into logs.
std::string describe_sigma(const DiffusionField& sigma, const ExperimentConfig& c) {
  const Vector v = sigma.free_values(0.0, region_mid(c));
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_real(v(i));
  os << ']';
  return os.str();
}

}  // namespace

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

ExperimentConfig resolve_config(const CommandOptions& options) {
  if (options.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_config(options.config_path);
  if (options.seed) c.seed = *options.seed;
  if (options.out) c.output = *options.out;
  if (options.max_iter) {
    if (*options.max_iter < 1) throw ConfigError("--max-iter must be positive");
    c.ascent.max_iterations = *options.max_iter;
  }
  return c;
}

int run_ascent_experiment(const std::string& command, const ExperimentConfig& config,
                          std::ostream& log, std::ostream& err) {
  ExperimentConfig c = config;
  const ProblemPtr problem = make_problem(c.problem);
  if (!c.ascent.probe) c.ascent.probe = region_mid(c);

  const fs::path dir = c.output;
  fs::create_directories(dir);
  write_text(dir / "config.yaml", c.source_text);
  auto metrics = open_out(dir / "metrics.csv");
  auto timing = open_out(dir / "timing.csv");
  metrics << "m,B,mse,std,loss,refit_residual,probe_value\n";
  timing << "m,seconds\n";
  metrics.flush();
  timing.flush();

  const bool with_value = c.solver.variant == bsde::LossVariant::Modified;
  ascent::IterationHook hook = [&](const ascent::IterationRecord& r, const DiffusionField& sigma,
                                   const ascent::InnerResult& inner) {
    metrics << r.m << ',' << format_real(r.norm) << ',' << format_real(r.mse) << ','
            << format_real(r.std) << ',' << format_real(r.loss) << ',' << format_real(r.refit_residual)
            << ',' << format_real(r.probe_value) << '\n';
    metrics.flush();
    timing << r.m << ',' << std::fixed << std::setprecision(3) << r.seconds << '\n' << std::defaultfloat;
    timing.flush();
    const fs::path it = dir / iteration_dir_name(r.m);
    fs::create_directories(it);
    if (inner.nets) write_networks(it, *inner.nets, with_value);
    write_sigma(it, sigma);
    write_loss(it / "loss.csv", inner.loss_history);
    log << "m=" << r.m << " B=" << format_real(r.norm) << " mse=" << format_real(r.mse)
        << " loss=" << format_real(r.loss) << " sigma=" << describe_sigma(sigma, c) << " ("
        << std::fixed << std::setprecision(1) << r.seconds << std::defaultfloat << " s)\n";
    log.flush();
  };

  ascent::DeepBsdeSolver solver(c.solver, c.drifted, c.warm_start);
  ascent::RunReport report;
  bool failed = false;
  try {
    report = ascent::run_ascent(*problem, c.ascent, solver, c.seed, nullptr, hook);
  } catch (const ascent::AscentFailure& e) {
    report = e.partial();
    report.termination = ascent::Termination::Failed;
    report.failure = e.what();
    failed = true;
    err << "numerical failure: " << e.what() << '\n';
  }

  json s = summary_header(command, c);
  s["status"] = failed ? "failed" : "completed";
  s["termination"] = ascent::to_string(report.termination);
  s["failure"] = failed ? json(report.failure) : json(nullptr);
  s["iterations"] = report.iterations.size();
  json fin;
  if (!report.iterations.empty()) {
    const auto& last = report.iterations.back();
    fin["norm"] = number_or_null(last.norm);
    fin["mse"] = number_or_null(last.mse);
    fin["std"] = number_or_null(last.std);
    fin["loss"] = number_or_null(last.loss);
  } else {
    fin["norm"] = fin["mse"] = fin["std"] = fin["loss"] = nullptr;
  }
  s["final"] = std::move(fin);

  int code = failed ? kExitNumerical : kExitOk;
  if (report.field) {
    try {
      const FieldPtr oracle = try_oracle(*problem);
      const bool star = has_optimal_sigma(*problem);
      write_slices(dir / "slices", c, *report.field, oracle.get(), report.sigma, *problem, star);
      s["pointwise"] = pointwise_json(c, *report.field, oracle.get());
      s["sigma_check"] = sigma_check_json(c, *problem, report.sigma);
      s["residual"] = residual_json(dir, c, *problem, *report.field, report.sigma);
      s["final"]["sigma"] = vec_json(report.sigma.free_values(0.0, region_mid(c)));
    } catch (const Error& e) {
      // Post-processing of a degenerate field; keep what was written.
      err << "numerical failure while summarising: " << e.what() << '\n';
      s["status"] = "failed";
      s["failure"] = e.what();
      code = kExitNumerical;
    }
  }
  if (!s.contains("pointwise")) s["pointwise"] = json::array();
  if (!s.contains("sigma_check")) s["sigma_check"] = nullptr;
  if (!s.contains("residual")) s["residual"] = nullptr;
  if (!s["final"].contains("sigma")) s["final"]["sigma"] = nullptr;
  auto hist = json::array();
  for (const auto& r : report.iterations) hist.push_back(record_json(r));
  s["history"] = std::move(hist);
  write_summary(dir, std::move(s), c);
  log << "termination: " << ascent::to_string(report.termination) << ", artifacts in " << dir.string()
      << '\n';
  return code;
}

int run_semilinear_experiment(const ExperimentConfig& config, std::ostream& log, std::ostream& err) {
  const ExperimentConfig& c = config;
  const ProblemPtr problem = make_problem(c.problem);
  const DiffusionField sigma = problem->constant_field(c.semilinear.sigma);

  const fs::path dir = c.output;
  fs::create_directories(dir);
  write_text(dir / "config.yaml", c.source_text);

  json s = summary_header("solve-semilinear", c);
  const auto spec = bsde::from_problem(*problem, sigma, c.drifted);
  const auto start = std::chrono::steady_clock::now();
  bsde::SolveResult result;
  try {
    result = bsde::train_semilinear(spec, c.solver, c.seed);
  } catch (const bsde::TrainingError& e) {
    write_loss(dir / "loss.csv", e.history());
    err << "numerical failure: " << e.what() << '\n';
    s["status"] = "failed";
    s["termination"] = "failed";
    s["failure"] = e.what();
    s["iterations"] = 0;
    s["final"] = json{{"norm", nullptr}, {"mse", nullptr}, {"std", nullptr}, {"loss", nullptr}, {"sigma", nullptr}};
    s["pointwise"] = json::array();
    s["sigma_check"] = nullptr;
    s["residual"] = nullptr;
    s["history"] = json::array();
    write_summary(dir, std::move(s), c);
    return kExitNumerical;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_loss(dir / "loss.csv", result.loss_history);
  write_networks(dir, result.nets, c.solver.variant == bsde::LossVariant::Modified);

  const FieldPtr oracle = try_semilinear_oracle(*problem, sigma);
  s["status"] = "completed";
  s["termination"] = "single_solve";
  s["failure"] = nullptr;
  s["iterations"] = 1;
  json fin;
  fin["norm"] = nullptr;
  double mse = kNaN;
  double sd = kNaN;
  if (oracle) {
    const auto rep = residual::mse_report(*result.field, *oracle, test_points(c));
    mse = rep.mse;
    sd = rep.std;
  }
  fin["mse"] = number_or_null(mse);
  fin["std"] = number_or_null(sd);
  fin["loss"] = number_or_null(result.final_loss);
  fin["sigma"] = vec_json(sigma.free_values(0.0, region_mid(c)));
  s["final"] = std::move(fin);
  s["kept_paths"] = result.kept_paths;

  int code = kExitOk;
  try {
    write_slices(dir / "slices", c, *result.field, oracle.get(), sigma, *problem, false);
    s["pointwise"] = pointwise_json(c, *result.field, oracle.get());
    s["sigma_check"] = nullptr;
    s["residual"] = residual_json(dir, c, *problem, *result.field, sigma);
  } catch (const Error& e) {
    err << "numerical failure while summarising: " << e.what() << '\n';
    s["status"] = "failed";
    s["failure"] = e.what();
    code = kExitNumerical;
  }
  if (!s.contains("pointwise")) s["pointwise"] = json::array();
  if (!s.contains("sigma_check")) s["sigma_check"] = nullptr;
  if (!s.contains("residual")) s["residual"] = nullptr;
  ascent::IterationRecord rec;
  rec.m = 1;
  rec.norm = kNaN;
  rec.mse = mse;
  rec.std = sd;
  rec.loss = result.final_loss;
  rec.seconds = seconds;
  s["history"] = json::array({record_json(rec)});
  write_summary(dir, std::move(s), c);
  log << "final loss " << format_real(result.final_loss) << ", mse " << format_real(mse)
      << ", artifacts in " << dir.string() << '\n';
  return code;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

int run_report(const std::string& directory, std::ostream& log, std::ostream& err) {
  const fs::path dir = directory;
  json summary;
  {
    std::ifstream in(dir / "summary.json");
    if (!in) {
      err << "error: no summary.json in " << dir.string() << '\n';
      return kExitError;
    }
    try {
      summary = json::parse(in);
    } catch (const json::exception& e) {
      err << "error: malformed summary.json: " << e.what() << '\n';
      return kExitError;
    }
  }
  std::ostringstream out;
  out << "command:     " << summary.value("command", "?") << '\n';
  out << "problem:     " << summary.value("problem", "?") << '\n';
  out << "status:      " << summary.value("status", "?") << " (" << summary.value("termination", "?")
      << ")\n";
  out << "seed:        " << summary.value("seed", 0ULL) << '\n';
  auto num = [](const json& j) { return j.is_number() ? format_real(j.get<double>()) : std::string("-"); };
  if (summary.contains("final")) {
    const auto& f = summary["final"];
    out << "final B:     " << num(f.value("norm", json())) << '\n';
    out << "final MSE:   " << num(f.value("mse", json())) << '\n';
    out << "final STD:   " << num(f.value("std", json())) << '\n';
    out << "final loss:  " << num(f.value("loss", json())) << '\n';
  }
  if (summary.contains("sigma_check") && summary["sigma_check"].is_object()) {
    out << "sigma sup:   " << num(summary["sigma_check"]["sup_error"]) << '\n';
    out << "sigma rel:   " << num(summary["sigma_check"]["max_relative_error"]) << '\n';
  }
  if (summary.contains("pointwise")) {
    for (const auto& p : summary["pointwise"]) {
      out << "point t=" << num(p["t"]) << ": v_hat=" << num(p["v_hat"]) << " v=" << num(p["v_oracle"])
          << " |err|=" << num(p["abs_error"]) << '\n';
    }
  }
  const fs::path metrics = dir / "metrics.csv";
  if (fs::exists(metrics)) {
    try {
      const auto rows = read_csv(metrics);
      out << '\n';
      for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << std::setw(k ? 24 : 3) << row[k];
        out << '\n';
      }
    } catch (const IoError& e) {
      err << "error: " << e.what() << '\n';
      return kExitError;
    }
  }
  log << out.str();
  try {
    write_text(dir / "report.txt", out.str());
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}

int run_command(const std::string& command, const CommandOptions& options, std::ostream& log,
                std::ostream& err) {
  if (command == "report") {
    const std::string dir = options.out ? *options.out : options.config_path;
    if (dir.empty()) {
      err << "error: report needs --out DIR\n";
      return kExitConfig;
    }
    return run_report(dir, log, err);
  }
  if (command != "run-merton" && command != "run-stochvol" && command != "solve-semilinear") {
    err << "error: unknown command '" << command << "'\n";
    return kExitConfig;
  }
  ExperimentConfig config;
  try {
    config = resolve_config(options);
    const std::string& kind = config.problem.kind;
    const std::string where = config.source_name + ":1:1: ";
    if (command == "run-merton" && kind != "merton") {
      throw ConfigError(where + "run-merton needs problem.kind merton, got '" + kind + "'");
    }
    if (command == "run-stochvol" && kind != "stochvol") {
      throw ConfigError(where + "run-stochvol needs problem.kind stochvol, got '" + kind + "'");
    }
    if (command == "solve-semilinear") {
      if (!config.semilinear.present) throw ConfigError(where + "solve-semilinear needs a 'semilinear' section");
      if (kind == "stochvol-leverage") {
        throw ConfigError(where + "problem.kind stochvol-leverage has no training command");
      }
    }
    (void)make_problem(config.problem);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    if (command == "solve-semilinear") return run_semilinear_experiment(config, log, err);
    return run_ascent_experiment(command, config, log, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace fnascent::experiment
