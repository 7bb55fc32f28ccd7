#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

namespace fnascent::experiment {

namespace {

class Reader {
 public:
  explicit Reader(std::string name) : name_(std::move(name)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    const YAML::Mark m = at.Mark();
    throw ConfigError(name_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) +
                      ": " + msg);
  }

  void require_map(const YAML::Node& node, const std::string& section) const {
    if (!node.IsMap()) fail(node, "section '" + section + "' must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& section,
                  const std::set<std::string>& allowed) const {
    require_map(node, section);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in section '" + section + "'");
    }
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, what + " has an invalid value '" + node.Scalar() + "'");
    }
  }

  double real_or_inf(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar()) {
      const std::string& s = node.Scalar();
      if (s == "inf" || s == ".inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    }
    return real(node, what);
  }

  double real(const YAML::Node& node, const std::string& what) const {
    const auto v = scalar<double>(node, what);
    if (!std::isfinite(v)) fail(node, what + " must be finite");
    return v;
  }

  double positive(const YAML::Node& node, const std::string& what) const {
    const double v = real(node, what);
    if (!(v > 0.0)) fail(node, what + " must be positive");
    return v;
  }

  int positive_int(const YAML::Node& node, const std::string& what) const {
    const auto v = scalar<long long>(node, what);
    if (v < 1 || v > std::numeric_limits<int>::max()) fail(node, what + " must be a positive integer");
    return static_cast<int>(v);
  }

  std::vector<double> reals(const YAML::Node& node, const std::string& what) const {
    if (!node.IsSequence()) fail(node, what + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : node) out.push_back(real(e, what));
    return out;
  }

  Vector vec(const YAML::Node& node, const std::string& what) const {
    const auto v = reals(node, what);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  // Runs `fn`; a ConfigError without position is anchored at `at`.
  template <typename Fn>
  void anchored(const YAML::Node& at, Fn&& fn) const {
    try {
      fn();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(name_ + ":", 0) == 0) throw;
      fail(at, msg);
    }
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Solver networks share solver.batch_size; only the refit takes its own.
nn::TrainConfig parse_train(const Reader& r, const YAML::Node& node, const std::string& section,
                            nn::TrainConfig base, std::set<std::string> allowed = {}) {
  allowed.insert({"optimizer", "learning_rate", "epochs"});
  r.check_keys(node, section, allowed);
  if (node["optimizer"]) {
    r.anchored(node["optimizer"], [&] {
      base.optimizer = nn::optimizer_from_string(r.scalar<std::string>(node["optimizer"], "optimizer"));
    });
  }
  if (node["learning_rate"]) base.learning_rate = r.positive(node["learning_rate"], section + ".learning_rate");
  if (node["epochs"]) base.epochs = r.positive_int(node["epochs"], section + ".epochs");
  if (node["batch_size"]) base.batch_size = r.positive_int(node["batch_size"], section + ".batch_size");
  return base;
}

std::vector<int> parse_widths(const Reader& r, const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence() || node.size() == 0) r.fail(node, what + " must be a nonempty list");
  std::vector<int> out;
  for (const auto& e : node) out.push_back(r.positive_int(e, what));
  return out;
}

void parse_problem(const Reader& r, const YAML::Node& node, ProblemConfig& p) {
  r.check_keys(node, "problem", {"kind", "lambda", "kappa", "theta", "nu", "rho", "eta", "horizon",
                                 "premium", "dim", "diffusion"});
  if (!node["kind"]) r.fail(node, "problem.kind is required");
  p.kind = r.scalar<std::string>(node["kind"], "problem.kind");
  static const std::set<std::string> kinds{"merton", "stochvol", "stochvol-leverage", "heat"};
  if (!kinds.count(p.kind)) {
    r.fail(node["kind"], "problem.kind must be one of merton, stochvol, stochvol-leverage, heat");
  }
  auto list = [&](const char* key, std::vector<double>& dst) {
    if (node[key]) dst = r.reals(node[key], std::string("problem.") + key);
  };
  list("lambda", p.lambda);
  list("kappa", p.kappa);
  list("theta", p.theta);
  list("nu", p.nu);
  list("rho", p.rho);
  if (node["eta"]) p.eta = r.positive(node["eta"], "problem.eta");
  if (node["horizon"]) p.horizon = r.positive(node["horizon"], "problem.horizon");
  if (node["premium"]) {
    const auto s = r.scalar<std::string>(node["premium"], "problem.premium");
    if (s == "linear") {
      p.premium = PremiumKind::Linear;
    } else if (s == "constant") {
      p.premium = PremiumKind::Constant;
    } else {
      r.fail(node["premium"], "problem.premium must be linear or constant");
    }
  }
  if (node["dim"]) p.dim = r.positive_int(node["dim"], "problem.dim");
  if (node["diffusion"]) {
    p.diffusion = r.real(node["diffusion"], "problem.diffusion");
    if (p.diffusion < 0.0) r.fail(node["diffusion"], "problem.diffusion must be nonnegative");
  }
  if (p.kind == "heat") {
    for (const char* key : {"lambda", "kappa", "theta", "nu", "rho", "eta", "premium"}) {
      if (node[key]) r.fail(node[key], std::string("problem.") + key + " does not apply to heat");
    }
  } else {
    if (!node["lambda"]) r.fail(node, "problem.lambda is required");
    if (p.lambda.empty()) r.fail(node["lambda"], "problem.lambda must not be empty");
    for (const char* key : {"dim", "diffusion"}) {
      if (node[key]) r.fail(node[key], std::string("problem.") + key + " applies to heat only");
    }
  }
  if (p.kind == "stochvol" || p.kind == "stochvol-leverage") {
    for (const char* key : {"kappa", "theta", "nu"}) {
      if (!node[key]) r.fail(node, std::string("problem.") + key + " is required for " + p.kind);
      const auto& v = key[0] == 'k' ? p.kappa : (key[0] == 't' ? p.theta : p.nu);
      if (v.size() != p.lambda.size()) {
        r.fail(node[key], std::string("problem.") + key + " must have one entry per asset");
      }
    }
  }
  if (p.kind == "stochvol-leverage") {
    if (!node["rho"]) r.fail(node, "problem.rho is required for stochvol-leverage");
  } else if (node["rho"]) {
    r.fail(node["rho"], "problem.rho applies to stochvol-leverage only");
  }
  if (p.kind == "merton") {
    for (const char* key : {"kappa", "theta", "nu", "premium"}) {
      if (node[key]) r.fail(node[key], std::string("problem.") + key + " does not apply to merton");
    }
  }
  r.anchored(node, [&] { (void)make_problem(p); });
}

void parse_solver(const Reader& r, const YAML::Node& node, ExperimentConfig& c) {
  r.check_keys(node, "solver", {"steps", "sample_size", "batch_size", "loss", "outlier_quantile",
                                "drifted", "warm_start", "hidden", "activation", "x0_lo", "x0_hi",
                                "value_optimizer", "field_optimizer", "lr_decay", "average_tail"});
  auto& s = c.solver;
  if (node["steps"]) s.grid.steps = r.positive_int(node["steps"], "solver.steps");
  if (node["sample_size"]) s.sample_size = r.positive_int(node["sample_size"], "solver.sample_size");
  if (node["batch_size"]) s.batch_size = r.positive_int(node["batch_size"], "solver.batch_size");
  if (s.sample_size < s.batch_size) {
    r.fail(node["batch_size"] ? node["batch_size"] : node, "solver.batch_size exceeds solver.sample_size");
  }
  if (node["loss"]) {
    r.anchored(node["loss"], [&] {
      s.variant = bsde::loss_variant_from_string(r.scalar<std::string>(node["loss"], "solver.loss"));
    });
  }
  if (node["outlier_quantile"]) {
    const double q = r.real(node["outlier_quantile"], "solver.outlier_quantile");
    if (!(q > 0.5 && q < 1.0)) r.fail(node["outlier_quantile"], "solver.outlier_quantile must lie in (0.5, 1)");
    s.outlier_quantile = q;
  }
  if (node["drifted"]) c.drifted = r.scalar<bool>(node["drifted"], "solver.drifted");
  if (node["warm_start"]) c.warm_start = r.scalar<bool>(node["warm_start"], "solver.warm_start");
  if (node["hidden"]) s.hidden = parse_widths(r, node["hidden"], "solver.hidden");
  if (node["activation"]) {
    r.anchored(node["activation"], [&] {
      s.activation = nn::activation_from_string(r.scalar<std::string>(node["activation"], "solver.activation"));
    });
  }
  if (node["x0_lo"]) s.x0_lo = r.vec(node["x0_lo"], "solver.x0_lo");
  if (node["x0_hi"]) s.x0_hi = r.vec(node["x0_hi"], "solver.x0_hi");
  if (node["lr_decay"]) {
    s.lr_decay = r.real(node["lr_decay"], "solver.lr_decay");
    if (!(s.lr_decay > 0.0 && s.lr_decay <= 1.0)) r.fail(node["lr_decay"], "solver.lr_decay must lie in (0, 1]");
  }
  if (node["average_tail"]) {
    s.average_tail = r.real(node["average_tail"], "solver.average_tail");
    if (!(s.average_tail >= 0.0 && s.average_tail < 1.0)) {
      r.fail(node["average_tail"], "solver.average_tail must lie in [0, 1)");
    }
  }
  if (node["value_optimizer"]) {
    s.value_train = parse_train(r, node["value_optimizer"], "solver.value_optimizer", s.value_train);
  }
  if (node["field_optimizer"]) {
    s.field_train = parse_train(r, node["field_optimizer"], "solver.field_optimizer", s.field_train);
  }
}

void parse_ascent(const Reader& r, const YAML::Node& node, ascent::AscentConfig& a) {
  r.check_keys(node, "ascent", {"tolerance", "max_iterations", "step0", "clip", "norm_order",
                                "cloud_size", "representation", "sigma0", "refit"});
  if (node["tolerance"]) a.tolerance = r.positive(node["tolerance"], "ascent.tolerance");
  if (node["max_iterations"]) a.max_iterations = r.positive_int(node["max_iterations"], "ascent.max_iterations");
  if (node["step0"]) a.step0 = r.positive(node["step0"], "ascent.step0");
  if (node["clip"]) a.clip0 = r.positive(node["clip"], "ascent.clip");
  if (node["norm_order"]) {
    a.norm_order = r.real_or_inf(node["norm_order"], "ascent.norm_order");
    if (!(a.norm_order >= 1.0)) r.fail(node["norm_order"], "ascent.norm_order must be >= 1 or inf");
  }
  if (node["cloud_size"]) a.cloud_size = r.positive_int(node["cloud_size"], "ascent.cloud_size");
  if (node["representation"]) {
    r.anchored(node["representation"], [&] {
      a.representation = ascent::representation_from_string(
          r.scalar<std::string>(node["representation"], "ascent.representation"));
    });
  }
  if (node["sigma0"]) a.sigma0 = r.positive(node["sigma0"], "ascent.sigma0");
  if (node["refit"]) {
    const YAML::Node f = node["refit"];
    a.refit.train = parse_train(r, f, "ascent.refit", a.refit.train, {"batch_size", "hidden", "tolerance"});
    if (f["hidden"]) a.refit.hidden = parse_widths(r, f["hidden"], "ascent.refit.hidden");
    if (f["tolerance"]) a.refit.tolerance = r.positive(f["tolerance"], "ascent.refit.tolerance");
  }
}

void parse_semilinear(const Reader& r, const YAML::Node& node, SemilinearConfig& s) {
  r.check_keys(node, "semilinear", {"sigma", "terminal"});
  s.present = true;
  if (!node["sigma"]) r.fail(node, "semilinear.sigma is required");
  s.sigma = r.real(node["sigma"], "semilinear.sigma");
  if (!node["terminal"]) r.fail(node, "semilinear.terminal is required");
  s.terminal = r.scalar<std::string>(node["terminal"], "semilinear.terminal");
  if (s.terminal != "quadratic" && s.terminal != "exponential") {
    r.fail(node["terminal"], "semilinear.terminal must be quadratic or exponential");
  }
}

void parse_test(const Reader& r, const YAML::Node& node, TestConfig& t) {
  r.check_keys(node, "test", {"region_lo", "region_hi", "points", "slices", "slice_points",
                              "slice_axis", "eval_points", "sigma_points", "residual_paths"});
  if (!node["region_lo"] || !node["region_hi"]) r.fail(node, "test.region_lo and test.region_hi are required");
  t.region_lo = r.vec(node["region_lo"], "test.region_lo");
  t.region_hi = r.vec(node["region_hi"], "test.region_hi");
  if (node["points"]) t.points = r.positive_int(node["points"], "test.points");
  if (node["slices"]) {
    if (!node["slices"].IsSequence()) r.fail(node["slices"], "test.slices must be a list of step indices");
    for (const auto& e : node["slices"]) {
      const auto v = r.scalar<long long>(e, "test.slices");
      if (v < 0) r.fail(e, "test.slices entries must be nonnegative");
      t.slices.push_back(static_cast<int>(v));
    }
  }
  if (node["slice_points"]) t.slice_points = r.positive_int(node["slice_points"], "test.slice_points");
  if (node["slice_axis"]) {
    const auto v = r.scalar<long long>(node["slice_axis"], "test.slice_axis");
    if (v < 0) r.fail(node["slice_axis"], "test.slice_axis must be nonnegative");
    t.slice_axis = static_cast<int>(v);
  }
  if (node["eval_points"]) {
    if (!node["eval_points"].IsSequence()) r.fail(node["eval_points"], "test.eval_points must be a list of points");
    for (const auto& e : node["eval_points"]) t.eval_points.push_back(r.vec(e, "test.eval_points"));
  }
  if (node["sigma_points"]) t.sigma_points = r.positive_int(node["sigma_points"], "test.sigma_points");
  if (node["residual_paths"]) t.residual_paths = r.positive_int(node["residual_paths"], "test.residual_paths");
}

}  // namespace

int ExperimentConfig::dim() const {
  if (problem.kind == "heat") return problem.dim;
  if (problem.kind == "merton") return 1;
  return static_cast<int>(problem.lambda.size()) + 1;
}

ProblemPtr make_problem(const ProblemConfig& p) {
  if (p.kind == "merton") return std::make_shared<MertonProblem>(p.lambda, p.eta, p.horizon);
  if (p.kind == "heat") return std::make_shared<HeatProblem>(p.dim, p.diffusion, p.horizon);
  StochVolParams sv{p.lambda, p.kappa, p.theta, p.nu, p.eta, p.horizon, p.premium};
  if (p.kind == "stochvol") return std::make_shared<StochVolProblem>(sv);
  if (p.kind == "stochvol-leverage") return std::make_shared<LeveragedStochVolProblem>(sv, p.rho);
  throw ConfigError("unknown problem kind '" + p.kind + "'");
}

ExperimentConfig parse_config(const std::string& text, const std::string& name) {
  const Reader r(name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(name + ":1:1: configuration must be a mapping");
  r.check_keys(root, "<root>", {"problem", "solver", "ascent", "semilinear", "test", "seed", "output"});

  ExperimentConfig c;
  c.source_name = name;
  c.source_text = text;
  if (!root["problem"]) r.fail(root, "section 'problem' is required");
  parse_problem(r, root["problem"], c.problem);
  c.solver.grid.horizon = c.problem.horizon;
  if (root["solver"]) parse_solver(r, root["solver"], c);
  if (root["ascent"]) parse_ascent(r, root["ascent"], c.ascent);
  if (root["semilinear"]) parse_semilinear(r, root["semilinear"], c.semilinear);
  if (!root["test"]) r.fail(root, "section 'test' is required");
  parse_test(r, root["test"], c.test);
  if (root["seed"]) {
    const auto s = r.scalar<long long>(root["seed"], "seed");
    if (s < 0) r.fail(root["seed"], "seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (root["output"]) c.output = r.scalar<std::string>(root["output"], "output");

  const int d = c.dim();
  const YAML::Node test = root["test"];
  if (c.test.region_lo.size() != d) r.fail(test["region_lo"], "test.region_lo needs " + std::to_string(d) + " entries");
  if (c.test.region_hi.size() != d) r.fail(test["region_hi"], "test.region_hi needs " + std::to_string(d) + " entries");
  if ((c.test.region_hi.array() < c.test.region_lo.array()).any()) r.fail(test["region_hi"], "test region is inverted");
  if (c.test.slice_axis >= d) r.fail(test["slice_axis"], "test.slice_axis exceeds the state dimension");
  for (std::size_t i = 0; i < c.test.eval_points.size(); ++i) {
    const YAML::Node at = test["eval_points"][i];
    const Vector& e = c.test.eval_points[i];
    if (e.size() != d + 1) r.fail(at, "test.eval_points entries must be (t, x_0..x_" + std::to_string(d - 1) + ")");
    if (e(0) < 0.0 || e(0) > c.problem.horizon) r.fail(at, "test.eval_points time lies outside [0, horizon]");
  }
  for (std::size_t i = 0; i < c.test.slices.size(); ++i) {
    if (c.test.slices[i] > c.solver.grid.steps) r.fail(test["slices"][i], "test.slices index exceeds solver.steps");
  }

  const YAML::Node solver = root["solver"] ? root["solver"] : root;
  if (c.solver.x0_lo.size() == 0) c.solver.x0_lo = c.test.region_lo;
  if (c.solver.x0_hi.size() == 0) c.solver.x0_hi = c.test.region_hi;
  c.ascent.region_lo = c.test.region_lo;
  c.ascent.region_hi = c.test.region_hi;
  c.ascent.test_points = c.test.points;
  r.anchored(solver, [&] { c.solver.validate(d); });
  r.anchored(root["ascent"] ? root["ascent"] : root, [&] { c.ascent.validate(d); });
  if (c.semilinear.present && c.semilinear.sigma < 0.0) {
    r.fail(root["semilinear"]["sigma"], "semilinear.sigma must be nonnegative");
  }
  if (c.semilinear.present) {
    const std::string expected = c.problem.kind == "heat" ? "quadratic" : "exponential";
    if (c.semilinear.terminal != expected) {
      r.fail(root["semilinear"]["terminal"],
             "semilinear.terminal '" + c.semilinear.terminal + "' does not match problem '" +
                 c.problem.kind + "' (expected " + expected + ")");
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ":0:0: cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {
nlohmann::ordered_json vec_json(const Vector& v) {
  auto a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

nlohmann::ordered_json train_json(const nn::TrainConfig& t, bool with_batch) {
  nlohmann::ordered_json j;
  j["optimizer"] = nn::to_string(t.optimizer);
  j["learning_rate"] = t.learning_rate;
  j["epochs"] = t.epochs;
  if (with_batch) j["batch_size"] = t.batch_size;
  return j;
}

nlohmann::ordered_json real_json(double x) {
  if (std::isinf(x)) return "inf";
  return x;
}
}  // namespace

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  auto& p = j["problem"];
  p["kind"] = c.problem.kind;
  if (c.problem.kind == "heat") {
    p["dim"] = c.problem.dim;
    p["diffusion"] = c.problem.diffusion;
  } else {
    p["lambda"] = c.problem.lambda;
    p["eta"] = c.problem.eta;
    if (c.problem.kind != "merton") {
      p["kappa"] = c.problem.kappa;
      p["theta"] = c.problem.theta;
      p["nu"] = c.problem.nu;
      p["premium"] = c.problem.premium == PremiumKind::Linear ? "linear" : "constant";
    }
    if (c.problem.kind == "stochvol-leverage") p["rho"] = c.problem.rho;
  }
  p["horizon"] = c.problem.horizon;

  auto& s = j["solver"];
  s["steps"] = c.solver.grid.steps;
  s["sample_size"] = c.solver.sample_size;
  s["batch_size"] = c.solver.batch_size;
  s["loss"] = bsde::to_string(c.solver.variant);
  if (c.solver.outlier_quantile) {
    s["outlier_quantile"] = *c.solver.outlier_quantile;
  } else {
    s["outlier_quantile"] = nullptr;
  }
  s["drifted"] = c.drifted;
  s["warm_start"] = c.warm_start;
  s["hidden"] = c.solver.hidden;
  s["activation"] = nn::to_string(c.solver.activation);
  s["x0_lo"] = vec_json(c.solver.x0_lo);
  s["x0_hi"] = vec_json(c.solver.x0_hi);
  s["value_optimizer"] = train_json(c.solver.value_train, false);
  s["field_optimizer"] = train_json(c.solver.field_train, false);
  s["lr_decay"] = c.solver.lr_decay;
  s["average_tail"] = c.solver.average_tail;

  auto& a = j["ascent"];
  a["tolerance"] = c.ascent.tolerance;
  a["max_iterations"] = c.ascent.max_iterations;
  a["step0"] = c.ascent.step0;
  a["clip"] = c.ascent.clip0;
  a["norm_order"] = real_json(c.ascent.norm_order);
  a["cloud_size"] = c.ascent.cloud_size;
  a["representation"] = ascent::to_string(c.ascent.representation);
  a["sigma0"] = c.ascent.sigma0;
  auto refit = train_json(c.ascent.refit.train, true);
  refit["hidden"] = c.ascent.refit.hidden;
  refit["tolerance"] = c.ascent.refit.tolerance;
  a["refit"] = refit;

  if (c.semilinear.present) {
    j["semilinear"]["sigma"] = c.semilinear.sigma;
    j["semilinear"]["terminal"] = c.semilinear.terminal;
  }
  auto& t = j["test"];
  t["region_lo"] = vec_json(c.test.region_lo);
  t["region_hi"] = vec_json(c.test.region_hi);
  t["points"] = c.test.points;
  t["slices"] = c.test.slices;
  t["slice_points"] = c.test.slice_points;
  t["slice_axis"] = c.test.slice_axis;
  auto pts = nlohmann::ordered_json::array();
  for (const auto& e : c.test.eval_points) pts.push_back(vec_json(e));
  t["eval_points"] = pts;
  t["sigma_points"] = c.test.sigma_points;
  t["residual_paths"] = c.test.residual_paths;
  j["seed"] = c.seed;
  j["output"] = c.output;
  return j;
}

}  // namespace fnascent::experiment
