#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ebt/errors.hpp"

namespace ebt::cli {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

// Object view that remembers which keys were read so leftovers can be
// reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(path_, "missing required key '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(at(key), sub(key)); }

  std::optional<double> number_opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  int integer(const std::string& key) { return as_int(at(key), sub(key)); }

  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) fail(sub(key), "expected a string");
    return v.get<std::string>();
  }

  std::string sub(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) fail(path_, "unknown key '" + k + "'");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
  }

  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const auto i = v.get<long long>();
    if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
      fail(path, "integer out of range");
    }
    return static_cast<int>(i);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

InitialData parse_initial(const json& j, double xb) {
  Fields f(j, "initial");
  if (f.has("atoms")) {
    const json& atoms = f.at("atoms");
    if (!atoms.is_array()) fail("initial.atoms", "expected an array of [location, mass]");
    std::vector<Atom> out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const std::string p = "initial.atoms[" + std::to_string(i) + "]";
      const json& a = atoms[i];
      if (!a.is_array() || a.size() != 2) fail(p, "expected [location, mass]");
      const double x = Fields::as_number(a[0], p + "[0]");
      const double m = Fields::as_number(a[1], p + "[1]");
      if (m < 0.0) fail(p, "mass must be >= 0");
      if (x < xb) fail(p, "location must be >= x_b");
      out.push_back({x, m});
    }
    f.finish();
    return DiscreteMeasure(std::move(out));
  }
  const std::string family = f.string("density");
  DensitySpec d;
  if (family == "uniform") {
    d = uniform_density(f.number("lo"), f.number("hi"), f.number("mass"));
  } else if (family == "triangular") {
    d = triangular_density(f.number("lo"), f.number("mode"), f.number("hi"), f.number("mass"));
  } else if (family == "truncated_exponential") {
    d = truncated_exponential_density(f.number("lo"), f.number("hi"), f.number("rate"),
                                      f.number("mass"));
  } else {
    fail("initial.density",
         "must be uniform, triangular or truncated_exponential; got '" + family + "'");
  }
  f.finish();
  return d;
}

std::vector<int> parse_grid(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const int v = Fields::as_int(j[i], path + "[" + std::to_string(i) + "]");
    if (v < 1) fail(path, "entries must be >= 1");
    if (!out.empty() && v <= out.back()) fail(path, "must be strictly increasing");
    out.push_back(v);
  }
  return out;
}

std::optional<SlopeRange> parse_range(Fields& f, const std::string& key) {
  if (!f.has(key)) return std::nullopt;
  const json& v = f.at(key);
  const std::string p = f.sub(key);
  if (!v.is_array() || v.size() != 2) fail(p, "expected [lo, hi]");
  const double lo = Fields::as_number(v[0], p + "[0]");
  const double hi = Fields::as_number(v[1], p + "[1]");
  if (lo > hi) fail(p, "need lo <= hi");
  return SlopeRange{lo, hi};
}

AssertSpec parse_assert(const json& j) {
  Fields f(j, "converge.assert");
  AssertSpec a;
  if (f.has("mass_bound")) {
    const json& v = f.at("mass_bound");
    if (!v.is_boolean()) fail(f.sub("mass_bound"), "expected a boolean");
    a.mass_bound = v.get<bool>();
  }
  a.residual_slope_n = parse_range(f, "residual_slope_n");
  a.residual_slope_N = parse_range(f, "residual_slope_N");
  a.functional_slope_n = parse_range(f, "functional_slope_n");
  a.functional_slope_N = parse_range(f, "functional_slope_N");
  a.flat_slope_n = parse_range(f, "flat_slope_n");
  a.flat_slope_N = parse_range(f, "flat_slope_N");
  a.max_functional_error = f.number_opt("max_functional_error");
  a.max_flat_error = f.number_opt("max_flat_error");
  a.finest_is_min = f.number_opt("finest_is_min");
  if (a.finest_is_min && *a.finest_is_min < 1.0) {
    fail(f.sub("finest_is_min"), "factor must be >= 1");
  }
  f.finish();
  return a;
}

void apply_overrides(json& root, const std::vector<std::pair<std::string, std::string>>& items) {
  for (const auto& [key, value] : items) {
    const std::string p = "--set " + key;
    if (key == "N" || key == "n" || key == "snapshot_stride") {
      long long v = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
        fail(p, "expected an integer, got '" + value + "'");
      }
      root[key] = v;
    } else if (key == "h" || key == "prune_epsilon") {
      double v = 0.0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
        fail(p, "expected a number, got '" + value + "'");
      }
      root[key == "h" ? "step_size" : key] = v;
    } else if (key == "boundary_formulation") {
      root[key] = value;
    } else {
      fail(p, "unknown override key");
    }
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& items) {
  static const std::set<std::string> allowed = {"N", "n", "h", "boundary_formulation",
                                                "prune_epsilon", "snapshot_stride"};
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + item + "'");
    }
    std::string key = item.substr(0, eq);
    if (!allowed.contains(key)) {
      throw ConfigError("--set: unknown key '" + key +
                        "' (allowed: N, n, h, boundary_formulation, prune_epsilon, "
                        "snapshot_stride)");
    }
    out.emplace_back(std::move(key), item.substr(eq + 1));
  }
  return out;
}

Config parse_config(const std::string& text,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail("config", "expected a JSON object");
  apply_overrides(root, overrides);

  Config c;
  Fields f(root, "config");
  const std::string model = f.string("model");
  std::map<std::string, double> params;
  {
    const json& p = f.at("params");
    if (!p.is_object()) fail("config.params", "expected an object");
    for (const auto& [k, v] : p.items()) params[k] = Fields::as_number(v, "config.params." + k);
  }

  ProblemSetup setup;
  setup.birth_size = f.number("x_b");
  setup.horizon = f.number("T");
  if (!(setup.horizon > 0.0)) fail("config.T", "must be > 0");
  setup.initial_cohorts = f.integer("N");
  if (setup.initial_cohorts < 1) fail("config.N", "must be >= 1");
  setup.internalizations = f.integer("n");
  if (setup.internalizations < 1) fail("config.n", "must be >= 1");
  setup.formulation = f.has("boundary_formulation")
                          ? parse_formulation(f.string("boundary_formulation"))
                          : BoundaryFormulation::simplified;
  setup.initial = parse_initial(f.at("initial"), setup.birth_size);

  c.run.step_size = f.number("step_size");
  if (!(c.run.step_size > 0.0)) fail("config.step_size", "must be > 0");
  if (f.has("prune_epsilon")) {
    c.run.prune_epsilon = f.number("prune_epsilon");
    if (c.run.prune_epsilon < 0.0) fail("config.prune_epsilon", "must be >= 0");
  }
  if (f.has("snapshot_stride")) {
    c.run.snapshot_stride = f.integer("snapshot_stride");
    if (c.run.snapshot_stride < 1) fail("config.snapshot_stride", "must be >= 1");
  }

  c.problem = catalog_build(model, params, setup);

  if (f.has("converge")) {
    Fields g(f.at("converge"), "config.converge");
    c.has_study = true;
    c.study.N_grid = parse_grid(g.at("N_grid"), g.sub("N_grid"));
    c.study.n_grid = parse_grid(g.at("n_grid"), g.sub("n_grid"));
    c.study.run = c.run;
    if (g.has("reference")) c.study.reference = parse_reference(g.string("reference"));
    if (g.has("reference_factor")) {
      c.study.reference_factor = g.integer("reference_factor");
      if (c.study.reference_factor < 1) fail(g.sub("reference_factor"), "must be >= 1");
    }
    if (g.has("assert")) c.checks = parse_assert(g.at("assert"));
    g.finish();
  }

  if (f.has("validate")) {
    Fields v(f.at("validate"), "config.validate");
    if (v.has("x_range")) {
      const json& r = v.at("x_range");
      if (!r.is_array() || r.size() != 2) fail(v.sub("x_range"), "expected [lo, hi]");
      const double lo = Fields::as_number(r[0], v.sub("x_range") + "[0]");
      const double hi = Fields::as_number(r[1], v.sub("x_range") + "[1]");
      if (lo > hi) fail(v.sub("x_range"), "need lo <= hi");
      c.validate.x_range = std::make_pair(lo, hi);
    }
    if (v.has("points")) {
      c.validate.points = v.integer("points");
      if (c.validate.points < 1) fail(v.sub("points"), "must be >= 1");
    }
    v.finish();
  }
  f.finish();
  c.effective = root;
  return c;
}

Config load_config(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace ebt::cli
