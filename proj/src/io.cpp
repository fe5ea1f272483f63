#include "ebt/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "ebt/errors.hpp"

namespace ebt::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string measure_csv(const DiscreteMeasure& m) {
  std::string s = "location,mass\n";
  for (const Atom& a : m.atoms()) {
    s += format_double(a.location) + ',' + format_double(a.mass) + '\n';
  }
  return s;
}

DiscreteMeasure parse_measure_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "location,mass") {
    throw ConfigError("measure CSV must start with the header 'location,mass'");
  }
  std::vector<Atom> atoms;
  int lineno = 1;
  auto parse = [&](std::string_view s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError("measure CSV line " + std::to_string(lineno) + ": bad number '" +
                        std::string(s) + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ConfigError("measure CSV line " + std::to_string(lineno) + ": need two fields");
    }
    const std::string_view sv(line);
    atoms.push_back({parse(sv.substr(0, comma)), parse(sv.substr(comma + 1))});
  }
  return DiscreteMeasure(std::move(atoms));
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string s = "t,cohort_index,N,X\n";
  for (const Snapshot& snap : traj.snapshots) {
    const std::string t = format_double(snap.t);
    auto row = [&](const Cohort& c) {
      s += t + ',' + std::to_string(c.index) + ',' + format_double(c.abundance) + ',' +
           format_double(c.center) + '\n';
    };
    row(snap.state.boundary);
    for (const Cohort& c : snap.state.internal) row(c);
  }
  return s;
}

nlohmann::ordered_json trajectory_metadata(const Trajectory& traj,
                                           const nlohmann::ordered_json& config) {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["h_eff"] = traj.step_size;
  j["steps_per_interval"] = traj.steps_per_interval;
  j["internalization_times"] = traj.internalization_times;
  j["snapshot_count"] = traj.snapshots.size();
  j["pruned_mass"] = traj.pruned_mass;
  j["pruned_count"] = traj.pruned_count;
  j["final_total_mass"] = traj.final_snapshot().measure.total_mass();
  return j;
}

std::string residual_csv(const std::vector<ResidualRow>& rows) {
  std::string s = "phi_id,t1,t2,quadrature,closed_form,abs_diff\n";
  for (const ResidualRow& r : rows) {
    s += r.phi_id + ',' + format_double(r.t1) + ',' + format_double(r.t2) + ',' +
         format_double(r.quadrature) + ',' + format_double(r.closed_form) + ',' +
         format_double(std::abs(r.quadrature - r.closed_form)) + '\n';
  }
  return s;
}

namespace {
std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

nlohmann::ordered_json slopes_json(const AxisSlopes& s) {
  auto value = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"flat_error", value(s.flat_error)},
          {"functional_error", value(s.functional_error)},
          {"residual_norm", value(s.residual_norm)}};
}
}  // namespace

std::string report_csv(const ConvergenceReport& report, bool with_runtime) {
  std::string s = "N,n,h_eff,flat_error,functional_error,residual_norm,mass_bound_ok";
  s += with_runtime ? ",runtime_s\n" : "\n";
  for (const StudyRow& r : report.rows) {
    s += std::to_string(r.N) + ',' + std::to_string(r.n) + ',' + format_double(r.h_eff) + ',' +
         cell(r.flat_error) + ',' + cell(r.functional_error) + ',' + cell(r.residual_norm) + ',' +
         (r.mass_bound_ok ? "true" : "false");
    if (with_runtime) s += ',' + format_double(r.runtime_s);
    s += '\n';
  }
  return s;
}

nlohmann::ordered_json report_summary(const ConvergenceReport& report) {
  nlohmann::ordered_json j;
  j["slopes"] = {{"N", slopes_json(report.slope_N)}, {"n", slopes_json(report.slope_n)}};
  bool all_ok = true;
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const StudyRow& r : report.rows) {
    all_ok = all_ok && r.mass_bound_ok;
    if (!r.failure.empty()) failures.push_back({{"N", r.N}, {"n", r.n}, {"error", r.failure}});
  }
  j["mass_bound_ok"] = all_ok;
  j["failures"] = failures;
  if (!report.reference_failure.empty()) j["reference_failure"] = report.reference_failure;
  return j;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + '\n'; }

}  // namespace ebt::io
