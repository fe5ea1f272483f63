#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ebt/measures.hpp"
#include "ebt/residual.hpp"
#include "ebt/solver.hpp"
#include "ebt/verify.hpp"

namespace ebt::io {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Writes to a temporary sibling, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// `location,mass` with one row per atom, in storage order.
std::string measure_csv(const DiscreteMeasure& m);
/// Inverse of measure_csv. Throws ConfigError on malformed input.
DiscreteMeasure parse_measure_csv(const std::string& text);

/// `t,cohort_index,N,X`: every cohort of every snapshot (post-event state at
/// internalization times), boundary first.
std::string trajectory_csv(const Trajectory& traj);

/// Sidecar for trajectory_csv: config, h_eff, steps per interval,
/// internalization times, pruning loss.
nlohmann::ordered_json trajectory_metadata(const Trajectory& traj,
                                           const nlohmann::ordered_json& config);

/// `phi_id,t1,t2,quadrature,closed_form,abs_diff`.
std::string residual_csv(const std::vector<ResidualRow>& rows);

/// `N,n,h_eff,flat_error,functional_error,residual_norm,mass_bound_ok`, plus
/// `runtime_s` when `with_runtime`. Missing values are empty cells.
std::string report_csv(const ConvergenceReport& report, bool with_runtime);

/// Fitted slopes and per-row failures; no wall-clock content.
nlohmann::ordered_json report_summary(const ConvergenceReport& report);

/// JSON text with a trailing newline.
std::string dump(const nlohmann::ordered_json& j);

}  // namespace ebt::io
