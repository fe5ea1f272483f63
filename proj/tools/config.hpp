#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ebt/model.hpp"
#include "ebt/solver.hpp"
#include "ebt/verify.hpp"

namespace ebt::cli {

/// Closed interval [lo, hi] for a fitted slope.
using SlopeRange = std::pair<double, double>;

/// Checks applied by `converge --assert`. Unset entries are skipped.
struct AssertSpec {
  bool mass_bound = true;
  std::optional<SlopeRange> residual_slope_n, residual_slope_N;
  std::optional<SlopeRange> functional_slope_n, functional_slope_N;
  std::optional<SlopeRange> flat_slope_n, flat_slope_N;
  std::optional<double> max_functional_error;  // at the finest (N, n)
  std::optional<double> max_flat_error;        // at the finest (N, n)
  /// Error at the finest (N, n) must not exceed factor * min over the grid.
  std::optional<double> finest_is_min;
};

struct ValidateSpec {
  std::optional<std::pair<double, double>> x_range;
  int points = 100;
};

struct Config {
  ProblemSpec problem;
  RunOptions run;
  StudyOptions study;
  bool has_study = false;
  AssertSpec checks;
  ValidateSpec validate;
  /// Effective configuration after overrides, echoed into artifacts.
  nlohmann::ordered_json effective;
};

/// Parses `key=value` overrides for N, n, h, boundary_formulation,
/// prune_epsilon and snapshot_stride. Throws ConfigError otherwise.
std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& items);

/// Reads and validates a JSON config. Unknown keys anywhere are rejected.
/// Throws ConfigError with a path-qualified message.
Config load_config(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, std::string>>& overrides = {});
Config parse_config(const std::string& text,
                    const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace ebt::cli
