#pragma once

#include <functional>
#include <string>
#include <vector>

namespace ebt {

/// Initial population density u0 on a bounded support [lo, hi].
struct DensitySpec {
  std::string family;  // informational ("uniform", "triangular", ...)
  std::function<double(double)> pdf;
  double lo = 0.0;
  double hi = 1.0;
  /// Interior points where pdf is not smooth; quadrature splits there.
  std::vector<double> kinks;
};

/// `mass` spread uniformly on [lo, hi].
DensitySpec uniform_density(double lo, double hi, double mass);
/// Triangular with peak at `mode`, total `mass`.
DensitySpec triangular_density(double lo, double mode, double hi, double mass);
/// u0(x) proportional to exp(-rate (x - lo)) on [lo, hi], total `mass`.
DensitySpec truncated_exponential_density(double lo, double hi, double rate, double mass);

/// Adaptive Gauss-Kronrod integral of f over [a, b]; `breaks` are split points.
double quadrature(const std::function<double(double)>& f, double a, double b,
                  std::vector<double> breaks = {}, double tolerance = 1e-12);

/// int f(x) u0(x) dx over the support, optionally split at extra points.
double integrate_density(const DensitySpec& d, const std::function<double(double)>& f,
                         std::vector<double> extra_breaks = {});

double density_mass(const DensitySpec& d);

}  // namespace ebt
