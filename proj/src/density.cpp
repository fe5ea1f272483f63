#include "ebt/density.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "ebt/errors.hpp"

namespace ebt {

namespace {
void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}
}  // namespace

DensitySpec uniform_density(double lo, double hi, double mass) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "uniform density: need lo < hi");
  require(mass >= 0.0 && std::isfinite(mass), "uniform density: mass must be >= 0");
  const double h = mass / (hi - lo);
  return {"uniform", [=](double x) { return (x >= lo && x <= hi) ? h : 0.0; }, lo, hi, {}};
}

DensitySpec triangular_density(double lo, double mode, double hi, double mass) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi && lo <= mode && mode <= hi,
          "triangular density: need lo <= mode <= hi and lo < hi");
  require(mass >= 0.0 && std::isfinite(mass), "triangular density: mass must be >= 0");
  const double peak = 2.0 * mass / (hi - lo);
  auto pdf = [=](double x) {
    if (x < lo || x > hi) return 0.0;
    if (x < mode) return peak * (x - lo) / (mode - lo);
    if (x > mode) return peak * (hi - x) / (hi - mode);
    return peak;
  };
  std::vector<double> kinks;
  if (mode > lo && mode < hi) kinks.push_back(mode);
  return {"triangular", pdf, lo, hi, kinks};
}

DensitySpec truncated_exponential_density(double lo, double hi, double rate, double mass) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
          "truncated exponential density: need lo < hi");
  require(rate > 0.0 && std::isfinite(rate), "truncated exponential density: rate must be > 0");
  require(mass >= 0.0 && std::isfinite(mass),
          "truncated exponential density: mass must be >= 0");
  const double norm = rate / -std::expm1(-rate * (hi - lo));
  return {"truncated_exponential",
          [=](double x) { return (x >= lo && x <= hi) ? mass * norm * std::exp(-rate * (x - lo)) : 0.0; },
          lo,
          hi,
          {}};
}

double quadrature(const std::function<double(double)>& f, double a, double b,
                  std::vector<double> breaks, double tolerance) {
  if (!(a < b)) return 0.0;
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (!(lo < hi)) continue;
    sum += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 20,
                                                                          tolerance);
  }
  return sum;
}

double integrate_density(const DensitySpec& d, const std::function<double(double)>& f,
                         std::vector<double> extra_breaks) {
  std::vector<double> breaks = d.kinks;
  breaks.insert(breaks.end(), extra_breaks.begin(), extra_breaks.end());
  return quadrature([&](double x) { return f(x) * d.pdf(x); }, d.lo, d.hi, std::move(breaks));
}

double density_mass(const DensitySpec& d) {
  return integrate_density(d, [](double) { return 1.0; });
}

}  // namespace ebt
