#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ebt {

struct Atom {
  double location = 0.0;
  double mass = 0.0;
};

/// Finite positive atomic measure  sum_i mass_i * delta(location_i).
///
/// Atom order carries no meaning. Atoms sharing a location are stored as given
/// and act as their merged sum under every operation; zero-mass atoms are
/// allowed and contribute nothing. Immutable after construction.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  /// Throws ConfigError on a negative, NaN or infinite mass, or a non-finite
  /// location.
  explicit DiscreteMeasure(std::vector<Atom> atoms);

  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  /// Sum of masses (cached at construction).
  double total_mass() const { return total_mass_; }

  /// Smallest atom location; +inf for the empty measure.
  double min_location() const;
  /// Largest atom location; -inf for the empty measure.
  double max_location() const;

 private:
  std::vector<Atom> atoms_;
  double total_mass_ = 0.0;
};

inline double total_mass(const DiscreteMeasure& m) { return m.total_mass(); }

/// sum_i mass_i * f(location_i). Throws EvaluationError naming the atom when f
/// is non-finite at a positive-mass atom.
double integrate(const DiscreteMeasure& m, const std::function<double(double)>& f);

/// Mass strictly to the right of `threshold`.
double tail_mass(const DiscreteMeasure& m, double threshold);

/// Support points of a - b: sorted distinct locations with net signed mass.
/// Zero net-mass locations are dropped.
struct SignedChain {
  std::vector<double> locations;
  std::vector<double> net_mass;
};
SignedChain signed_difference(const DiscreteMeasure& a, const DiscreteMeasure& b);

struct FlatMetricOptions {
  /// Combined (a.size() + b.size()) atom limit.
  std::size_t max_atoms = 20000;
  /// Stop the search over the sup/Lipschitz budget split once the bracket is
  /// narrower than this.
  double split_tolerance = 1e-13;
};

/// Flat (Kantorovich-Rubinstein) distance
///
///   sup { int phi d(a - b) : ||phi||_inf + ||phi'||_inf <= 1 }
///
/// with the SUM norm. For unit Diracs a distance d apart this is 2d/(d+2);
/// under the more common max(||phi||_inf, Lip) convention it would be
/// min(d, 2). Restricting to compactly supported smooth phi does not change
/// the value: on the bounded set of atoms such phi approximate any admissible
/// Lipschitz function, including constants.
///
/// The supremum is attained by functions fixed by their values on the sorted
/// union of atom locations, giving the linear program
///
///   max sum_k d_k phi_k   s.t.  |phi_k| <= s,
///                               |phi_{k+1} - phi_k| <= l * (x_{k+1} - x_k),
///                               s + l <= 1.
///
/// For a fixed split (s, l) the value equals the dual chain problem
///
///   min_T  s * sum_k |d_k - (T_k - T_{k-1})| + l * sum_k |T_k| (x_{k+1} - x_k)
///
/// (T_0 = T_K = 0), a sum of convex piecewise-linear terms solved exactly in
/// O(K log K) by breakpoint tracking. That value is concave in s on s + l = 1,
/// so the outer maximisation is a golden-section search.
///
/// Throws CapacityError when the combined atom count exceeds the limit.
double flat_distance(const DiscreteMeasure& a, const DiscreteMeasure& b,
                     const FlatMetricOptions& options = {});

/// Value of the inner problem for a fixed budget split: the supremum of
/// sum_k d_k phi_k over |phi_k| <= sup_budget and Lipschitz constant
/// <= lipschitz_budget.
double flat_split_value(const SignedChain& chain, double sup_budget,
                        double lipschitz_budget);

}  // namespace ebt
