#include "ebt/measures.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "ebt/errors.hpp"

namespace ebt {

DiscreteMeasure::DiscreteMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const Atom& a = atoms_[i];
    if (!std::isfinite(a.location) || !std::isfinite(a.mass) || a.mass < 0.0) {
      std::ostringstream os;
      os << "invalid atom " << i << ": location=" << a.location << " mass=" << a.mass;
      throw ConfigError(os.str());
    }
    total_mass_ += a.mass;
  }
}

double DiscreteMeasure::min_location() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const Atom& a : atoms_) lo = std::min(lo, a.location);
  return lo;
}

double DiscreteMeasure::max_location() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (const Atom& a : atoms_) hi = std::max(hi, a.location);
  return hi;
}

double integrate(const DiscreteMeasure& m, const std::function<double(double)>& f) {
  double sum = 0.0;
  const auto atoms = m.atoms();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].mass == 0.0) continue;
    const double v = f(atoms[i].location);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "integrand is non-finite at atom " << i << " (location " << atoms[i].location
         << ")";
      throw EvaluationError(os.str());
    }
    sum += atoms[i].mass * v;
  }
  return sum;
}

double tail_mass(const DiscreteMeasure& m, double threshold) {
  double sum = 0.0;
  for (const Atom& a : m.atoms()) {
    if (a.location > threshold) sum += a.mass;
  }
  return sum;
}

SignedChain signed_difference(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  std::vector<Atom> all;
  all.reserve(a.size() + b.size());
  for (const Atom& x : a.atoms()) all.push_back(x);
  for (const Atom& x : b.atoms()) all.push_back({x.location, -x.mass});
  // Stable, with the positive and negative parts summed separately, so that
  // a - a cancels exactly.
  std::stable_sort(all.begin(), all.end(),
                   [](const Atom& l, const Atom& r) { return l.location < r.location; });

  SignedChain chain;
  for (std::size_t i = 0; i < all.size();) {
    const double x = all[i].location;
    double pos = 0.0;
    double neg = 0.0;
    for (; i < all.size() && all[i].location == x; ++i) {
      if (all[i].mass >= 0.0) {
        pos += all[i].mass;
      } else {
        neg -= all[i].mass;
      }
    }
    const double net = pos - neg;
    if (net != 0.0) {
      chain.locations.push_back(x);
      chain.net_mass.push_back(net);
    }
  }
  return chain;
}

namespace {

// Convex piecewise-linear function on the real line stored as two breakpoint
// sets split at the minimiser: passing a breakpoint of `left_` (resp.
// `right_`) from left to right raises the slope by its weight, so the slope is
// -sum(left_) at -inf, 0 on the plateau [max left_, min right_] and
// +sum(right_) at +inf. Keys are stored relative to a global shift.
class ConvexBreakpoints {
 public:
  // s * |x|
  explicit ConvexBreakpoints(double slope) {
    if (slope > 0.0) {
      left_[0.0] = slope;
      right_[0.0] = slope;
      sum_left_ = sum_right_ = slope;
    }
  }

  // x -> f(x - d)
  void shift(double d) { offset_ += d; }

  // Infimal convolution with s|x|: caps all slopes to [-s, s]. The minimum is
  // unchanged.
  void clip(double s) {
    while (sum_left_ > s && !left_.empty()) {
      auto it = left_.begin();
      const double excess = sum_left_ - s;
      if (it->second <= excess) {
        sum_left_ -= it->second;
        left_.erase(it);
      } else {
        it->second -= excess;
        sum_left_ = s;
      }
    }
    if (left_.empty()) sum_left_ = 0.0;
    while (sum_right_ > s && !right_.empty()) {
      auto it = std::prev(right_.end());
      const double excess = sum_right_ - s;
      if (it->second <= excess) {
        sum_right_ -= it->second;
        right_.erase(it);
      } else {
        it->second -= excess;
        sum_right_ = s;
      }
    }
    if (right_.empty()) sum_right_ = 0.0;
  }

  // + w |x - c|
  void add_abs(double c, double w) {
    if (w <= 0.0) return;
    add_hinge_up(c, w);
    add_hinge_down(c, w);
  }

  double value_at(double x) const {
    if (!left_.empty() && x < left_top()) {
      double val = min_;
      double slope = 0.0;
      double pos = left_top();
      for (auto it = left_.rbegin(); it != left_.rend(); ++it) {
        const double p = it->first + offset_;
        if (p <= x) break;
        val += slope * (pos - p);
        slope += it->second;
        pos = p;
      }
      return val + slope * (pos - x);
    }
    if (!right_.empty() && x > right_bottom()) {
      double val = min_;
      double slope = 0.0;
      double pos = right_bottom();
      for (auto it = right_.begin(); it != right_.end(); ++it) {
        const double p = it->first + offset_;
        if (p >= x) break;
        val += slope * (p - pos);
        slope += it->second;
        pos = p;
      }
      return val + slope * (x - pos);
    }
    return min_;
  }

 private:
  double left_top() const { return std::prev(left_.end())->first + offset_; }
  double right_bottom() const { return right_.begin()->first + offset_; }

  // + w * max(0, x - c)
  void add_hinge_up(double c, double w) {
    if (left_.empty() || c >= left_top()) {
      right_[c - offset_] += w;
      sum_right_ += w;
      return;
    }
    // The minimiser moves left: walk down `left_` until weight w has crossed.
    const double top = left_top();
    double val = min_ + w * (top - c);
    left_[c - offset_] += w;
    sum_left_ += w;
    double crossed = 0.0;
    double pos = top;
    while (true) {
      auto it = std::prev(left_.end());
      const double p = it->first + offset_;
      val -= (w - crossed) * (pos - p);
      pos = p;
      if (crossed + it->second >= w) {
        const double moved = w - crossed;
        right_[it->first] += moved;
        sum_right_ += moved;
        sum_left_ -= moved;
        it->second -= moved;
        if (it->second <= 0.0) left_.erase(it);
        break;
      }
      crossed += it->second;
      right_[it->first] += it->second;
      sum_right_ += it->second;
      sum_left_ -= it->second;
      left_.erase(it);
    }
    min_ = val;
  }

  // + w * max(0, c - x)
  void add_hinge_down(double c, double w) {
    if (right_.empty() || c <= right_bottom()) {
      left_[c - offset_] += w;
      sum_left_ += w;
      return;
    }
    const double bottom = right_bottom();
    double val = min_ + w * (c - bottom);
    right_[c - offset_] += w;
    sum_right_ += w;
    double crossed = 0.0;
    double pos = bottom;
    while (true) {
      auto it = right_.begin();
      const double p = it->first + offset_;
      val -= (w - crossed) * (p - pos);
      pos = p;
      if (crossed + it->second >= w) {
        const double moved = w - crossed;
        left_[it->first] += moved;
        sum_left_ += moved;
        sum_right_ -= moved;
        it->second -= moved;
        if (it->second <= 0.0) right_.erase(it);
        break;
      }
      crossed += it->second;
      left_[it->first] += it->second;
      sum_left_ += it->second;
      sum_right_ -= it->second;
      right_.erase(it);
    }
    min_ = val;
  }

  std::map<double, double> left_, right_;
  double sum_left_ = 0.0;
  double sum_right_ = 0.0;
  double offset_ = 0.0;
  double min_ = 0.0;
};

}  // namespace

double flat_split_value(const SignedChain& chain, double sup_budget, double lipschitz_budget) {
  const std::size_t k = chain.locations.size();
  if (k == 0 || sup_budget <= 0.0) return 0.0;
  const double lip = std::max(lipschitz_budget, 0.0);

  // f_j(T) = cheapest way to explain atoms 0..j with cumulative transported
  // flow T after atom j.
  ConvexBreakpoints f(sup_budget);
  f.shift(chain.net_mass[0]);
  for (std::size_t j = 1; j < k; ++j) {
    f.add_abs(0.0, lip * (chain.locations[j] - chain.locations[j - 1]));
    f.clip(sup_budget);
    f.shift(chain.net_mass[j]);
  }
  return f.value_at(0.0);
}

double flat_distance(const DiscreteMeasure& a, const DiscreteMeasure& b,
                     const FlatMetricOptions& options) {
  if (a.size() + b.size() > options.max_atoms) {
    throw CapacityError("flat_distance: " + std::to_string(a.size() + b.size()) +
                        " atoms exceed the limit of " + std::to_string(options.max_atoms));
  }
  const SignedChain chain = signed_difference(a, b);
  if (chain.locations.empty()) return 0.0;

  auto value = [&](double s) { return flat_split_value(chain, s, 1.0 - s); };

  // Golden-section search for the maximum of a concave function on [0, 1].
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = value(x1);
  double f2 = value(x2);
  double best = std::max({value(0.0), value(1.0), f1, f2});
  while (hi - lo > options.split_tolerance) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = value(x2);
      best = std::max(best, f2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = value(x1);
      best = std::max(best, f1);
    }
  }
  return std::max(best, 0.0);
}

}  // namespace ebt
