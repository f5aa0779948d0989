#include "coxht/numcore/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "coxht/errors.hpp"

namespace coxht {

double solve_scalar_root(const ScalarFn& f, double lo, double hi, double tol) {
  if (!(lo <= hi)) throw std::invalid_argument("solve_scalar_root: lo must not exceed hi");
  const double flo = f(lo);
  const double fhi = f(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi))
    throw NumericalError("solve_scalar_root: non-finite function value at an endpoint");
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (std::signbit(flo) == std::signbit(fhi)) {
    std::ostringstream msg;
    msg << "solve_scalar_root: [" << lo << ", " << hi << "] does not bracket a root (f = " << flo
        << ", " << fhi << ")";
    throw BracketError(msg.str());
  }
  std::uintmax_t max_iter = 500;
  const auto done = [tol](double a, double b) { return std::abs(b - a) <= tol; };
  double last_x = lo;
  double last_f = flo;
  const auto g = [&](double x) {
    last_x = x;
    last_f = f(x);
    return last_f;
  };
  // toms748 stops on bracket width; a probe already within tol in value ends it early
  const auto [a, b] = boost::math::tools::toms748_solve(
      [&](double x) {
        const double v = g(x);
        return std::abs(v) <= tol ? 0.0 : v;
      },
      lo, hi, flo, fhi, done, max_iter);
  if (std::abs(last_f) <= tol && last_x >= a && last_x <= b) return last_x;
  return 0.5 * (a + b);
}

ScalarExtremum golden_section_extremum(const ScalarFn& f, double lo, double hi, double tol,
                                       Sense sense) {
  if (!(lo < hi)) throw std::invalid_argument("golden_section_extremum: need lo < hi");
  const double sign = sense == Sense::minimize ? 1.0 : -1.0;
  const auto g = [&](double x) { return sign * f(x); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = g(c), fd = g(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = g(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = g(d);
    }
  }
  // report the best probe inside the final bracket
  double x = fc <= fd ? c : d;
  double fx = std::min(fc, fd);
  const double mid = 0.5 * (a + b);
  const double fmid = g(mid);
  if (fmid < fx) {
    x = mid;
    fx = fmid;
  }
  return {x, sign * fx};
}

namespace {

struct Simplex {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> values;
};

[[noreturn]] void throw_non_finite(const Eigen::VectorXd& x, double value) {
  std::ostringstream msg;
  msg << "nelder_mead_min: non-finite objective " << value << " at (";
  for (Eigen::Index i = 0; i < x.size(); ++i) msg << (i ? ", " : "") << x[i];
  msg << ")";
  throw NumericalError(msg.str());
}

double diameter(const Simplex& s, std::size_t best) {
  double d = 0.0;
  for (const auto& p : s.points) d = std::max(d, (p - s.points[best]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

NelderMeadResult nelder_mead_min(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, const NelderMeadOptions& options) {
  const Eigen::Index dim = x0.size();
  if (dim < 1) throw std::invalid_argument("nelder_mead_min: empty start point");

  NelderMeadResult result;
  const auto eval = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    ++result.evaluations;
    if (!std::isfinite(v)) throw_non_finite(x, v);
    return v;
  };

  Eigen::VectorXd start = x0;
  double start_value = eval(start);
  int restarts_left = options.restarts;

  while (true) {
    Simplex s;
    s.points.push_back(start);
    s.values.push_back(start_value);
    for (Eigen::Index i = 0; i < dim; ++i) {
      Eigen::VectorXd p = start;
      p[i] += options.initial_step * std::max(1.0, std::abs(start[i]));
      s.points.push_back(p);
      s.values.push_back(eval(p));
    }

    std::vector<std::size_t> idx(s.points.size());
    bool converged = false;
    while (result.iterations < options.max_iter) {
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return s.values[a] < s.values[b]; });
      if (diameter(s, idx.front()) <= options.tol) {
        converged = true;
        break;
      }
      ++result.iterations;
      const std::size_t worst = idx.back();
      const std::size_t second_worst = idx[idx.size() - 2];
      const std::size_t best = idx.front();

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
      for (std::size_t k = 0; k + 1 < idx.size(); ++k) centroid += s.points[idx[k]];
      centroid /= static_cast<double>(dim);

      const Eigen::VectorXd reflected = centroid + (centroid - s.points[worst]);
      const double f_reflected = eval(reflected);
      if (f_reflected < s.values[best]) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - s.points[worst]);
        const double f_expanded = eval(expanded);
        if (f_expanded < f_reflected) {
          s.points[worst] = expanded;
          s.values[worst] = f_expanded;
        } else {
          s.points[worst] = reflected;
          s.values[worst] = f_reflected;
        }
        continue;
      }
      if (f_reflected < s.values[second_worst]) {
        s.points[worst] = reflected;
        s.values[worst] = f_reflected;
        continue;
      }
      const bool outside = f_reflected < s.values[worst];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (s.points[worst] - centroid));
      const double f_contracted = eval(contracted);
      if (f_contracted < (outside ? f_reflected : s.values[worst])) {
        s.points[worst] = contracted;
        s.values[worst] = f_contracted;
        continue;
      }
      for (std::size_t k = 1; k < idx.size(); ++k) {
        const std::size_t j = idx[k];
        s.points[j] = s.points[best] + 0.5 * (s.points[j] - s.points[best]);
        s.values[j] = eval(s.points[j]);
      }
    }

    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t best = *std::min_element(
        idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.values[a] < s.values[b]; });
    const bool improved = s.values[best] < start_value;
    start = s.points[best];
    start_value = s.values[best];
    result.converged = converged;
    if (!converged || restarts_left == 0) break;
    // a restart that cannot improve confirms the minimum
    if (!improved && restarts_left < options.restarts) break;
    --restarts_left;
  }

  result.x = start;
  result.value = start_value;
  return result;
}

}  // namespace coxht
