#include "lts/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lts {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinePoint {
  double step = 0.0;
  double value = kInf;
  double slope = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, double f0,
             double slope0, int* evals)
      : f_(f), x_(x), dir_(dir), f0_(f0), d0_(slope0), evals_(evals) {}

  // Returns true with `out` set on success (strong Wolfe, c1 = 1e-4, c2 = 0.9).
  bool run(double step0, LinePoint& out) {
    LinePoint prev{0.0, f0_, d0_, x_, {}};
    double step = step0;
    for (int i = 0; i < 40; ++i) {
      LinePoint cur = eval(step);
      if (!armijo(cur) || (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -kC2 * d0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) {
        return zoom(cur, prev, out);
      }
      prev = std::move(cur);
      step *= 2.0;
    }
    return false;
  }

 private:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;

  LinePoint eval(double step) {
    LinePoint p;
    p.step = step;
    p.x = x_ + step * dir_;
    p.grad.resize(x_.size());
    p.value = f_(p.x, &p.grad);
    ++*evals_;
    if (!std::isfinite(p.value) || !p.grad.allFinite()) {
      p.value = kInf;
      p.slope = 0.0;
    } else {
      p.slope = p.grad.dot(dir_);
    }
    return p;
  }

  bool armijo(const LinePoint& p) const {
    return std::isfinite(p.value) && p.value <= f0_ + kC1 * p.step * d0_;
  }

  bool zoom(LinePoint lo, LinePoint hi, LinePoint& out) {
    for (int i = 0; i < 40; ++i) {
      double step;
      const double width = hi.step - lo.step;
      if (std::isfinite(hi.value)) {
        // Quadratic through lo (value, slope) and hi (value).
        const double denom = 2.0 * (hi.value - lo.value - lo.slope * width);
        step = denom > 0.0 ? lo.step - lo.slope * width * width / denom : lo.step + 0.5 * width;
      } else {
        step = lo.step + 0.5 * width;
      }
      const double a = std::min(lo.step, hi.step);
      const double b = std::max(lo.step, hi.step);
      const double margin = 0.1 * (b - a);
      if (!(step > a + margin && step < b - margin)) {
        step = 0.5 * (a + b);
      }
      LinePoint cur = eval(step);
      if (!armijo(cur) || cur.value >= lo.value) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kC2 * d0_) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.step - lo.step) >= 0.0) {
          hi = lo;
        }
        lo = std::move(cur);
      }
      if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) {
        break;
      }
    }
    // Accept a point with sufficient decrease even without the curvature condition.
    if (lo.step > 0.0 && armijo(lo)) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const Objective& f_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  double f0_;
  double d0_;
  int* evals_;
};

}  // namespace

OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opts) {
  const auto dim = x0.size();
  OptimResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(dim);
  res.value = f(res.x, &g);
  res.evaluations = 1;
  if (dim == 0) {
    res.converged = true;
    return res;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);
  bool identity = true;
  int stalls = 0;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opts.max_evaluations) {
      break;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      identity = true;
      dir = -g;
      slope = g.dot(dir);
    }
    const double step0 = identity ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
    LinePoint next;
    LineSearch ls(f, res.x, dir, res.value, slope, &res.evaluations);
    if (!ls.run(step0, next)) {
      if (!identity) {
        h.setIdentity();
        identity = true;
        continue;
      }
      // No descent possible along the gradient: numerically at a stationary point.
      res.converged = g.lpNorm<Eigen::Infinity>() <= std::sqrt(opts.grad_tol);
      break;
    }
    const Eigen::VectorXd s = next.x - res.x;
    const Eigen::VectorXd y = next.grad - g;
    const double drop = res.value - next.value;
    res.x = std::move(next.x);
    g = std::move(next.grad);
    const double old_value = res.value;
    res.value = next.value;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) {
        h *= sy / y.squaredNorm();
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      const double yhy = y.dot(hy);
      h += ((sy + yhy) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      identity = false;
    }
    if (drop <= opts.rel_tol * std::max(1.0, std::abs(old_value))) {
      if (++stalls >= 3) {
        res.converged = true;
        break;
      }
    } else {
      stalls = 0;
    }
  }
  return res;
}

OptimResult minimize_nelder_mead(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opts) {
  const auto dim = static_cast<int>(x0.size());
  OptimResult res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x, nullptr);
    return std::isfinite(v) ? v : kInf;
  };
  if (dim == 0) {
    res.x = x0;
    res.value = eval(x0);
    res.converged = true;
    return res;
  }

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(dim + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(dim + 1));
  for (int i = 0; i < dim; ++i) {
    pts[static_cast<std::size_t>(i + 1)][i] += opts.initial_step;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vals[i] = eval(pts[i]);
  }
  std::vector<int> order(static_cast<std::size_t>(dim + 1));

  for (res.iterations = 0; res.iterations < opts.max_iterations * dim; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)]; });
    const auto best = static_cast<std::size_t>(order.front());
    const auto worst = static_cast<std::size_t>(order.back());
    const auto second = static_cast<std::size_t>(order[order.size() - 2]);

    double spread = 0.0;
    for (const auto& p : pts) {
      spread = std::max(spread, (p - pts[best]).lpNorm<Eigen::Infinity>());
    }
    if (vals[worst] - vals[best] <= opts.rel_tol * (std::abs(vals[best]) + 1e-12) && spread < 1e-7) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opts.max_evaluations) {
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != worst) {
        centroid += pts[i];
      }
    }
    centroid /= dim;

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != best) {
        pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
        vals[i] = eval(pts[i]);
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.value = vals[best];
  return res;
}

}  // namespace lts
