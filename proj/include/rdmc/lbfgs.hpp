#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (Nocedal & Wright,
// Algorithms 3.5/3.6 and 7.4).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace rdmc {

struct LbfgsOptions {
  int memory = 10;
  int max_iter = 15000;
  double grad_tol = 1e-8;  // stop when ||g||_2 < grad_tol
  int max_linesearch = 40;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  bool record_trace = true;
};

enum class LbfgsStatus { converged, max_iter, line_search_failed, non_finite };

inline std::string_view to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::converged: return "converged";
    case LbfgsStatus::max_iter: return "max_iter";
    case LbfgsStatus::line_search_failed: return "line_search_failed";
    case LbfgsStatus::non_finite: return "non_finite";
  }
  return "?";
}

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::max_iter;
  std::vector<double> trace;  // objective after each accepted step, starting with f(x0)

  bool converged() const { return status == LbfgsStatus::converged; }
};

namespace detail {

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), clamped to [lo, hi].
inline double cubic_step(double a, double fa, double da, double b, double fb, double db, double lo,
                         double hi) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  if (!std::isfinite(t)) t = 0.5 * (a + b);
  return std::clamp(t, lo, hi);
}

struct LinePoint {
  double step = 0.0;
  double f = 0.0;
  double slope = 0.0;
};

}  // namespace detail

/// Minimizes fn, where fn(x, grad) returns f(x) and writes the gradient into grad.
template <class Fn>
LbfgsResult lbfgs_minimize(Fn&& fn, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  using Eigen::VectorXd;
  LbfgsResult res;
  res.x = std::move(x0);
  const auto n = res.x.size();
  VectorXd g(n);
  res.f = fn(res.x, g);
  ++res.evaluations;
  if (!std::isfinite(res.f) || !g.allFinite()) {
    res.status = LbfgsStatus::non_finite;
    return res;
  }
  if (opt.record_trace) res.trace.push_back(res.f);

  std::deque<std::pair<VectorXd, VectorXd>> history;  // (s, y)
  std::vector<double> alpha(static_cast<std::size_t>(opt.memory));
  VectorXd trial(n), g_trial(n), direction(n);
  bool restarted = false;

  for (res.iterations = 0;; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm < opt.grad_tol) {
      res.status = LbfgsStatus::converged;
      return res;
    }
    if (res.iterations >= opt.max_iter) {
      res.status = LbfgsStatus::max_iter;
      return res;
    }

    // Two-loop recursion.
    direction = -g;
    for (std::size_t i = history.size(); i-- > 0;) {
      const auto& [s, y] = history[i];
      alpha[i] = s.dot(direction) / y.dot(s);
      direction -= alpha[i] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      direction *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      const double beta = y.dot(direction) / y.dot(s);
      direction += (alpha[i] - beta) * s;
    }
    double slope0 = g.dot(direction);
    if (!(slope0 < 0.0)) {
      history.clear();
      direction = -g;
      slope0 = -g.squaredNorm();
    }

    const double f0 = res.f;
    auto evaluate = [&](double step) {
      trial = res.x + step * direction;
      const double f = fn(trial, g_trial);
      ++res.evaluations;
      return detail::LinePoint{step, f, g_trial.dot(direction)};
    };
    auto armijo_fails = [&](const detail::LinePoint& p) {
      return !std::isfinite(p.f) || p.f > f0 + opt.c1 * p.step * slope0;
    };
    auto curvature_ok = [&](const detail::LinePoint& p) {
      return std::abs(p.slope) <= -opt.c2 * slope0;
    };

    double step = history.empty() ? std::min(1.0, 1.0 / std::max(direction.norm(), 1e-300)) : 1.0;
    if (res.iterations == 0 || restarted) step = std::min(1.0, 1.0 / std::max(g.norm(), 1e-300));

    bool accepted = false;
    detail::LinePoint prev{0.0, f0, slope0};
    detail::LinePoint best = prev;
    VectorXd best_x, best_g;
    auto keep_if_better = [&](const detail::LinePoint& p) {
      if (std::isfinite(p.f) && p.f < best.f && g_trial.allFinite()) {
        best = p;
        best_x = trial;
        best_g = g_trial;
      }
    };

    auto zoom = [&](detail::LinePoint lo, detail::LinePoint hi, int budget) {
      for (int it = 0; it < budget; ++it) {
        const double width = hi.step - lo.step;
        if (std::abs(width) <= 1e-16 * std::max(1.0, std::abs(lo.step))) break;
        double t;
        if (std::isfinite(hi.f)) {
          const double a = std::min(lo.step, hi.step), b = std::max(lo.step, hi.step);
          t = detail::cubic_step(lo.step, lo.f, lo.slope, hi.step, hi.f, hi.slope,
                                 a + 0.1 * (b - a), b - 0.1 * (b - a));
        } else {
          t = lo.step + 0.5 * width;
        }
        const auto p = evaluate(t);
        keep_if_better(p);
        if (armijo_fails(p) || p.f >= lo.f) {
          hi = p;
        } else {
          if (curvature_ok(p)) return true;
          if (p.slope * (hi.step - lo.step) >= 0.0) hi = lo;
          lo = p;
        }
      }
      return false;
    };

    for (int ls = 0; ls < opt.max_linesearch; ++ls) {
      const auto p = evaluate(step);
      keep_if_better(p);
      if (armijo_fails(p) || (ls > 0 && p.f >= prev.f)) {
        accepted = zoom(prev, p, opt.max_linesearch);
        break;
      }
      if (curvature_ok(p)) {
        accepted = true;
        break;
      }
      if (p.slope >= 0.0) {
        accepted = zoom(p, prev, opt.max_linesearch);
        break;
      }
      prev = p;
      step *= 2.0;
    }

    // A point with sufficient decrease is usable even if curvature was not reached.
    if (!accepted && best.step > 0.0 && best.f <= f0 + opt.c1 * best.step * slope0) accepted = true;

    if (!accepted || best.step == 0.0) {
      if (!restarted && !history.empty()) {
        history.clear();
        restarted = true;
        continue;
      }
      res.status = LbfgsStatus::line_search_failed;
      res.grad_norm = g.norm();
      return res;
    }
    restarted = false;

    VectorXd s = best_x - res.x;
    VectorXd y = best_g - g;
    res.x = std::move(best_x);
    g = std::move(best_g);
    res.f = best.f;
    if (opt.record_trace) res.trace.push_back(res.f);
    if (!std::isfinite(res.f)) {
      res.status = LbfgsStatus::non_finite;
      return res;
    }
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(history.size()) == opt.memory) history.pop_front();
      history.emplace_back(std::move(s), std::move(y));
    }
  }
}

}  // namespace rdmc
