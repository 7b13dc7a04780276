#include "hamlearn/optim.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "hamlearn/error.hpp"

namespace hamlearn {

std::string to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::Progress: return "progress";
    case LbfgsStatus::Converged: return "converged";
    case LbfgsStatus::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Probe {
  double a = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
  Vector g;
};

// Minimizer of the cubic through two probes; NaN when it does not exist.
double cubic_min(const Probe& p1, const Probe& p2) {
  const double d1 = p1.d + p2.d - 3.0 * (p1.f - p2.f) / (p1.a - p2.a);
  const double disc = d1 * d1 - p1.d * p2.d;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), p2.a - p1.a);
  return p2.a - (p2.a - p1.a) * (p2.d + d2 - d1) / (p2.d - p1.d + 2.0 * d2);
}

}  // namespace

Lbfgs::Lbfgs(Objective f, Vector x0, LbfgsOptions opt) : fn_(std::move(f)), opt_(opt) {
  if (opt_.history < 1) throw ConfigError("lbfgs history must be >= 1");
  if (opt_.max_line_search_evals < 1) throw ConfigError("lbfgs max_line_search_evals must be >= 1");
  if (!(opt_.c1 > 0.0 && opt_.c1 < opt_.c2 && opt_.c2 < 1.0)) throw ConfigError("need 0 < c1 < c2 < 1");
  reset(std::move(x0));
}

void Lbfgs::reset(Vector x) {
  s_.clear();
  y_.clear();
  rho_.clear();
  x_ = std::move(x);
  f_ = eval(x_, g_);
  if (!std::isfinite(f_)) throw TrainingError("objective is not finite at the starting point");
}

double Lbfgs::eval(const Vector& x, Vector& g) {
  ++evaluations_;
  g.resize(x.size());
  double f;
  try {
    f = fn_(x, g);
  } catch (const BlowupError&) {
    return kInf;
  }
  if (!std::isfinite(f) || !g.allFinite()) return kInf;
  return f;
}

// Two-loop recursion.
Vector Lbfgs::direction() const {
  Vector q = -g_;
  const std::size_t m = s_.size();
  std::vector<double> alpha(m);
  for (std::size_t i = m; i-- > 0;) {
    alpha[i] = rho_[i] * s_[i].dot(q);
    q -= alpha[i] * y_[i];
  }
  if (m > 0) q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = rho_[i] * y_[i].dot(q);
    q += (alpha[i] - beta) * s_[i];
  }
  return q;
}

LbfgsStatus Lbfgs::step() {
  if (g_.lpNorm<Eigen::Infinity>() < opt_.tolerance) return LbfgsStatus::Converged;

  for (int attempt = 0; attempt < 2; ++attempt) {
    Vector dir = direction();
    double d0 = g_.dot(dir);
    if (!(d0 < 0.0) || !dir.allFinite()) {
      s_.clear(); y_.clear(); rho_.clear();
      dir = -g_;
      d0 = g_.dot(dir);
    }
    const double a0 = s_.empty() ? std::min(1.0, 1.0 / g_.lpNorm<1>()) : 1.0;
    const double f0 = f_;
    int evals = 0;

    auto probe = [&](double a) {
      Probe p;
      p.a = a;
      p.f = eval(x_ + a * dir, p.g);
      p.d = std::isfinite(p.f) ? p.g.dot(dir) : kInf;
      ++evals;
      return p;
    };
    auto sufficient = [&](const Probe& p) { return std::isfinite(p.f) && p.f <= f0 + opt_.c1 * p.a * d0; };
    auto curvature = [&](const Probe& p) { return std::abs(p.d) <= -opt_.c2 * d0; };

    auto zoom = [&](Probe lo, Probe hi) -> std::optional<Probe> {
      while (evals < opt_.max_line_search_evals) {
        const double left = std::min(lo.a, hi.a), right = std::max(lo.a, hi.a);
        const double width = right - left;
        if (width <= 1e-16 * std::max(1.0, right)) return std::nullopt;
        double a = std::isfinite(hi.f) ? cubic_min(lo, hi) : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(a) || a < left + 0.1 * width || a > right - 0.1 * width) a = 0.5 * (lo.a + hi.a);
        Probe p = probe(a);
        if (!sufficient(p) || p.f >= lo.f) {
          hi = std::move(p);
        } else {
          if (curvature(p)) return p;
          if (p.d * (hi.a - lo.a) >= 0.0) hi = lo;
          lo = std::move(p);
        }
      }
      return std::nullopt;
    };

    std::optional<Probe> accepted;
    Probe prev{0.0, f0, d0, g_};
    double a = a0;
    for (bool first = true; evals < opt_.max_line_search_evals; first = false) {
      Probe p = probe(a);
      if (!sufficient(p) || (!first && p.f >= prev.f)) {
        accepted = zoom(prev, p);
        break;
      }
      if (curvature(p)) {
        accepted = std::move(p);
        break;
      }
      if (p.d >= 0.0) {
        accepted = zoom(p, prev);
        break;
      }
      prev = std::move(p);
      a *= 2.0;
    }

    if (accepted) {
      const Probe& p = *accepted;
      if (!sufficient(p) || !curvature(p))
        throw ContractError("line search accepted a step violating the strong Wolfe conditions");
      Vector s = p.a * dir;
      Vector y = p.g - g_;
      const double sy = s.dot(y);
      x_ += s;
      f_ = p.f;
      g_ = p.g;
      if (sy > 1e-12 * s.norm() * y.norm()) {
        if (static_cast<int>(s_.size()) == opt_.history) {
          s_.erase(s_.begin());
          y_.erase(y_.begin());
          rho_.erase(rho_.begin());
        }
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        rho_.push_back(1.0 / sy);
      }
      ++iterations_;
      return g_.lpNorm<Eigen::Infinity>() < opt_.tolerance ? LbfgsStatus::Converged : LbfgsStatus::Progress;
    }
    if (s_.empty()) break;  // already steepest descent
    s_.clear(); y_.clear(); rho_.clear();
  }
  return LbfgsStatus::LineSearchFailed;
}

LbfgsResult lbfgs_minimize(const Objective& f, Vector x0, int max_iters, const LbfgsOptions& opt) {
  Lbfgs solver(f, std::move(x0), opt);
  LbfgsResult r;
  if (solver.grad().lpNorm<Eigen::Infinity>() < opt.tolerance) r.status = LbfgsStatus::Converged;
  for (int i = 0; i < max_iters && r.status == LbfgsStatus::Progress; ++i) r.status = solver.step();
  r.x = solver.x();
  r.f = solver.f();
  r.iterations = solver.iterations();
  r.evaluations = solver.evaluations();
  return r;
}

Adam::Adam(Eigen::Index n, AdamOptions opt) : opt_(opt), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {
  if (!(opt_.lr > 0.0)) throw ConfigError("adam lr must be positive");
  if (!(opt_.beta1 >= 0.0 && opt_.beta1 < 1.0 && opt_.beta2 >= 0.0 && opt_.beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
}

void Adam::step(Vector& x, const Vector& grad) {
  if (grad.size() != m_.size()) throw ShapeError("adam gradient", m_.size(), grad.size());
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  x.array() -= opt_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
}

}  // namespace hamlearn
