#pragma once

#include <Eigen/Dense>
#include <functional>

// Max-norm relative difference, guarded against a vanishing reference.
inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-12);
  return (a - ref).cwiseAbs().maxCoeff() / scale;
}

inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                    double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}
