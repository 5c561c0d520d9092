#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/weights.hpp"

namespace dlab {

/// What GridFunction::eval does outside [t_min, t_max].
enum class Extension { None, Zero, ConstantTail };

/// A vector-valued function sampled on a uniform grid, with piecewise-linear
/// interpolation between nodes.
class GridFunction {
 public:
  GridFunction() = default;

  GridFunction(double t_min, double step, std::vector<Eigen::VectorXd> values,
               Extension ext = Extension::None)
      : t_min_(t_min), step_(step), values_(std::move(values)), ext_(ext) {
    if (values_.empty()) throw NumericError("GridFunction: empty grid");
    if (!(step_ > 0.0)) throw NumericError("GridFunction: step must be > 0");
    for (const auto& v : values_)
      if (!v.allFinite()) throw NumericError("GridFunction: non-finite value");
  }

  static GridFunction zeros(double t_min, double t_max, double step, int dim) {
    const int m = static_cast<int>(std::floor((t_max - t_min) / step + 0.5));
    std::vector<Eigen::VectorXd> vals(m + 1, Eigen::VectorXd::Zero(dim));
    return GridFunction(t_min, step, std::move(vals));
  }

  template <typename F>
  static GridFunction sample(double t_min, double t_max, double step, F&& f) {
    const int m = static_cast<int>(std::floor((t_max - t_min) / step + 0.5));
    std::vector<Eigen::VectorXd> vals;
    vals.reserve(m + 1);
    for (int i = 0; i <= m; ++i) vals.push_back(f(t_min + i * step));
    return GridFunction(t_min, step, std::move(vals));
  }

  double t_min() const { return t_min_; }
  double t_max() const { return t_min_ + step_ * (size() - 1); }
  double step() const { return step_; }
  int size() const { return static_cast<int>(values_.size()); }
  int dim() const { return static_cast<int>(values_.front().size()); }
  double grid_t(int i) const { return t_min_ + i * step_; }
  const Eigen::VectorXd& node(int i) const { return values_[i]; }
  Eigen::VectorXd& node(int i) { return values_[i]; }

  GridFunction& with_extension(Extension ext) {
    ext_ = ext;
    return *this;
  }
  Extension extension() const { return ext_; }

  Eigen::VectorXd eval(double t) const {
    const double slack = 1e-9 * std::max(1.0, std::abs(t_max()) + std::abs(t_min_));
    if (t < t_min_ - slack || t > t_max() + slack) {
      switch (ext_) {
        case Extension::Zero:
          return Eigen::VectorXd::Zero(dim());
        case Extension::ConstantTail:
          return t < t_min_ ? values_.front() : values_.back();
        case Extension::None:
          throw NumericError("GridFunction::eval outside grid without extension policy");
      }
    }
    double u = (t - t_min_) / step_;
    int i = static_cast<int>(std::floor(u));
    i = std::max(0, std::min(i, size() - 2));
    const double w = u - i;
    if (size() == 1) return values_[0];
    return (1.0 - w) * values_[i] + w * values_[i + 1];
  }

  double sup_norm() const {
    double s = 0.0;
    for (const auto& v : values_) s = std::max(s, v.template lpNorm<Eigen::Infinity>());
    return s;
  }

 private:
  double t_min_ = 0.0;
  double step_ = 1.0;
  std::vector<Eigen::VectorXd> values_;
  Extension ext_ = Extension::None;
};

/// Weighted L^p norm against dmu = dt/(1+t^2), by trapezoid quadrature;
/// p = infinity follows the weighted-sup definition sup |f(t)| omega(t).
inline double weighted_norm(const GridFunction& f, double p) {
  if (f.size() == 0) throw NumericError("weighted_norm: empty grid");
  if (std::isinf(p)) {
    double s = 0.0;
    for (int i = 0; i < f.size(); ++i)
      s = std::max(s, f.node(i).norm() * omega(f.grid_t(i)));
    return s;
  }
  if (!(p >= 1.0)) throw NumericError("weighted_norm: p must be >= 1 or inf");
  double acc = 0.0;
  for (int i = 0; i < f.size(); ++i) {
    const double w = (i == 0 || i == f.size() - 1) ? 0.5 : 1.0;
    acc += w * std::pow(f.node(i).norm(), p) * omega(f.grid_t(i));
  }
  return std::pow(acc * f.step(), 1.0 / p);
}

}  // namespace dlab
