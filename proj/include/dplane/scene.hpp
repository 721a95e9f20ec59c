#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>
#include <vector>

#include "dplane/errors.hpp"

namespace dplane {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline void require_unit(const Vec& v, const char* what, double tol = 1e-9) {
  if (std::abs(v.norm() - 1.0) > tol) {
    std::ostringstream os;
    os << what << " must be a unit vector (|v| = " << v.norm() << ")";
    throw InputError(os.str());
  }
}

inline void require_spd(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) throw ConfigError(std::string(what) + " must be square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    throw ConfigError(std::string(what) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError(std::string(what) + " must be positive definite");
}

// Ellipsoid {x : (x-c)^T Q (x-c) <= 1}.
class ConvexBody {
 public:
  ConvexBody(Vec center, Mat shape, int label = 0)
      : center_(std::move(center)), shape_(std::move(shape)), label_(label) {
    if (center_.size() != shape_.rows())
      throw ConfigError("body center and shape matrix dimensions differ");
    require_spd(shape_, "body shape matrix");
    shape_inv_ = shape_.inverse();
    shape_inv_ = 0.5 * (shape_inv_ + shape_inv_.transpose()).eval();
    sqrt_det_ = std::sqrt(shape_.determinant());
  }

  static ConvexBody ball(Vec center, double radius, int label = 0) {
    if (!(radius > 0.0)) throw ConfigError("ball radius must be positive");
    const auto n = center.size();
    return ConvexBody(std::move(center), Mat::Identity(n, n) / (radius * radius), label);
  }

  int dimension() const { return static_cast<int>(center_.size()); }
  const Vec& center() const { return center_; }
  const Mat& shape() const { return shape_; }
  const Mat& shape_inverse() const { return shape_inv_; }
  double sqrt_det_shape() const { return sqrt_det_; }
  int label() const { return label_; }

  // sqrt(w^T Q^{-1} w): support function of the body centered at the origin.
  // Positively homogeneous of degree one, so w need not be unit.
  double centered_support(const Vec& w) const { return std::sqrt(w.dot(shape_inv_ * w)); }

  double quadratic_form(const Vec& x) const {
    const Vec d = x - center_;
    return d.dot(shape_ * d);
  }

  bool contains(const Vec& x) const { return quadratic_form(x) <= 1.0; }

  // Axis-aligned bounding box.
  std::pair<Vec, Vec> bounds() const {
    const Vec half = shape_inv_.diagonal().cwiseSqrt();
    return {center_ - half, center_ + half};
  }

  double max_radius() const {
    Eigen::SelfAdjointEigenSolver<Mat> eig(shape_);
    return 1.0 / std::sqrt(eig.eigenvalues().minCoeff());
  }

 private:
  Vec center_;
  Mat shape_;
  Mat shape_inv_;
  double sqrt_det_ = 1.0;
  int label_ = 0;
};

struct BoundaryPoint {
  Vec point;
  Vec normal;
};

inline double support_value(const ConvexBody& body, const Vec& direction) {
  require_unit(direction, "support direction");
  return direction.dot(body.center()) + body.centered_support(direction);
}

// The boundary point maximizing direction.x; for an ellipsoid its outward
// normal is the direction itself.
inline BoundaryPoint boundary_point_and_normal(const ConvexBody& body, const Vec& direction) {
  require_unit(direction, "support direction");
  const Vec qw = body.shape_inverse() * direction;
  const Vec y = body.center() + qw / std::sqrt(direction.dot(qw));
  Vec normal = body.shape() * (y - body.center());
  normal.normalize();
  return {y, normal};
}

// Anisotropic Gaussian amplitude * exp(-(x-m)^T Sigma^{-1} (x-m) / 2).
class GaussianBump {
 public:
  GaussianBump(Vec center, Mat covariance, double amplitude)
      : center_(std::move(center)), cov_(std::move(covariance)), amplitude_(amplitude) {
    if (center_.size() != cov_.rows())
      throw ConfigError("bump center and covariance dimensions differ");
    require_spd(cov_, "bump covariance");
    precision_ = cov_.inverse();
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
    det_cov_ = cov_.determinant();
  }

  const Vec& center() const { return center_; }
  const Mat& covariance() const { return cov_; }
  const Mat& precision() const { return precision_; }
  double amplitude() const { return amplitude_; }
  double det_covariance() const { return det_cov_; }

  double value(const Vec& x) const {
    const Vec d = x - center_;
    return amplitude_ * std::exp(-0.5 * d.dot(precision_ * d));
  }

  // Integral over R^n.
  double mass() const {
    const double n = static_cast<double>(center_.size());
    return amplitude_ * std::pow(2.0 * std::numbers::pi, 0.5 * n) * std::sqrt(det_cov_);
  }

  // Box of +-`radii` standard deviations per axis.
  std::pair<Vec, Vec> bounds(double radii) const {
    const Vec half = radii * cov_.diagonal().cwiseSqrt();
    return {center_ - half, center_ + half};
  }

 private:
  Vec center_;
  Mat cov_;
  Mat precision_;
  double amplitude_;
  double det_cov_ = 1.0;
};

// Signed gap between two bodies: positive distance when disjoint, minus the
// penetration depth otherwise. Maximizes -h_a(w) - h_b(-w) over unit w.
inline double separation(const ConvexBody& a, const ConvexBody& b) {
  const int n = a.dimension();
  auto gap = [&](const Vec& w) {
    return -(w.dot(a.center()) + a.centered_support(w)) -
           ((-w).dot(b.center()) + b.centered_support(w));
  };
  Vec best = Vec::Zero(n);
  double best_gap = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec& w) {
    const double g = gap(w);
    if (g > best_gap) {
      best_gap = g;
      best = w;
    }
  };
  if (n == 2) {
    constexpr int kSamples = 720;
    for (int i = 0; i < kSamples; ++i) {
      const double t = 2.0 * std::numbers::pi * i / kSamples;
      Vec w(2);
      w << std::cos(t), std::sin(t);
      consider(w);
    }
  } else {
    constexpr int kSamples = 4000;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < kSamples; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / kSamples;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec w(3);
      w << r * std::cos(golden * i), r * std::sin(golden * i), z;
      consider(w);
    }
  }
  // Projected ascent; the gradient is the difference of support points.
  double step = 0.1;
  for (int iter = 0; iter < 400 && step > 1e-14; ++iter) {
    const Vec qa = a.shape_inverse() * best;
    const Vec qb = b.shape_inverse() * best;
    const Vec grad = -(a.center() + qa / std::sqrt(best.dot(qa))) +
                     (b.center() - qb / std::sqrt(best.dot(qb)));
    Vec trial = best + step * grad;
    trial.normalize();
    const double g = gap(trial);
    if (g > best_gap) {
      best_gap = g;
      best = trial;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
  }
  return best_gap;
}

class Scene {
 public:
  Scene(int dimension, std::vector<ConvexBody> bodies, std::vector<GaussianBump> background,
        double alpha = 0.0, double min_separation = 0.0)
      : dimension_(dimension),
        bodies_(std::move(bodies)),
        background_(std::move(background)),
        alpha_(alpha) {
    if (dimension_ != 2 && dimension_ != 3)
      throw ConfigError("scene dimension must be 2 or 3");
    if (!(alpha_ >= 0.0)) throw ConfigError("alpha must be >= 0");
    for (const auto& b : bodies_)
      if (b.dimension() != dimension_) throw ConfigError("body dimension differs from scene");
    for (const auto& g : background_)
      if (g.center().size() != dimension_)
        throw ConfigError("background bump dimension differs from scene");
    for (std::size_t j = 0; j < bodies_.size(); ++j)
      for (std::size_t k = j + 1; k < bodies_.size(); ++k) {
        const double gap = separation(bodies_[j], bodies_[k]);
        if (!(gap > min_separation)) {
          std::ostringstream os;
          os << "assumption (A) violated: bodies " << bodies_[j].label() << " and "
             << bodies_[k].label() << " are separated by " << gap
             << " (required > " << min_separation << ")";
          throw ConfigError(os.str());
        }
      }
  }

  int dimension() const { return dimension_; }
  const std::vector<ConvexBody>& bodies() const { return bodies_; }
  const std::vector<GaussianBump>& background() const { return background_; }
  double alpha() const { return alpha_; }

  Scene metal_only() const { return Scene(dimension_, bodies_, {}, alpha_); }
  Scene background_only() const { return Scene(dimension_, {}, background_, alpha_); }

  // Bounding box of the bodies and of the bumps truncated at `bump_radii`
  // standard deviations. Empty scenes give an empty (lo > hi) box.
  std::pair<Vec, Vec> bounds(double bump_radii = 5.0) const {
    Vec lo = Vec::Constant(dimension_, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(dimension_, -std::numeric_limits<double>::infinity());
    auto grow = [&](const std::pair<Vec, Vec>& box) {
      lo = lo.cwiseMin(box.first);
      hi = hi.cwiseMax(box.second);
    };
    for (const auto& b : bodies_) grow(b.bounds());
    for (const auto& g : background_) grow(g.bounds(bump_radii));
    return {lo, hi};
  }

 private:
  int dimension_;
  std::vector<ConvexBody> bodies_;
  std::vector<GaussianBump> background_;
  double alpha_;
};

// chi_D(x).
inline double indicator(const Scene& scene, const Vec& x) {
  for (const auto& b : scene.bodies())
    if (b.contains(x)) return 1.0;
  return 0.0;
}

inline double background_value(const Scene& scene, const Vec& x) {
  double v = 0.0;
  for (const auto& g : scene.background()) v += g.value(x);
  return v;
}

// chi_D + background: the function whose transforms the library computes.
inline double attenuation(const Scene& scene, const Vec& x) {
  return indicator(scene, x) + background_value(scene, x);
}

}  // namespace dplane
