#pragma once

#include <soibag/geometry.hpp>
#include <soibag/types.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace soibag {

struct GmmConfig {
  double outlier_weight = 0.1;    // mu, uniform-component weight in [0, 1)
  double sigma2_init = 2.5e-5;    // (5 mm)^2
  int max_iters = 50;
  double loglik_tol = 1e-6;       // relative log-likelihood change
  double smoothness_weight = 1.0; // tau, cyclic second-difference Tikhonov

  void validate() const {
    if (outlier_weight < 0.0 || outlier_weight >= 1.0)
      throw ValidationError("outlier_weight must be in [0, 1)");
    if (!(sigma2_init > 0.0)) throw ValidationError("sigma2_init must be > 0");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  }
};

struct EstimateReport {
  RimState rim;
  double loglik = 0.0;
  int iterations = 0;
  double sigma2_final = 0.0;
  std::vector<double> loglik_trace;  // one entry per EM iteration
};

// First-frame bootstrap: FPS keypoints ordered by polar angle in the cloud's
// best-fit plane.
inline RimState init_rim(const PointCloud& cloud, int n_x) {
  const int n_p = static_cast<int>(cloud.cols());
  if (n_x < 8) throw TooFewPoints("rim needs at least 8 keypoints");
  if (n_p < n_x) throw TooFewPoints("cloud smaller than requested keypoint count");
  const PlaneBasis plane = fit_plane(cloud);
  const std::vector<int> picked = fps_indices(cloud, n_x, 0);
  std::vector<std::pair<double, int>> by_angle;
  by_angle.reserve(n_x);
  for (int idx : picked) {
    const Vec3 d = cloud.col(idx) - plane.origin;
    by_angle.emplace_back(std::atan2(d.dot(plane.ey), d.dot(plane.ex)), idx);
  }
  std::sort(by_angle.begin(), by_angle.end());
  Mat3X kp(3, n_x);
  for (int i = 0; i < n_x; ++i) kp.col(i) = cloud.col(by_angle[i].second);
  RimState rim(std::move(kp));
  rim.validate();
  return rim;
}

namespace detail {

// Cyclic second-difference matrix L (n x n).
inline MatX cyclic_second_difference(int n) {
  MatX l = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    l(i, (i + n - 1) % n) = 1.0;
    l(i, i) = -2.0;
    l(i, (i + 1) % n) = 1.0;
  }
  return l;
}

}  // namespace detail

// GMM/EM rim estimator: n_x isotropic Gaussian components with equal weights
// (1 - mu)/n_x plus a uniform outlier component over the cloud bounding box.
// After each M-step the centroid *displacement* is smoothed by a cyclic
// second-difference Tikhonov step, which preserves the prior's structure and
// keeps exact inputs fixed points of the iteration.
//
// sigma2_carry, when positive, overrides cfg.sigma2_init so a tracking loop
// can carry the variance across frames.
inline EstimateReport estimate_rim(const PointCloud& cloud, const RimState& prior,
                                   const GmmConfig& cfg,
                                   double sigma2_carry = -1.0) {
  cfg.validate();
  const int n_p = static_cast<int>(cloud.cols());
  const int n_x = prior.size();
  if (n_p < n_x) throw TooFewPoints("cloud smaller than keypoint count");
  if (!cloud.allFinite()) throw ValidationError("cloud has non-finite points");

  const double mu = cfg.outlier_weight;
  // Uniform outlier density over the cloud's axis-aligned bounding box,
  // extents floored to keep the density finite for planar clouds.
  const Vec3 lo = cloud.rowwise().minCoeff();
  const Vec3 hi = cloud.rowwise().maxCoeff();
  double volume = 1.0;
  for (int i = 0; i < 3; ++i) volume *= std::max(hi(i) - lo(i), 1e-3);
  const double uniform_density = mu > 0.0 ? mu / volume : 0.0;

  Mat3X x = prior.keypoints;
  double sigma2 = sigma2_carry > 0.0 ? sigma2_carry : cfg.sigma2_init;

  // Tikhonov smoothing system (I + tau * L^T L), factored once.
  const double tau = cfg.smoothness_weight;
  Eigen::LLT<MatX> smooth_llt;
  if (tau > 0.0) {
    const MatX l = detail::cyclic_second_difference(n_x);
    smooth_llt.compute(MatX::Identity(n_x, n_x) + tau * l.transpose() * l);
  }

  EstimateReport report;
  double loglik_prev = -std::numeric_limits<double>::infinity();

  const double log_uniform = uniform_density > 0.0
                                 ? std::log(uniform_density)
                                 : -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma2);
    const double log_gauss_norm =
        std::log((1.0 - mu) / n_x) - 1.5 * std::log(2.0 * kPi * sigma2);

    // E-step: responsibilities accumulated directly into sufficient
    // statistics (long double sums keep the result independent of cloud
    // point order to well below 1e-12). Densities are handled in log space
    // around the dominant component so distant points cannot underflow the
    // mixture to zero.
    std::vector<long double> s0(n_x, 0.0L);
    Eigen::Matrix<long double, 3, Eigen::Dynamic> s1(3, n_x);
    s1.setZero();
    long double s2 = 0.0L;  // sum_mn r_mn |p_m|^2
    long double loglik = 0.0L;
    std::vector<double> d2(n_x);

    for (int m = 0; m < n_p; ++m) {
      const Vec3 p = cloud.col(m);
      double d2_min = std::numeric_limits<double>::infinity();
      for (int n = 0; n < n_x; ++n) {
        d2[n] = (p - x.col(n)).squaredNorm();
        d2_min = std::min(d2_min, d2[n]);
      }
      long double gauss_scaled = 0.0L;  // sum_n exp(-(d2 - d2_min)/2s2)
      for (int n = 0; n < n_x; ++n)
        gauss_scaled += std::exp(-(d2[n] - d2_min) * inv_two_sigma2);
      const double log_peak = log_gauss_norm - d2_min * inv_two_sigma2;
      // uniform component expressed relative to the Gaussian peak
      const double uniform_ratio =
          uniform_density > 0.0 ? std::exp(log_uniform - log_peak) : 0.0;
      if (!std::isfinite(uniform_ratio)) {
        // Gaussian part negligible: the point belongs to the outlier term.
        loglik += log_uniform;
        continue;
      }
      const long double denom = gauss_scaled + uniform_ratio;
      loglik += log_peak + std::log(static_cast<double>(denom));
      const double scale = 1.0 / static_cast<double>(denom);
      const double p2 = p.squaredNorm();
      for (int n = 0; n < n_x; ++n) {
        const double r = scale * std::exp(-(d2[n] - d2_min) * inv_two_sigma2);
        s0[n] += r;
        s1.col(n) += (r * p).cast<long double>();
        s2 += static_cast<long double>(r) * p2;
      }
    }
    if (!std::isfinite(static_cast<double>(loglik)))
      throw NonFiniteLikelihood("log-likelihood is not finite");

    report.loglik_trace.push_back(static_cast<double>(loglik));
    report.iterations = iter + 1;

    // M-step: responsibility-weighted means, displacement-smoothed.
    Mat3X x_raw = x;
    for (int n = 0; n < n_x; ++n) {
      if (s0[n] > 1e-300)
        x_raw.col(n) = (s1.col(n) / s0[n]).cast<double>();
    }
    if (tau > 0.0) {
      const MatX delta = (x_raw - x).transpose();           // n_x x 3
      x += smooth_llt.solve(delta).transpose();
    } else {
      x = x_raw;
    }

    // sigma^2 from the responsibility-weighted squared residuals about the
    // updated centroids, floored to keep later E-steps well defined.
    long double total_r = 0.0L;
    long double resid = s2;
    for (int n = 0; n < n_x; ++n) {
      total_r += s0[n];
      const Eigen::Matrix<long double, 3, 1> xn = x.col(n).cast<long double>();
      resid += s0[n] * xn.squaredNorm() - 2.0L * xn.dot(s1.col(n));
    }
    if (total_r > 0.0L)
      sigma2 = std::max(static_cast<double>(resid / (3.0L * total_r)), 1e-14);

    const double ll = static_cast<double>(loglik);
    const bool ll_settled =
        std::isfinite(loglik_prev) &&
        std::abs(ll - loglik_prev) <= cfg.loglik_tol * std::abs(loglik_prev);
    loglik_prev = ll;
    if (ll_settled) break;
  }

  report.rim = RimState(x);
  report.loglik = loglik_prev;
  report.sigma2_final = sigma2;
  return report;
}

}  // namespace soibag
