#pragma once

#include <soibag/geometry.hpp>
#include <soibag/solver.hpp>
#include <soibag/types.hpp>

#include <cmath>
#include <memory>
#include <vector>

namespace soibag {

struct ManifoldParams {
  double omega = 0.68;
  double lambda4 = 0.002;  // relative perimeter tolerance
  double lambda5 = 0.02;   // centroid offset bound

  void validate() const {
    if (!(omega > 0.0)) throw ValidationError("omega must be > 0");
    if (lambda4 <= 0.0 || lambda4 >= 0.1)
      throw ValidationError("lambda4 must be in (0, 0.1)");
    if (!(lambda5 > 0.0)) throw ValidationError("lambda5 must be > 0");
  }
};

namespace detail {

inline constexpr int kEllipseSamples = 2000;

struct TrigTable {
  VecX ct, st;
  TrigTable() : ct(kEllipseSamples), st(kEllipseSamples) {
    for (int i = 0; i < kEllipseSamples; ++i) {
      const double th = 2.0 * kPi * (i + 1) / kEllipseSamples;
      ct(i) = std::cos(th);
      st(i) = std::sin(th);
    }
  }
};

inline const TrigTable& trig_table() {
  static const TrigTable table;
  return table;
}

// Ellipse parameters for the solver: [c(3), rotation vector (3), beta_a,
// beta_b]; (u, v) come from rotating a fixed reference basis, which keeps
// them orthonormal without explicit constraints.
inline Ellipse3D decode_ellipse(const VecX& p, const Mat3& basis0) {
  Mat3 rot = Mat3::Identity();
  const Vec3 phi = p.segment<3>(3);
  const double angle = phi.norm();
  if (angle > 1e-300)
    rot = Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
  const Mat3 basis = rot * basis0;
  Ellipse3D e;
  e.c = p.segment<3>(0);
  e.u = basis.col(0);
  e.v = basis.col(1);
  e.beta_a = p(6);
  e.beta_b = p(7);
  return e;
}

// Shared per-solve evaluation cache: the solver probes cost and constraints
// at the same parameter vector many times per finite-difference gradient.
struct EllipseFitCache {
  Mat3 basis0;
  Mat3X rim;         // fixed fit target
  VecX last_p;
  VecX sx, sy, sz;   // ellipse samples, coordinate-wise
  VecX d2, buf;
  double chamfer_value = 0.0;
  double chi = 0.0;
  Vec3 center = Vec3::Zero();

  explicit EllipseFitCache(const Mat3& basis, Mat3X rim_pts)
      : basis0(basis),
        rim(std::move(rim_pts)),
        sx(kEllipseSamples),
        sy(kEllipseSamples),
        sz(kEllipseSamples),
        d2(kEllipseSamples),
        buf(kEllipseSamples) {}

  void ensure(const VecX& p) {
    if (last_p.size() == p.size() && last_p == p) return;
    last_p = p;
    const Ellipse3D e = decode_ellipse(p, basis0);
    center = e.c;
    const TrigTable& t = trig_table();
    const Vec3 ua = e.beta_a * e.u;
    const Vec3 vb = e.beta_b * e.v;
    sx.array() = (ua.x() * t.ct + vb.x() * t.st).array() + e.c.x();
    sy.array() = (ua.y() * t.ct + vb.y() * t.st).array() + e.c.y();
    sz.array() = (ua.z() * t.ct + vb.z() * t.st).array() + e.c.z();

    // chamfer(samples, rim): single sweep accumulating both directions
    const int nr = static_cast<int>(rim.cols());
    d2.setConstant(std::numeric_limits<double>::infinity());
    double sum_rim = 0.0;
    for (int j = 0; j < nr; ++j) {
      buf.array() = (sx.array() - rim(0, j)).square() +
                    (sy.array() - rim(1, j)).square() +
                    (sz.array() - rim(2, j)).square();
      sum_rim += std::sqrt(buf.minCoeff());
      d2 = d2.cwiseMin(buf);
    }
    const double sum_samples = d2.array().sqrt().sum();
    chamfer_value =
        0.5 * (sum_samples / kEllipseSamples + sum_rim / nr);

    // closed polyline perimeter of the samples
    const int n = kEllipseSamples;
    buf.head(n - 1).array() =
        (sx.segment(1, n - 1) - sx.segment(0, n - 1)).array().square() +
        (sy.segment(1, n - 1) - sy.segment(0, n - 1)).array().square() +
        (sz.segment(1, n - 1) - sz.segment(0, n - 1)).array().square();
    buf(n - 1) = (sx(0) - sx(n - 1)) * (sx(0) - sx(n - 1)) +
                 (sy(0) - sy(n - 1)) * (sy(0) - sy(n - 1)) +
                 (sz(0) - sz(n - 1)) * (sz(0) - sz(n - 1));
    chi = buf.array().sqrt().sum();
  }
};

}  // namespace detail

// Constrained 3D ellipse fit: Chamfer cost against the rim keypoints with
// the perimeter band (C4) and centroid offset bound (C5). `init_hint` warm
// starts the solve (used heavily by the planner).
inline Ellipse3D fit_stable_ellipse(const RimState& x,
                                    const ManifoldParams& params,
                                    const SolveOptions& opts = {},
                                    const Ellipse3D* init_hint = nullptr) {
  params.validate();
  x.validate();
  const int n = x.size();

  PlaneBasis plane;
  try {
    plane = fit_plane(x.keypoints);
  } catch (const DegenerateCovariance&) {
    throw DegenerateRim("rim collapsed to a near-collinear configuration");
  }

  // Initial basis and radii from the rim's plane and in-plane extents.
  Mat3 basis0;
  VecX init(8);
  if (init_hint) {
    basis0.col(0) = init_hint->u;
    basis0.col(1) = init_hint->v;
    basis0.col(2) = init_hint->u.cross(init_hint->v);
    init << init_hint->c.x(), init_hint->c.y(), init_hint->c.z(), 0, 0, 0,
        init_hint->beta_a, init_hint->beta_b;
  } else {
    basis0.col(0) = plane.ex;
    basis0.col(1) = plane.ey;
    basis0.col(2) = plane.ex.cross(plane.ey);
    double rms_a = 0.0, rms_b = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec3 d = x.keypoints.col(i) - plane.origin;
      rms_a += std::pow(d.dot(plane.ex), 2);
      rms_b += std::pow(d.dot(plane.ey), 2);
    }
    const double beta_a0 = std::max(std::sqrt(2.0 * rms_a / n), 1e-3);
    const double beta_b0 = std::max(std::sqrt(2.0 * rms_b / n), 1e-3);
    init << plane.origin.x(), plane.origin.y(), plane.origin.z(), 0, 0, 0,
        beta_a0, beta_b0;
  }

  auto cache =
      std::make_shared<detail::EllipseFitCache>(basis0, x.keypoints);
  const Vec3 rim_centroid = x.centroid();

  const CostFn cost = [cache](const VecX& p) {
    cache->ensure(p);
    return cache->chamfer_value * cache->chamfer_value;
  };
  std::vector<ConstraintSpec> constraints;
  const double omega = params.omega;
  constraints.push_back({[cache, omega](const VecX& p) {
                           cache->ensure(p);
                           return cache->chi / omega;
                         },
                         1.0 - params.lambda4, 1.0 + params.lambda4});
  constraints.push_back({[cache, rim_centroid](const VecX& p) {
                           cache->ensure(p);
                           return (cache->center - rim_centroid).norm();
                         },
                         0.0, params.lambda5});
  constraints.push_back({[](const VecX& p) { return p(6); }, 1e-4, 10.0});
  constraints.push_back({[](const VecX& p) { return p(7); }, 1e-4, 10.0});

  const SolveReport report = minimize_penalized(cost, constraints, init, opts);
  if (!report.converged)
    throw Infeasible("stable-ellipse fit did not converge");
  Ellipse3D fitted = detail::decode_ellipse(report.params, basis0).normalized();
  fitted.validate();

  const double chi = polyline_perimeter(
      ellipse3d_sample(fitted, detail::kEllipseSamples), true);
  const double tol = opts.feas_tol;
  if (chi / params.omega < 1.0 - params.lambda4 - tol ||
      chi / params.omega > 1.0 + params.lambda4 + tol)
    throw Infeasible("fitted ellipse violates the perimeter band");
  if ((fitted.c - rim_centroid).norm() > params.lambda5 + tol)
    throw Infeasible("fitted ellipse violates the centroid offset bound");
  return fitted;
}

// Projection onto the stable-configuration manifold: fit the constrained
// ellipse, then resample it at each input keypoint's parameter angle.
inline RimState project_stable_config(const RimState& x,
                                      const ManifoldParams& params,
                                      const SolveOptions& opts = {},
                                      const Ellipse3D* init_hint = nullptr,
                                      Ellipse3D* fitted_out = nullptr) {
  const Ellipse3D e = fit_stable_ellipse(x, params, opts, init_hint);
  if (fitted_out) *fitted_out = e;
  Mat3X out(3, x.size());
  for (int i = 0; i < x.size(); ++i) {
    const Vec3 d = x.keypoints.col(i) - e.c;
    const double theta =
        std::atan2(d.dot(e.v) / e.beta_b, d.dot(e.u) / e.beta_a);
    out.col(i) = ellipse3d_point(e, theta);
  }
  return RimState(std::move(out));
}

}  // namespace soibag
