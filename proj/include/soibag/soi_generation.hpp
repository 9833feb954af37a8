#pragma once

#include <soibag/collision.hpp>
#include <soibag/geometry.hpp>
#include <soibag/solver.hpp>
#include <soibag/types.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace soibag {

struct ObjectModel {
  std::string name;
  Mat3X bottom_vertices;  // coplanar, world frame
  std::vector<ObstacleVolume> collision_volumes;

  void validate() const {
    if (bottom_vertices.cols() < 3)
      throw ValidationError("object needs at least 3 bottom vertices");
    if (!bottom_vertices.allFinite())
      throw ValidationError("object vertices must be finite");
    const Frame f = build_mapping_frame(bottom_vertices);
    const Mat3X mapped =
        transform_points(f, bottom_vertices, TransformDir::kWorldToFrame);
    if (mapped.row(2).cwiseAbs().maxCoeff() > 1e-3)
      throw ValidationError("object bottom vertices are not coplanar within 1 mm");
    for (const auto& v : collision_volumes) v.validate();
  }
};

struct SoiGenParams {
  double omega = 0.68;     // bag rim perimeter
  double lambda1 = 0.85;   // enclosing bound on the implicit value
  double lambda2 = 0.005;  // center distance bound
  double lambda3 = 0.001;  // axis parallelism bound
  double gamma = 0.05;     // goal lift distance
  int n_x = 20;

  void validate() const {
    if (!(omega > 0.0)) throw ValidationError("omega must be > 0");
    if (lambda1 <= 0.0 || lambda1 >= 1.0)
      throw ValidationError("lambda1 must be in (0,1)");
    if (lambda2 < 0.0) throw ValidationError("lambda2 must be >= 0");
    if (lambda3 < 0.0) throw ValidationError("lambda3 must be >= 0");
    if (gamma < 0.0) throw ValidationError("gamma must be >= 0");
    if (n_x < 3) throw ValidationError("n_x must be >= 3");
  }
};

// Fits the bagging ellipse in the mapping plane: perimeter cost
// (2 pi sqrt((rho_a^2 + rho_b^2)/2) - omega)^2 subject to
//   C1: 0 <= f_s(v_i) <= lambda1 for every vertex,
//   C2: ||center - vertex centroid|| <= lambda2,
//   C3: | |dot(eta_e, eta_v)| - 1 | <= lambda3 (dropped for isotropic sets).
inline Ellipse2D fit_bagging_ellipse(const Mat2X& vertices,
                                     const SoiGenParams& params,
                                     const SolveOptions& opts = {}) {
  params.validate();
  const int nv = static_cast<int>(vertices.cols());
  if (nv < 3) throw DegenerateVertices("ellipse fit needs at least 3 vertices");
  const Vec2 centroid = vertices.rowwise().mean();
  if ((vertices.colwise() - centroid).cwiseAbs().maxCoeff() < 1e-12)
    throw DegenerateVertices("vertices are all coincident");

  std::optional<Vec2> vertex_axis;
  try {
    vertex_axis = principal_axis_2d(vertices);
  } catch (const DegenerateCovariance&) {
    // Isotropic footprint: any axis counts as parallel, C3 is dropped.
  }

  const auto as_ellipse = [](const VecX& p) {
    return Ellipse2D{p(0), p(1), p(2), p(3), p(4)};
  };
  const double omega = params.omega;
  const CostFn cost = [omega, as_ellipse](const VecX& p) {
    const double diff = ellipse2d_perimeter_approx(as_ellipse(p)) - omega;
    return diff * diff;
  };

  std::vector<ConstraintSpec> constraints;
  for (int i = 0; i < nv; ++i) {
    const Vec2 v = vertices.col(i);
    constraints.push_back(
        {[v, as_ellipse](const VecX& p) {
           return ellipse2d_implicit(as_ellipse(p), v);
         },
         0.0, params.lambda1});
  }
  constraints.push_back(
      {[centroid](const VecX& p) {
         return (Vec2(p(0), p(1)) - centroid).norm();
       },
       0.0, params.lambda2});
  if (vertex_axis) {
    const Vec2 eta_v = *vertex_axis;
    constraints.push_back(
        {[eta_v, as_ellipse](const VecX& p) {
           return std::abs(as_ellipse(p).major_axis().dot(eta_v)) - 1.0;
         },
         -params.lambda3, params.lambda3});
  }
  // Radii positivity (type invariant of the result).
  constraints.push_back({[](const VecX& p) { return p(2); }, 1e-4, 10.0});
  constraints.push_back({[](const VecX& p) { return p(3); }, 1e-4, 10.0});

  VecX init(5);
  const double rho0 = params.omega / (2.0 * kPi);
  const double alpha0 =
      vertex_axis ? std::atan2(vertex_axis->y(), vertex_axis->x()) : 0.0;
  init << centroid.x(), centroid.y(), rho0, rho0, alpha0;

  const SolveReport report = minimize_penalized(cost, constraints, init, opts);
  if (!report.converged)
    throw Infeasible("bagging ellipse fit did not converge (omega too small "
                     "or contradictory bounds?)");
  const Ellipse2D fitted = as_ellipse(report.params).normalized();
  fitted.validate();

  // Post-hoc re-checks against the raw definitions.
  if (std::abs(ellipse2d_perimeter_approx(fitted) - params.omega) > 1e-4)
    throw Infeasible("fitted ellipse perimeter misses omega by more than 1e-4");
  const double tol = opts.feas_tol;
  for (int i = 0; i < nv; ++i) {
    const double fs = ellipse2d_implicit(fitted, vertices.col(i));
    if (fs < -tol || fs > params.lambda1 + tol)
      throw Infeasible("fitted ellipse violates the enclosing constraint");
  }
  if ((Vec2(fitted.tau_x, fitted.tau_y) - centroid).norm() >
      params.lambda2 + tol)
    throw Infeasible("fitted ellipse violates the center constraint");
  if (vertex_axis &&
      std::abs(std::abs(fitted.major_axis().dot(*vertex_axis)) - 1.0) >
          params.lambda3 + tol)
    throw Infeasible("fitted ellipse violates the parallelism constraint");
  return fitted;
}

struct BaggingSoi {
  RimState x_dag;
  Frame frame;
  Ellipse2D ellipse;
};

// Full bagging-SOI generation: mapping frame, 2D ellipse fit, 1800-point
// boundary sampling, world mapping, FPS keypoint extraction, angular reorder.
inline BaggingSoi generate_bagging_soi(const ObjectModel& obj,
                                       const SoiGenParams& params,
                                       const SolveOptions& opts = {}) {
  obj.validate();
  params.validate();
  const Frame frame = build_mapping_frame(obj.bottom_vertices);
  const Mat3X mapped =
      transform_points(frame, obj.bottom_vertices, TransformDir::kWorldToFrame);
  const Mat2X v2 = mapped.topRows(2);

  const Ellipse2D ellipse = fit_bagging_ellipse(v2, params, opts);
  const Mat2X boundary = ellipse2d_sample(ellipse, 1800);
  Mat3X boundary3 = Mat3X::Zero(3, boundary.cols());
  boundary3.topRows(2) = boundary;
  const Mat3X world =
      transform_points(frame, boundary3, TransformDir::kFrameToWorld);

  std::vector<int> picked = fps_indices(world, params.n_x, 0);
  std::sort(picked.begin(), picked.end());  // sample index == angular order
  Mat3X keypoints(3, params.n_x);
  for (int i = 0; i < params.n_x; ++i) keypoints.col(i) = world.col(picked[i]);

  BaggingSoi out{RimState(std::move(keypoints)), frame, ellipse};
  out.x_dag.validate(params.n_x);
  return out;
}

// Goal SOI: the bagging SOI translated along the mapping-plane normal.
inline RimState generate_goal_soi(const RimState& x_dag, const Frame& frame,
                                  double gamma) {
  if (gamma < 0.0) throw ValidationError("gamma must be >= 0");
  if (frame.a().dot(Vec3::UnitZ()) < 0.0)
    throw ValidationError("frame normal must hold an acute angle with +z");
  RimState out = x_dag;
  out.keypoints.colwise() += gamma * frame.a();
  return out;
}

}  // namespace soibag
