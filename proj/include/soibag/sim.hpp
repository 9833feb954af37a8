#pragma once

#include <soibag/collision.hpp>
#include <soibag/geometry.hpp>
#include <soibag/rng.hpp>
#include <soibag/types.hpp>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace soibag {

// ---------------------------------------------------------------------------
// Depth-sensor stand-in
// ---------------------------------------------------------------------------

struct SensorConfig {
  int points_per_frame = 1500;
  double noise_sigma = 0.002;      // meters
  double outlier_fraction = 0.05;  // [0, 0.5)
  Vec3 outlier_box_min = Vec3(-0.5, -0.5, 0.0);
  Vec3 outlier_box_max = Vec3(0.5, 0.5, 1.0);
  std::uint64_t rng_seed = 0;

  void validate(int n_x = 20) const {
    if (points_per_frame < n_x * 10)
      throw ValidationError("points_per_frame must be at least 10 * n_x");
    if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be >= 0");
    if (outlier_fraction < 0.0 || outlier_fraction >= 0.5)
      throw ValidationError("outlier_fraction must be in [0, 0.5)");
    if (!((outlier_box_max - outlier_box_min).minCoeff() > 0.0))
      throw ValidationError("outlier_box must have positive extents");
  }
};

// Synthesizes one noisy frame: inliers sampled uniformly by arc length along
// the closed rim polyline plus uniform box outliers. Inliers come first.
inline PointCloud render_cloud(const RimState& rim, const SensorConfig& cfg,
                               Rng& rng) {
  cfg.validate(rim.size());
  const int n = rim.size();
  const int n_out = static_cast<int>(std::lround(cfg.points_per_frame *
                                                 cfg.outlier_fraction));
  const int n_in = cfg.points_per_frame - n_out;

  std::vector<double> cumulative(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const Vec3 a = rim.keypoints.col(i);
    const Vec3 b = rim.keypoints.col((i + 1) % n);
    cumulative[i + 1] = cumulative[i] + (b - a).norm();
  }
  const double total = cumulative[n];

  PointCloud cloud(3, cfg.points_per_frame);
  for (int k = 0; k < n_in; ++k) {
    const double s = rng.uniform01() * total;
    const int seg = static_cast<int>(
        std::upper_bound(cumulative.begin(), cumulative.end(), s) -
        cumulative.begin() - 1);
    const int i = std::min(seg, n - 1);
    const double t = (s - cumulative[i]) / (cumulative[i + 1] - cumulative[i]);
    const Vec3 a = rim.keypoints.col(i);
    const Vec3 b = rim.keypoints.col((i + 1) % n);
    cloud.col(k) = a + t * (b - a) + rng.normal3(cfg.noise_sigma);
  }
  for (int k = n_in; k < cfg.points_per_frame; ++k)
    cloud.col(k) = rng.uniform_in_box(cfg.outlier_box_min, cfg.outlier_box_max);
  return cloud;
}

inline PointCloud render_cloud(const RimState& rim, const SensorConfig& cfg) {
  Rng rng(cfg.rng_seed);
  return render_cloud(rim, cfg, rng);
}

// ---------------------------------------------------------------------------
// Quasi-static elastic rim plant
// ---------------------------------------------------------------------------

struct PlantConfig {
  int n_s = 100;         // simulation nodes (multiple of n_x)
  int n_x = 20;          // rim keypoints exposed to the pipeline
  double omega = 0.68;   // rim perimeter; rest spacing l0 = omega / n_s
  double k_stretch = 2e4;
  double k_bend = 400.0;
  double k_gravity = 0.001;
  double k_contact = 200.0;
  double k_clamp = 200.0;
  int clamp_width = 3;
  int max_settle_iters = 500;
  double settle_grad_tol = 1e-8;
  // Controller saturation the plant guards against (commands beyond twice
  // these magnitudes are rejected as teleports).
  double command_guard_trans = 0.005;
  double command_guard_rot = 0.02;
  Vec3 init_center = Vec3(0, 0, 0.5);
  Vec3 init_normal = Vec3(0, 0, 1);
  double init_phase = 0.0;

  void validate() const {
    if (n_x < 3 || n_s < n_x || n_s % n_x != 0)
      throw ValidationError("n_s must be a positive multiple of n_x");
    if (!(omega > 0.0)) throw ValidationError("omega must be > 0");
    if (k_stretch <= 0.0 || k_bend < 0.0 || k_gravity < 0.0 || k_clamp < 0.0)
      throw ValidationError("plant stiffnesses must be non-negative");
    if (clamp_width < 1 || clamp_width >= n_s / 4)
      throw ValidationError("clamp_width out of range");
    if (init_normal.norm() < 1e-9)
      throw ValidationError("init_normal must be nonzero");
  }
};

// Closed elastic loop pinned to two antipodal gripper nodes. After every
// command the free nodes settle to an energy minimum:
//   E = k_stretch * sum (|e_i| - l0)^2 + k_bend * sum |s_{i+1} - 2 s_i + s_{i-1}|^2
//     + k_gravity * sum z_i + clamp and unilateral contact terms.
class BagPlant {
 public:
  explicit BagPlant(const PlantConfig& cfg,
                    std::vector<ObstacleVolume> contact_volumes = {})
      : cfg_(cfg), contacts_(std::move(contact_volumes)) {
    cfg_.validate();
    l0_ = cfg_.omega / cfg_.n_s;
    const double radius = cfg_.omega / (2.0 * kPi);
    Vec3 normal = cfg_.init_normal.normalized();
    const Vec3 seed = std::abs(normal.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 ex = (seed - seed.dot(normal) * normal).normalized();
    const Vec3 ey = normal.cross(ex);
    nodes_.resize(3, cfg_.n_s);
    for (int i = 0; i < cfg_.n_s; ++i) {
      const double th = cfg_.init_phase + 2.0 * kPi * i / cfg_.n_s;
      nodes_.col(i) =
          cfg_.init_center + radius * (std::cos(th) * ex + std::sin(th) * ey);
    }
    grasp_[0] = 0;
    grasp_[1] = cfg_.n_s / 2;
    for (int g = 0; g < 2; ++g) {
      gripper_pos_[g] = nodes_.col(grasp_[g]);
      gripper_rpy_[g].setZero();
      const int i = grasp_[g];
      tangent0_[g] = (nodes_.col((i + 1) % cfg_.n_s) -
                      nodes_.col((i + cfg_.n_s - 1) % cfg_.n_s))
                         .normalized();
    }
    settle();
  }

  const PlantConfig& config() const { return cfg_; }
  const Mat3X& loop() const { return nodes_; }
  bool last_settle_converged() const { return settle_converged_; }
  int non_converged_settles() const { return non_converged_settles_; }

  RimState rim() const {
    const int stride = cfg_.n_s / cfg_.n_x;
    Mat3X kp(3, cfg_.n_x);
    for (int i = 0; i < cfg_.n_x; ++i) kp.col(i) = nodes_.col(i * stride);
    return RimState(kp);
  }

  double perimeter() const { return polyline_perimeter(nodes_, true); }

  Vec12 pose() const {
    Vec12 r;
    r.segment<3>(0) = gripper_pos_[0];
    r.segment<3>(3) = gripper_rpy_[0];
    r.segment<3>(6) = gripper_pos_[1];
    r.segment<3>(9) = gripper_rpy_[1];
    return r;
  }

  void set_contact_volumes(std::vector<ObstacleVolume> volumes) {
    contacts_ = std::move(volumes);
  }

  // Applies a 12-component pose increment (left xyz+rpy, right xyz+rpy) and
  // settles the free nodes. Commands beyond twice the controller saturation
  // are rejected as teleports.
  RimState step(const Vec12& u) {
    for (int g = 0; g < 2; ++g) {
      for (int i = 0; i < 3; ++i) {
        if (std::abs(u(6 * g + i)) > 2.0 * cfg_.command_guard_trans)
          throw ValidationError("translation command exceeds plant guard");
        if (std::abs(u(6 * g + 3 + i)) > 2.0 * cfg_.command_guard_rot)
          throw ValidationError("rotation command exceeds plant guard");
      }
      gripper_pos_[g] += u.segment<3>(6 * g);
      for (int i = 0; i < 3; ++i)
        gripper_rpy_[g](i) = wrap_angle(gripper_rpy_[g](i) + u(6 * g + 3 + i));
      nodes_.col(grasp_[g]) = gripper_pos_[g];
    }
    settle();
    return rim();
  }

 private:
  static Mat3 rpy_matrix(const Vec3& rpy) {
    return (Eigen::AngleAxisd(rpy(2), Vec3::UnitZ()) *
            Eigen::AngleAxisd(rpy(1), Vec3::UnitY()) *
            Eigen::AngleAxisd(rpy(0), Vec3::UnitX()))
        .toRotationMatrix();
  }

  // Clamp targets: clamp_width neighbors on each side of a grasp node track
  // the gripper-oriented rim tangent.
  void clamp_targets(int g, Mat3X& targets, std::vector<int>& indices) const {
    const Vec3 dir = rpy_matrix(gripper_rpy_[g]) * tangent0_[g];
    const int base = grasp_[g];
    for (int j = 1; j <= cfg_.clamp_width; ++j) {
      indices.push_back((base + j) % cfg_.n_s);
      targets.col(static_cast<int>(indices.size()) - 1) =
          gripper_pos_[g] + j * l0_ * dir;
      indices.push_back((base - j + cfg_.n_s) % cfg_.n_s);
      targets.col(static_cast<int>(indices.size()) - 1) =
          gripper_pos_[g] - j * l0_ * dir;
    }
  }

  double energy_and_gradient(const Mat3X& s, Mat3X& grad, const Mat3X& targets,
                             const std::vector<int>& clamp_idx) const {
    const int n = cfg_.n_s;
    grad.setZero();
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      const Vec3 d = s.col(j) - s.col(i);
      const double len = d.norm();
      const double stretch = len - l0_;
      e += cfg_.k_stretch * stretch * stretch;
      if (len > 1e-12) {
        const Vec3 f = (2.0 * cfg_.k_stretch * stretch / len) * d;
        grad.col(j) += f;
        grad.col(i) -= f;
      }
    }
    for (int i = 0; i < n; ++i) {
      const Vec3 b = s.col((i + 1) % n) - 2.0 * s.col(i) + s.col((i + n - 1) % n);
      e += cfg_.k_bend * b.squaredNorm();
      const Vec3 f = 2.0 * cfg_.k_bend * b;
      grad.col((i + 1) % n) += f;
      grad.col(i) -= 2.0 * f;
      grad.col((i + n - 1) % n) += f;
    }
    for (int i = 0; i < n; ++i) {
      e += cfg_.k_gravity * s(2, i);
      grad(2, i) += cfg_.k_gravity;
    }
    for (size_t k = 0; k < clamp_idx.size(); ++k) {
      const Vec3 d = s.col(clamp_idx[k]) - targets.col(static_cast<int>(k));
      e += cfg_.k_clamp * d.squaredNorm();
      grad.col(clamp_idx[k]) += 2.0 * cfg_.k_clamp * d;
    }
    if (!contacts_.empty()) {
      for (int i = 0; i < n; ++i) {
        for (const auto& volume : contacts_) {
          const double depth = contact_margin_ - volume.boundary_gap(s.col(i));
          if (depth > 0.0) {
            e += cfg_.k_contact * depth * depth;
            grad.col(i) -=
                2.0 * cfg_.k_contact * depth * volume.gap_gradient(s.col(i));
          }
        }
      }
    }
    return e;
  }

  // Hessian of the elastic energy over free-node coordinates (grasp nodes
  // eliminated). Contact uses the Gauss-Newton outer-product approximation.
  MatX hessian(const Mat3X& s, const std::vector<int>& free_index,
               const std::vector<int>& clamp_idx) const {
    const int n = cfg_.n_s;
    const int dof = 3 * (n - 2);
    MatX h = MatX::Zero(dof, dof);
    const auto add_block = [&](int a, int b, const Mat3& blk) {
      const int fa = free_index[a], fb = free_index[b];
      if (fa < 0 || fb < 0) return;
      h.block<3, 3>(3 * fa, 3 * fb) += blk;
    };
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      const Vec3 d = s.col(j) - s.col(i);
      const double len = std::max(d.norm(), 1e-12);
      const Vec3 u = d / len;
      const Mat3 uu = u * u.transpose();
      const Mat3 blk = 2.0 * cfg_.k_stretch *
                       (uu + (1.0 - l0_ / len) * (Mat3::Identity() - uu));
      add_block(i, i, blk);
      add_block(j, j, blk);
      add_block(i, j, -blk);
      add_block(j, i, -blk);
    }
    // Bending: quadratic with cyclic [1 -2 1] stencil per coordinate.
    for (int i = 0; i < n; ++i) {
      const int im = (i + n - 1) % n, ip = (i + 1) % n;
      const int idx[3] = {ip, i, im};
      const double coeff[3] = {1.0, -2.0, 1.0};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          add_block(idx[a], idx[b],
                    2.0 * cfg_.k_bend * coeff[a] * coeff[b] * Mat3::Identity());
    }
    for (int c : clamp_idx)
      add_block(c, c, 2.0 * cfg_.k_clamp * Mat3::Identity());
    if (!contacts_.empty()) {
      for (int i = 0; i < n; ++i) {
        for (const auto& volume : contacts_) {
          if (contact_margin_ - volume.boundary_gap(s.col(i)) > 0.0) {
            const Vec3 grd = volume.gap_gradient(s.col(i));
            add_block(i, i, 2.0 * cfg_.k_contact * grd * grd.transpose());
          }
        }
      }
    }
    return h;
  }

  // Damped-Newton settle over free nodes; grasp nodes stay pinned to the
  // commanded gripper positions.
  void settle() {
    const int n = cfg_.n_s;
    Mat3X targets(3, 4 * cfg_.clamp_width);
    std::vector<int> clamp_idx;
    clamp_idx.reserve(4 * cfg_.clamp_width);
    clamp_targets(0, targets, clamp_idx);
    clamp_targets(1, targets, clamp_idx);

    std::vector<int> free_index(n, -1);
    for (int i = 0, f = 0; i < n; ++i)
      if (i != grasp_[0] && i != grasp_[1]) free_index[i] = f++;
    const int dof = 3 * (n - 2);

    Mat3X grad(3, n);
    double e = energy_and_gradient(nodes_, grad, targets, clamp_idx);
    double lambda = 1e-6;
    settle_converged_ = false;

    for (int it = 0; it < cfg_.max_settle_iters; ++it) {
      VecX g(dof);
      for (int i = 0; i < n; ++i)
        if (free_index[i] >= 0) g.segment<3>(3 * free_index[i]) = grad.col(i);
      if (g.norm() < cfg_.settle_grad_tol) {
        settle_converged_ = true;
        break;
      }
      const MatX h = hessian(nodes_, free_index, clamp_idx);

      bool accepted = false;
      for (int attempt = 0; attempt < 24 && !accepted; ++attempt) {
        MatX h_damped = h;
        h_damped.diagonal().array() += lambda;
        const Eigen::LDLT<MatX> ldlt(h_damped);
        if (ldlt.info() != Eigen::Success) {
          lambda *= 10.0;
          continue;
        }
        const VecX delta = ldlt.solve(-g);
        if (!delta.allFinite()) {
          lambda *= 10.0;
          continue;
        }
        Mat3X trial = nodes_;
        for (int i = 0; i < n; ++i)
          if (free_index[i] >= 0)
            trial.col(i) += delta.segment<3>(3 * free_index[i]);
        Mat3X g_trial(3, n);
        const double e_trial =
            energy_and_gradient(trial, g_trial, targets, clamp_idx);
        if (std::isfinite(e_trial) && e_trial <= e + 1e-14 * std::abs(e)) {
          nodes_ = trial;
          grad = g_trial;
          e = e_trial;
          lambda = std::max(lambda * 0.25, 1e-10);
          accepted = true;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted) break;
    }
    if (!settle_converged_) ++non_converged_settles_;
  }

  PlantConfig cfg_;
  std::vector<ObstacleVolume> contacts_;
  double contact_margin_ = 1e-3;
  double l0_ = 0.0;
  Mat3X nodes_;
  int grasp_[2] = {0, 0};
  Vec3 gripper_pos_[2];
  Vec3 gripper_rpy_[2];
  Vec3 tangent0_[2];
  bool settle_converged_ = true;
  int non_converged_settles_ = 0;
};

}  // namespace soibag
