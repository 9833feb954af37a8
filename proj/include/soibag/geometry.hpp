#pragma once

#include <soibag/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace soibag {

inline constexpr double kPi = std::numbers::pi;

inline double wrap_angle(double a) {
  // Wrap to (-pi, pi].
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// ---------------------------------------------------------------------------
// Frames and rigid transforms
// ---------------------------------------------------------------------------

// Right-handed frame with rotation columns [n o a] and origin p.
struct Frame {
  Mat3 rotation = Mat3::Identity();  // columns: n, o, a
  Vec3 origin = Vec3::Zero();

  Vec3 n() const { return rotation.col(0); }
  Vec3 o() const { return rotation.col(1); }
  Vec3 a() const { return rotation.col(2); }

  static Frame identity() { return Frame{}; }

  bool orthonormal(double tol = 1e-12) const {
    return ((rotation.transpose() * rotation - Mat3::Identity())
                .cwiseAbs()
                .maxCoeff() < tol) &&
           rotation.determinant() > 0.0;
  }
};

enum class TransformDir { kWorldToFrame, kFrameToWorld };

inline Vec3 transform_point(const Frame& f, const Vec3& p, TransformDir dir) {
  if (dir == TransformDir::kWorldToFrame)
    return f.rotation.transpose() * (p - f.origin);
  return f.rotation * p + f.origin;
}

inline Mat3X transform_points(const Frame& f, const Mat3X& pts, TransformDir dir) {
  if (dir == TransformDir::kWorldToFrame)
    return f.rotation.transpose() * (pts.colwise() - f.origin);
  return (f.rotation * pts).colwise() + f.origin;
}

// Builds the mapping frame on the plane spanned by coplanar vertices.
// z-axis a = normalize(xi1 x xi2), flipped so dot(a, +z) >= 0; y-axis o from
// the third vertex direction (orthogonalized against a); x-axis n = o x a;
// origin at the centroid.
inline Frame build_mapping_frame(const Mat3X& vertices) {
  const int nv = static_cast<int>(vertices.cols());
  if (nv < 3) throw TooFewVertices("mapping frame needs at least 3 vertices");
  const Vec3 centroid = vertices.rowwise().mean();
  const Vec3 xi1 = vertices.col(0) - centroid;
  const Vec3 xi2 = vertices.col(1) - centroid;
  Vec3 a = xi1.cross(xi2);
  if (a.norm() < 1e-12)
    throw DegenerateVertices("first two vertex offsets are collinear");
  a.normalize();
  if (a.dot(Vec3::UnitZ()) < 0.0) a = -a;  // keep an acute angle with +z
  Vec3 o_raw = vertices.col(2) - centroid;
  if (o_raw.norm() < 1e-12)
    throw DegenerateVertices("third vertex coincides with the centroid");
  Vec3 o = o_raw - o_raw.dot(a) * a;
  if (o.norm() < 1e-12)
    throw DegenerateVertices("third vertex direction is parallel to the normal");
  o.normalize();
  Frame f;
  f.rotation.col(0) = o.cross(a);
  f.rotation.col(1) = o;
  f.rotation.col(2) = a;
  f.origin = centroid;
  return f;
}

// ---------------------------------------------------------------------------
// Ellipses
// ---------------------------------------------------------------------------

struct Ellipse2D {
  double tau_x = 0.0, tau_y = 0.0;  // center
  double rho_a = 1.0, rho_b = 1.0;  // axis half-lengths
  double alpha = 0.0;               // rotation angle

  // Canonical form: rho_a >= rho_b, alpha in (-pi, pi].
  Ellipse2D normalized() const {
    Ellipse2D e = *this;
    if (e.rho_a < e.rho_b) {
      std::swap(e.rho_a, e.rho_b);
      e.alpha += 0.5 * kPi;
    }
    e.alpha = wrap_angle(e.alpha);
    return e;
  }

  // Unit direction of the major axis.
  Vec2 major_axis() const {
    if (rho_a >= rho_b) return Vec2(std::cos(alpha), std::sin(alpha));
    return Vec2(-std::sin(alpha), std::cos(alpha));
  }

  void validate() const {
    if (!(rho_b > 0.0) || !(rho_a >= rho_b))
      throw ValidationError("ellipse axes must satisfy rho_a >= rho_b > 0");
    if (!std::isfinite(tau_x) || !std::isfinite(tau_y) || !std::isfinite(alpha) ||
        !std::isfinite(rho_a) || !std::isfinite(rho_b))
      throw ValidationError("ellipse has non-finite parameters");
  }
};

struct Ellipse3D {
  Vec3 c = Vec3::Zero();            // center
  double beta_a = 1.0, beta_b = 1.0;  // axis half-lengths
  Vec3 u = Vec3::UnitX(), v = Vec3::UnitY();  // in-plane directions

  Vec3 plane_normal() const { return u.cross(v).normalized(); }

  Ellipse3D normalized() const {
    Ellipse3D e = *this;
    if (e.beta_a < e.beta_b) {
      std::swap(e.beta_a, e.beta_b);
      std::swap(e.u, e.v);
    }
    return e;
  }

  void validate() const {
    if (!(beta_b > 0.0) || !(beta_a >= beta_b))
      throw ValidationError("ellipse axes must satisfy beta_a >= beta_b > 0");
    if (std::abs(u.norm() - 1.0) > 1e-9 || std::abs(v.norm() - 1.0) > 1e-9)
      throw ValidationError("ellipse directions must be unit vectors");
    if (std::abs(u.dot(v)) > 1e-9)
      throw ValidationError("ellipse directions must be orthogonal");
  }
};

inline Vec2 ellipse2d_point(const Ellipse2D& e, double theta) {
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(e.alpha), sa = std::sin(e.alpha);
  return Vec2(e.tau_x + e.rho_a * ct * ca - e.rho_b * st * sa,
              e.tau_y + e.rho_a * ct * sa + e.rho_b * st * ca);
}

// Samples theta_i = 2*pi*i/n for i = 1..n (closure point last).
inline Mat2X ellipse2d_sample(const Ellipse2D& e, int n = 1800) {
  if (n < 3) throw ValidationError("ellipse sampling needs n >= 3");
  Mat2X out(2, n);
  for (int i = 0; i < n; ++i)
    out.col(i) = ellipse2d_point(e, 2.0 * kPi * (i + 1) / n);
  return out;
}

// Standard-form value: 0 at the center, 1 on the boundary, > 1 outside.
inline double ellipse2d_implicit(const Ellipse2D& e, const Vec2& q) {
  const double ca = std::cos(e.alpha), sa = std::sin(e.alpha);
  const double dx = q.x() - e.tau_x, dy = q.y() - e.tau_y;
  const double p = dx * ca + dy * sa;
  const double r = -dx * sa + dy * ca;
  return (p * p) / (e.rho_a * e.rho_a) + (r * r) / (e.rho_b * e.rho_b);
}

// Root-mean-square-axes perimeter approximation (not an elliptic integral).
inline double ellipse2d_perimeter_approx(const Ellipse2D& e) {
  return 2.0 * kPi * std::sqrt(0.5 * (e.rho_a * e.rho_a + e.rho_b * e.rho_b));
}

inline Vec3 ellipse3d_point(const Ellipse3D& e, double theta) {
  return e.c + e.beta_a * std::cos(theta) * e.u + e.beta_b * std::sin(theta) * e.v;
}

inline Mat3X ellipse3d_sample(const Ellipse3D& e, int n = 2000) {
  if (n < 3) throw ValidationError("ellipse sampling needs n >= 3");
  Mat3X out(3, n);
  for (int i = 0; i < n; ++i)
    out.col(i) = ellipse3d_point(e, 2.0 * kPi * (i + 1) / n);
  return out;
}

// ---------------------------------------------------------------------------
// Point-set metrics and sampling
// ---------------------------------------------------------------------------

inline double polyline_perimeter(const Mat3X& pts, bool closed) {
  const int n = static_cast<int>(pts.cols());
  if (n < 2) throw TooFewPoints("perimeter needs at least 2 points");
  double sum = 0.0;
  for (int i = 1; i < n; ++i) sum += (pts.col(i) - pts.col(i - 1)).norm();
  if (closed) sum += (pts.col(0) - pts.col(n - 1)).norm();
  return sum;
}

// Symmetric mean unsquared nearest-neighbor distance:
// CD(A,B) = 0.5 * (mean_a min_b ||a-b|| + mean_b min_a ||a-b||),
// so CD(A, A+t) = ||t|| for any rigid translation t.
inline double chamfer(const Mat3X& a, const Mat3X& b) {
  const int na = static_cast<int>(a.cols());
  const int nb = static_cast<int>(b.cols());
  if (na == 0 || nb == 0) throw EmptySet("chamfer distance of an empty set");
  std::vector<double> min_a(na, std::numeric_limits<double>::infinity());
  std::vector<double> min_b(nb, std::numeric_limits<double>::infinity());
  for (int j = 0; j < nb; ++j) {
    const Vec3 bj = b.col(j);
    double best_b = min_b[j];
    for (int i = 0; i < na; ++i) {
      const double d2 = (a.col(i) - bj).squaredNorm();
      if (d2 < min_a[i]) min_a[i] = d2;
      if (d2 < best_b) best_b = d2;
    }
    min_b[j] = best_b;
  }
  double sum_a = 0.0, sum_b = 0.0;
  for (double d2 : min_a) sum_a += std::sqrt(d2);
  for (double d2 : min_b) sum_b += std::sqrt(d2);
  return 0.5 * (sum_a / na + sum_b / nb);
}

// Greedy farthest point sampling; ties resolved toward the lowest index.
inline std::vector<int> fps_indices(const Mat3X& pts, int k, int seed_index = 0) {
  const int n = static_cast<int>(pts.cols());
  if (n == 0) throw EmptySet("farthest point sampling of an empty set");
  if (k < 1 || k > n) throw KTooLarge("farthest point sampling k out of range");
  if (seed_index < 0 || seed_index >= n)
    throw KTooLarge("farthest point sampling seed index out of range");
  std::vector<int> selected;
  selected.reserve(k);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  int current = seed_index;
  for (int round = 0; round < k; ++round) {
    selected.push_back(current);
    const Vec3 c = pts.col(current);
    int next = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d2 = (pts.col(i) - c).squaredNorm();
      if (d2 < dist2[i]) dist2[i] = d2;
      if (dist2[i] > best) {
        best = dist2[i];
        next = i;
      }
    }
    current = next;
  }
  return selected;
}

inline Mat3X fps(const Mat3X& pts, int k, int seed_index = 0) {
  const std::vector<int> idx = fps_indices(pts, k, seed_index);
  Mat3X out(3, k);
  for (int i = 0; i < k; ++i) out.col(i) = pts.col(idx[i]);
  return out;
}

// Largest-eigenvalue direction of the 2x2 covariance, sign-canonicalized so
// the first nonzero component is positive.
inline Vec2 principal_axis_2d(const Mat2X& pts) {
  const int n = static_cast<int>(pts.cols());
  if (n < 2) throw DegenerateCovariance("principal axis needs at least 2 points");
  const Vec2 mean = pts.rowwise().mean();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec2 d = pts.col(i) - mean;
    cov += d * d.transpose();
  }
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double gap = eig.eigenvalues()(1) - eig.eigenvalues()(0);
  if (gap < 1e-12) throw DegenerateCovariance("isotropic 2D point set");
  Vec2 axis = eig.eigenvectors().col(1);
  if (std::abs(axis.x()) > 1e-14) {
    if (axis.x() < 0.0) axis = -axis;
  } else if (axis.y() < 0.0) {
    axis = -axis;
  }
  return axis;
}

// ---------------------------------------------------------------------------
// Loop utilities shared by the estimator, generator and planner
// ---------------------------------------------------------------------------

// Orthonormal basis of the best-fit plane of a 3D point set
// (ex = largest-variance direction, normal = smallest).
struct PlaneBasis {
  Vec3 origin, ex, ey, normal;
};

inline PlaneBasis fit_plane(const Mat3X& pts) {
  const int n = static_cast<int>(pts.cols());
  if (n < 3) throw TooFewPoints("plane fit needs at least 3 points");
  const Vec3 mean = pts.rowwise().mean();
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3 d = pts.col(i) - mean;
    cov += d * d.transpose();
  }
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);   // eigenvalues ascending
  if (eig.eigenvalues()(1) < 1e-12)
    throw DegenerateCovariance("point set is collinear; no plane fit");
  PlaneBasis b;
  b.origin = mean;
  b.ex = eig.eigenvectors().col(2);
  b.ey = eig.eigenvectors().col(1);
  b.normal = eig.eigenvectors().col(0);
  if (b.ex.cross(b.ey).dot(b.normal) < 0.0) b.normal = -b.normal;
  return b;
}

// Interpolated samples along the closed loop: keypoints plus
// `per_segment` interior points on every edge.
inline Mat3X densify_loop(const Mat3X& loop, int per_segment) {
  const int n = static_cast<int>(loop.cols());
  Mat3X out(3, n * (per_segment + 1));
  int k = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 a = loop.col(i);
    const Vec3 b = loop.col((i + 1) % n);
    for (int s = 0; s <= per_segment; ++s)
      out.col(k++) = a + (b - a) * (static_cast<double>(s) / (per_segment + 1));
  }
  return out;
}

// Cyclic re-indexing (shift plus optional reversal) of a closed loop.
struct CyclicAlignment {
  int shift = 0;
  bool reversed = false;
};

inline Mat3X apply_cyclic_alignment(const Mat3X& loop, CyclicAlignment a) {
  const int n = static_cast<int>(loop.cols());
  Mat3X out(3, n);
  for (int i = 0; i < n; ++i) {
    const int src = a.reversed ? (a.shift - i + 2 * n) % n : (i + a.shift) % n;
    out.col(i) = loop.col(src);
  }
  return out;
}

// Re-indexing that minimizes the stacked squared distance to a reference loop
// of the same size. Keeps index-wise interpolation between loops from
// twisting the rim.
inline CyclicAlignment find_cyclic_alignment(const Mat3X& loop,
                                             const Mat3X& reference) {
  const int n = static_cast<int>(loop.cols());
  if (n != reference.cols()) throw SizeMismatch("cyclic alignment size mismatch");
  double best = std::numeric_limits<double>::infinity();
  CyclicAlignment best_a;
  for (int rev = 0; rev < 2; ++rev) {
    for (int shift = 0; shift < n; ++shift) {
      double cost = 0.0;
      for (int i = 0; i < n; ++i) {
        const int src = rev ? (shift - i + 2 * n) % n : (i + shift) % n;
        cost += (loop.col(src) - reference.col(i)).squaredNorm();
        if (cost >= best) break;
      }
      if (cost < best) {
        best = cost;
        best_a = CyclicAlignment{shift, rev == 1};
      }
    }
  }
  return best_a;
}

inline Mat3X align_cyclic(const Mat3X& loop, const Mat3X& reference) {
  return apply_cyclic_alignment(loop, find_cyclic_alignment(loop, reference));
}

}  // namespace soibag
