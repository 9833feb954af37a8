#pragma once

#include <soibag/geometry.hpp>
#include <soibag/types.hpp>

#include <cmath>
#include <vector>

namespace soibag {

// Convex obstacle/contact volume: an axis-aligned box or a vertical prism
// over a convex polygon footprint.
struct ObstacleVolume {
  enum class Kind { kBox, kPrism };

  Kind kind = Kind::kBox;
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Zero();
  Mat2X footprint;  // convex polygon, CCW
  double z_min = 0.0, z_max = 0.0;

  static ObstacleVolume box(const Vec3& mn, const Vec3& mx) {
    ObstacleVolume v;
    v.kind = Kind::kBox;
    v.box_min = mn;
    v.box_max = mx;
    v.validate();
    return v;
  }

  static ObstacleVolume prism(Mat2X poly, double z0, double z1) {
    ObstacleVolume v;
    v.kind = Kind::kPrism;
    v.footprint = std::move(poly);
    v.z_min = z0;
    v.z_max = z1;
    v.normalize_winding();
    v.validate();
    return v;
  }

  // Max over the volume's face half-space values: negative inside, equal to
  // the distance to the nearest face near the boundary.
  double boundary_gap(const Vec3& p) const {
    if (kind == Kind::kBox) {
      double g = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i) {
        g = std::max(g, box_min(i) - p(i));
        g = std::max(g, p(i) - box_max(i));
      }
      return g;
    }
    double g = std::max(z_min - p.z(), p.z() - z_max);
    const int n = static_cast<int>(footprint.cols());
    for (int i = 0; i < n; ++i) {
      const Vec2 a = footprint.col(i);
      const Vec2 b = footprint.col((i + 1) % n);
      const Vec2 edge = b - a;
      const Vec2 normal = Vec2(edge.y(), -edge.x()).normalized();  // outward for CCW
      g = std::max(g, normal.dot(Vec2(p.x(), p.y()) - a));
    }
    return g;
  }

  bool contains(const Vec3& p, double margin = 0.0) const {
    return boundary_gap(p) < margin;
  }

  // Unit outward direction of the active face at p (contact push-out).
  Vec3 gap_gradient(const Vec3& p) const {
    if (kind == Kind::kBox) {
      double g = -std::numeric_limits<double>::infinity();
      Vec3 dir = Vec3::UnitZ();
      for (int i = 0; i < 3; ++i) {
        if (box_min(i) - p(i) > g) {
          g = box_min(i) - p(i);
          dir = -Vec3::Unit(i);
        }
        if (p(i) - box_max(i) > g) {
          g = p(i) - box_max(i);
          dir = Vec3::Unit(i);
        }
      }
      return dir;
    }
    double g = z_min - p.z();
    Vec3 dir = -Vec3::UnitZ();
    if (p.z() - z_max > g) {
      g = p.z() - z_max;
      dir = Vec3::UnitZ();
    }
    const int n = static_cast<int>(footprint.cols());
    for (int i = 0; i < n; ++i) {
      const Vec2 a = footprint.col(i);
      const Vec2 b = footprint.col((i + 1) % n);
      const Vec2 edge = b - a;
      const Vec2 normal = Vec2(edge.y(), -edge.x()).normalized();
      const double v = normal.dot(Vec2(p.x(), p.y()) - a);
      if (v > g) {
        g = v;
        dir = Vec3(normal.x(), normal.y(), 0.0);
      }
    }
    return dir;
  }

  void normalize_winding() {
    if (kind != Kind::kPrism) return;
    const int n = static_cast<int>(footprint.cols());
    double area2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec2 a = footprint.col(i);
      const Vec2 b = footprint.col((i + 1) % n);
      area2 += a.x() * b.y() - b.x() * a.y();
    }
    if (area2 < 0.0) footprint = footprint.rowwise().reverse().eval();
  }

  void validate() const {
    if (kind == Kind::kBox) {
      if (!((box_max - box_min).minCoeff() > 0.0))
        throw ValidationError("box volume must have positive extents");
      return;
    }
    const int n = static_cast<int>(footprint.cols());
    if (n < 3) throw ValidationError("prism footprint needs at least 3 vertices");
    if (!(z_max > z_min)) throw ValidationError("prism must have z_max > z_min");
    for (int i = 0; i < n; ++i) {
      const Vec2 a = footprint.col(i);
      const Vec2 b = footprint.col((i + 1) % n);
      const Vec2 c = footprint.col((i + 2) % n);
      const double cross =
          (b.x() - a.x()) * (c.y() - b.y()) - (b.y() - a.y()) * (c.x() - b.x());
      if (cross < -1e-12)
        throw ValidationError("prism footprint must be convex (CCW)");
    }
  }
};

// True iff any densified rim sample lies strictly inside an inflated volume.
inline bool in_collision(const RimState& rim,
                         const std::vector<ObstacleVolume>& obstacles,
                         double margin = 1e-3, int per_segment = 10) {
  if (obstacles.empty()) return false;
  const Mat3X samples = densify_loop(rim.keypoints, per_segment);
  for (const auto& volume : obstacles)
    for (int i = 0; i < samples.cols(); ++i)
      if (volume.contains(samples.col(i), margin)) return true;
  return false;
}

}  // namespace soibag
