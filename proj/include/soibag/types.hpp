#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace soibag {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;

// Point sets are stored column-wise: one 3D point per column.
using Mat3X = Eigen::Matrix3Xd;
using Mat2X = Eigen::Matrix2Xd;
using PointCloud = Mat3X;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define SOIBAG_DEFINE_ERROR(NAME)              \
  struct NAME : Error {                        \
    using Error::Error;                        \
  }

SOIBAG_DEFINE_ERROR(TooFewVertices);
SOIBAG_DEFINE_ERROR(DegenerateVertices);
SOIBAG_DEFINE_ERROR(EmptySet);
SOIBAG_DEFINE_ERROR(KTooLarge);
SOIBAG_DEFINE_ERROR(DegenerateCovariance);
SOIBAG_DEFINE_ERROR(TooFewPoints);
SOIBAG_DEFINE_ERROR(NonFiniteLikelihood);
SOIBAG_DEFINE_ERROR(NonFiniteCost);
SOIBAG_DEFINE_ERROR(Infeasible);
SOIBAG_DEFINE_ERROR(DegenerateRim);
SOIBAG_DEFINE_ERROR(PlanningFailed);
SOIBAG_DEFINE_ERROR(SingularSystem);
SOIBAG_DEFINE_ERROR(SizeMismatch);
SOIBAG_DEFINE_ERROR(ParseError);
SOIBAG_DEFINE_ERROR(ValidationError);

#undef SOIBAG_DEFINE_ERROR

// Ordered closed loop of rim keypoints (cyclically adjacent columns).
struct RimState {
  Mat3X keypoints;

  RimState() = default;
  explicit RimState(Mat3X kp) : keypoints(std::move(kp)) {}

  int size() const { return static_cast<int>(keypoints.cols()); }

  Vec3 centroid() const { return keypoints.rowwise().mean(); }

  // Keypoints stacked into a single 3*n vector (x1,y1,z1,x2,...).
  VecX stacked() const {
    return Eigen::Map<const VecX>(keypoints.data(), keypoints.size());
  }

  static RimState from_stacked(const VecX& v) {
    if (v.size() % 3 != 0) throw SizeMismatch("stacked rim size not divisible by 3");
    RimState r;
    r.keypoints = Eigen::Map<const Mat3X>(v.data(), 3, v.size() / 3);
    return r;
  }

  bool finite() const { return keypoints.allFinite(); }

  void validate(int expected_n = -1) const {
    const int n = size();
    if (n < 3) throw ValidationError("rim needs at least 3 keypoints");
    if (expected_n >= 0 && n != expected_n)
      throw SizeMismatch("rim keypoint count mismatch: " + std::to_string(n) +
                         " vs " + std::to_string(expected_n));
    if (!finite()) throw ValidationError("rim has non-finite coordinates");
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      if ((keypoints.col(i) - keypoints.col(j)).norm() <= 0.0)
        throw ValidationError("rim has coincident consecutive keypoints");
    }
  }
};

}  // namespace soibag
