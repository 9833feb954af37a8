#include <soibag/geometry.hpp>
#include <soibag/rng.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace soibag;

namespace {

Mat3X make_points(std::initializer_list<Vec3> pts) {
  Mat3X m(3, static_cast<Eigen::Index>(pts.size()));
  int i = 0;
  for (const auto& p : pts) m.col(i++) = p;
  return m;
}

// Independent O(|A||B|) scalar double loop, kept free of the library's
// vectorized path.
double chamfer_brute(const Mat3X& a, const Mat3X& b) {
  double sum_a = 0.0;
  for (int i = 0; i < a.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.cols(); ++j) {
      const double d = std::sqrt(std::pow(a(0, i) - b(0, j), 2) +
                                 std::pow(a(1, i) - b(1, j), 2) +
                                 std::pow(a(2, i) - b(2, j), 2));
      best = std::min(best, d);
    }
    sum_a += best;
  }
  double sum_b = 0.0;
  for (int j = 0; j < b.cols(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.cols(); ++i) {
      const double d = (a.col(i) - b.col(j)).norm();
      best = std::min(best, d);
    }
    sum_b += best;
  }
  return 0.5 * (sum_a / a.cols() + sum_b / b.cols());
}

Frame random_frame(Rng& rng) {
  Frame f;
  f.rotation = rng.random_rotation();
  f.origin = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
  return f;
}

}  // namespace

TEST_CASE("mapping frame on symmetric coplanar set", "[geometry]") {
  const Mat3X v = make_points({{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}});
  const Frame f = build_mapping_frame(v);
  CHECK(f.a().isApprox(Vec3(0, 0, 1), 1e-12));
  CHECK(f.origin.norm() < 1e-12);
  CHECK(f.orthonormal());
}

TEST_CASE("mapping frame normal flipped to acute angle with +z", "[geometry]") {
  // Unit square listed clockwise when viewed from +z: raw xi1 x xi2 points down.
  const Mat3X v = make_points({{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}});
  const Vec3 centroid = v.rowwise().mean();
  const Vec3 raw =
      (v.col(0) - centroid).cross(v.col(1) - centroid).normalized();
  REQUIRE(raw.z() < 0.0);
  const Frame f = build_mapping_frame(v);
  CHECK(f.a().isApprox(Vec3(0, 0, 1), 1e-12));
}

TEST_CASE("mapping frame sends coplanar points to z ~ 0", "[geometry]") {
  // Six points constructed analytically on the plane x + y + z = 1.
  Rng rng(7);
  Mat3X v(3, 6);
  for (int i = 0; i < 6; ++i) {
    const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
    v.col(i) = Vec3(x, y, 1.0 - x - y);
  }
  const Frame f = build_mapping_frame(v);
  const Mat3X mapped = transform_points(f, v, TransformDir::kWorldToFrame);
  CHECK(mapped.row(2).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(f.orthonormal());
}

TEST_CASE("mapping frame errors", "[geometry]") {
  CHECK_THROWS_AS(build_mapping_frame(make_points({{0, 0, 0}, {1, 0, 0}})),
                  TooFewVertices);
  CHECK_THROWS_AS(
      build_mapping_frame(make_points({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}})),
      DegenerateVertices);
}

TEST_CASE("transform identity and translation cancellation", "[geometry]") {
  const Mat3X pts = make_points({{1, 2, 3}, {-0.5, 0.25, 4}});
  CHECK(transform_points(Frame::identity(), pts, TransformDir::kWorldToFrame)
            .isApprox(pts, 1e-15));
  Frame f;
  f.origin = Vec3(1, 2, 3);
  CHECK(transform_point(f, Vec3(1, 2, 3), TransformDir::kWorldToFrame).norm() <
        1e-15);
}

TEST_CASE("transform round trip within 1e-12", "[geometry]") {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Frame f = random_frame(rng);
    REQUIRE(f.orthonormal());
    Mat3X pts(3, 5);
    for (int i = 0; i < 5; ++i)
      pts.col(i) = rng.uniform_in_box(Vec3(-2, -2, -2), Vec3(2, 2, 2));
    const Mat3X back = transform_points(
        f, transform_points(f, pts, TransformDir::kWorldToFrame),
        TransformDir::kFrameToWorld);
    worst = std::max(worst, (back - pts).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("ellipse2d sampling quarter points and implicit identity", "[geometry]") {
  Ellipse2D circle;  // unit circle
  const Mat2X s = ellipse2d_sample(circle, 4);
  // theta = {pi/2, pi, 3pi/2, 2pi}: cyclic rotation of the quarter points.
  CHECK(s.col(0).isApprox(Vec2(0, 1), 1e-12));
  CHECK(s.col(1).isApprox(Vec2(-1, 0), 1e-12));
  CHECK(s.col(2).isApprox(Vec2(0, -1), 1e-12));
  CHECK(s.col(3).isApprox(Vec2(1, 0), 1e-12));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Ellipse2D e{rng.uniform(-1, 1), rng.uniform(-1, 1), 0, 0,
                rng.uniform(-kPi, kPi)};
    e.rho_b = rng.uniform(0.05, 0.4);
    e.rho_a = e.rho_b + rng.uniform(0.0, 0.4);
    const Mat2X pts = ellipse2d_sample(e, 64);
    for (int i = 0; i < pts.cols(); ++i)
      CHECK(ellipse2d_implicit(e, pts.col(i)) == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("ellipse2d hand-evaluated point", "[geometry]") {
  // tau=(2,3), rho_a=2, rho_b=1, alpha=pi/2, theta=0 -> (2, 5)
  const Ellipse2D e{2, 3, 2, 1, kPi / 2};
  CHECK(ellipse2d_point(e, 0.0).isApprox(Vec2(2, 5), 1e-12));
}

TEST_CASE("ellipse2d implicit values", "[geometry]") {
  const Ellipse2D unit{0, 0, 1, 1, 0};
  CHECK(ellipse2d_implicit(unit, Vec2(0, 0)) == 0.0);
  CHECK(ellipse2d_implicit(unit, Vec2(2, 0)) == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("ellipse2d perimeter approximation", "[geometry]") {
  const Ellipse2D circle{0, 0, 0.25, 0.25, 0};
  CHECK(ellipse2d_perimeter_approx(circle) ==
        Catch::Approx(2 * kPi * 0.25).margin(1e-12));
  const Ellipse2D e{0, 0, 0.15, 0.05, 0};
  CHECK(ellipse2d_perimeter_approx(e) ==
        Catch::Approx(2 * kPi * std::sqrt(0.0125)).margin(1e-9));

  // The RMS-axes value upper-bounds the exact perimeter, within 10% for
  // aspect ratios up to 3 (dense polyline as the oracle).
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Ellipse2D r{0, 0, 0, 0, rng.uniform(-kPi, kPi)};
    r.rho_b = rng.uniform(0.05, 0.2);
    r.rho_a = r.rho_b * rng.uniform(1.0, 3.0);
    const Mat2X s2 = ellipse2d_sample(r, 20000);
    Mat3X s3 = Mat3X::Zero(3, s2.cols());
    s3.topRows(2) = s2;
    const double exact = polyline_perimeter(s3, true);
    const double approx = ellipse2d_perimeter_approx(r);
    CHECK(approx >= exact - 1e-9);
    CHECK(approx / exact <= 1.1);
  }
}

TEST_CASE("ellipse3d sampling", "[geometry]") {
  Ellipse3D circle;
  const Mat3X s = ellipse3d_sample(circle, 4);
  CHECK(s.col(3).isApprox(Vec3(1, 0, 0), 1e-12));
  CHECK(s.col(0).isApprox(Vec3(0, 1, 0), 1e-12));

  // theta = pi/2 with beta_b = 0.5, v = +z, c = (1,1,1) -> (1,1,1.5)
  Ellipse3D e;
  e.c = Vec3(1, 1, 1);
  e.beta_a = 1.0;
  e.beta_b = 0.5;
  e.u = Vec3(1, 0, 0);
  e.v = Vec3(0, 0, 1);
  CHECK(ellipse3d_point(e, kPi / 2).isApprox(Vec3(1, 1, 1.5), 1e-12));

  // All samples lie on the plane through c with normal u x v.
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Ellipse3D r;
    r.c = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    const Mat3 rot = rng.random_rotation();
    r.u = rot.col(0);
    r.v = rot.col(1);
    r.beta_b = rng.uniform(0.05, 0.3);
    r.beta_a = r.beta_b + rng.uniform(0.0, 0.3);
    const Vec3 normal = r.u.cross(r.v);
    const Mat3X pts = ellipse3d_sample(r, 100);
    for (int i = 0; i < pts.cols(); ++i)
      CHECK(std::abs(normal.dot(pts.col(i) - r.c)) < 1e-12);
  }
}

TEST_CASE("polyline perimeter", "[geometry]") {
  const Mat3X square =
      make_points({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}});
  CHECK(polyline_perimeter(square, true) == Catch::Approx(4.0).margin(1e-12));
  const Mat3X two = make_points({{0, 0, 0}, {3, 4, 0}});
  CHECK(polyline_perimeter(two, false) == Catch::Approx(5.0).margin(1e-12));

  Ellipse3D circle;
  CHECK(polyline_perimeter(ellipse3d_sample(circle, 2000), true) ==
        Catch::Approx(2 * kPi).margin(1e-4));
}

TEST_CASE("polyline perimeter of sampled ellipse converges", "[geometry]") {
  // Against adaptive-free dense reference (200k-gon) for aspect ratios <= 4.
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Ellipse3D e;
    e.beta_b = rng.uniform(0.05, 0.2);
    e.beta_a = e.beta_b * rng.uniform(1.0, 4.0);
    const double p2000 = polyline_perimeter(ellipse3d_sample(e, 2000), true);
    const double dense = polyline_perimeter(ellipse3d_sample(e, 200000), true);
    CHECK(std::abs(p2000 - dense) / dense < 1e-4);
  }
}

TEST_CASE("chamfer basics", "[geometry]") {
  const Mat3X a = make_points({{0, 0, 0}, {1, 1, 1}});
  CHECK(chamfer(a, a) == 0.0);
  const Mat3X single_a = make_points({{0, 0, 0}});
  const Mat3X single_b = make_points({{3, 4, 0}});
  CHECK(chamfer(single_a, single_b) == Catch::Approx(5.0).margin(1e-12));
  CHECK_THROWS_AS(chamfer(Mat3X(3, 0), a), EmptySet);
}

TEST_CASE("chamfer equals brute force on random sets", "[geometry]") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    Mat3X a(3, 20), b(3, 30);
    for (int i = 0; i < a.cols(); ++i)
      a.col(i) = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    for (int i = 0; i < b.cols(); ++i)
      b.col(i) = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    CHECK(std::abs(chamfer(a, b) - chamfer_brute(a, b)) < 1e-12);
    CHECK(std::abs(chamfer(a, b) - chamfer(b, a)) < 1e-12);
  }
}

TEST_CASE("chamfer translation identity", "[geometry]") {
  Rng rng(19);
  Mat3X a(3, 15);
  for (int i = 0; i < a.cols(); ++i)
    a.col(i) = rng.uniform_in_box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
  const Vec3 t(0.03, -0.02, 0.015);
  const Mat3X shifted = a.colwise() + t;
  // Every nearest neighbor of a small rigid shift is the original point,
  // provided the shift is below half the minimum pairwise spacing.
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < a.cols(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      min_gap = std::min(min_gap, (a.col(i) - a.col(j)).norm());
  REQUIRE(t.norm() < 0.5 * min_gap);
  CHECK(chamfer(a, shifted) == Catch::Approx(t.norm()).margin(1e-12));
}

TEST_CASE("farthest point sampling", "[geometry]") {
  Ellipse2D circle;  // unit circle
  const Mat2X s2 = ellipse2d_sample(circle, 1800);
  Mat3X pts = Mat3X::Zero(3, 1800);
  pts.topRows(2) = s2;

  // Seed at theta = 0, i.e. sample index 1799 under the 2*pi*i/n convention.
  const std::vector<int> idx = fps_indices(pts, 4, 1799);
  REQUIRE(idx.size() == 4);
  const double step = 2 * kPi / 1800;
  const auto theta_of = [&](int i) { return wrap_angle(2 * kPi * (i + 1) / 1800); };
  CHECK(std::abs(wrap_angle(theta_of(idx[0]) - 0.0)) < step / 2 + 1e-12);
  CHECK(std::abs(wrap_angle(theta_of(idx[1]) - kPi)) <= step + 1e-12);
  const double t2 = wrap_angle(theta_of(idx[2]));
  const double t3 = wrap_angle(theta_of(idx[3]));
  CHECK(std::min(std::abs(wrap_angle(t2 - kPi / 2)),
                 std::abs(wrap_angle(t2 + kPi / 2))) <= step + 1e-12);
  CHECK(std::min(std::abs(wrap_angle(t3 - kPi / 2)),
                 std::abs(wrap_angle(t3 + kPi / 2))) <= step + 1e-12);

  // k = 1 returns exactly the seed; k = n returns every point.
  CHECK(fps_indices(pts, 1, 42) == std::vector<int>{42});
  const std::vector<int> all = fps_indices(pts, 1800, 0);
  std::vector<int> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 1800; ++i) CHECK(sorted[i] == i);

  CHECK_THROWS_AS(fps_indices(pts, 1801, 0), KTooLarge);

  // Determinism.
  CHECK(fps_indices(pts, 40, 7) == fps_indices(pts, 40, 7));
}

TEST_CASE("principal axis 2d", "[geometry]") {
  Mat2X seg(2, 5);
  for (int i = 0; i < 5; ++i) seg.col(i) = Vec2(i * 0.1, 0.0);
  CHECK(principal_axis_2d(seg).isApprox(Vec2(1, 0), 1e-12));

  Mat2X diag(2, 5);
  for (int i = 0; i < 5; ++i) diag.col(i) = Vec2(i * 0.1, i * 0.1);
  CHECK(principal_axis_2d(diag).isApprox(Vec2(std::sqrt(0.5), std::sqrt(0.5)),
                                         1e-12));

  // Major axis of elongated ellipse samples recovers the rotation angle.
  const Ellipse2D e{0.3, -0.2, 0.5, 0.05, 0.3};
  const Vec2 axis = principal_axis_2d(ellipse2d_sample(e, 720));
  const Vec2 expected(std::cos(0.3), std::sin(0.3));
  CHECK(std::abs(std::abs(axis.dot(expected)) - 1.0) < 1e-6);

  // Isotropic set: circle samples.
  const Ellipse2D circle{0, 0, 1, 1, 0};
  CHECK_THROWS_AS(principal_axis_2d(ellipse2d_sample(circle, 360)),
                  DegenerateCovariance);
}

TEST_CASE("cyclic alignment recovers shifts and reversals", "[geometry]") {
  Rng rng(23);
  Ellipse3D e;
  e.beta_a = 0.14;
  e.beta_b = 0.09;
  const Mat3X ref = ellipse3d_sample(e, 20);
  for (int shift = 0; shift < 20; shift += 3) {
    Mat3X rolled(3, 20);
    for (int i = 0; i < 20; ++i) rolled.col(i) = ref.col((i + shift) % 20);
    CHECK((align_cyclic(rolled, ref) - ref).cwiseAbs().maxCoeff() < 1e-12);
    Mat3X reversed(3, 20);
    for (int i = 0; i < 20; ++i) reversed.col(i) = rolled.col(19 - i);
    CHECK((align_cyclic(reversed, ref) - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ellipse normalization preserves geometry", "[geometry]") {
  Ellipse2D e{0.1, 0.2, 0.05, 0.15, 0.4};  // rho_a < rho_b on purpose
  const Ellipse2D n = e.normalized();
  CHECK(n.rho_a >= n.rho_b);
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const Vec2 q(rng.uniform(-0.3, 0.5), rng.uniform(-0.3, 0.5));
    CHECK(ellipse2d_implicit(e, q) ==
          Catch::Approx(ellipse2d_implicit(n, q)).margin(1e-12));
  }
}
