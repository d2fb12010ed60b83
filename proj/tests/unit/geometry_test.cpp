#include <gtest/gtest.h>

#include "mvdyn/geometry.hpp"
#include "support.hpp"

namespace mvdyn {
namespace {

using testing::SplitMix64;

const Intrinsics kK{500.0, 500.0, 320.0, 240.0, 640, 480};

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto px = Project({0.0, 0.0, 2.0}, kK);
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->u, 320.0);
  EXPECT_DOUBLE_EQ(px->v, 240.0);
  EXPECT_DOUBLE_EQ(*px->depth, 2.0);
}

TEST(Project, BehindCameraIsOutOfView) {
  EXPECT_FALSE(Project({0.0, 0.0, -1.0}, kK));
  EXPECT_FALSE(Project({0.0, 0.0, 0.0}, kK));
}

TEST(Project, OffAxisPoint) {
  // oracles/unit_examples.py: (420, 165, 2)
  const auto px = Project({0.4, -0.3, 2.0}, kK);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, 420.0, 1e-12);
  EXPECT_NEAR(px->v, 165.0, 1e-12);
  EXPECT_NEAR(*px->depth, 2.0, 1e-12);
}

TEST(Project, OutsideImageIsOutOfView) {
  EXPECT_FALSE(Project({2.0, 0.0, 1.0}, kK));
  EXPECT_FALSE(Project({0.0, -1.0, 1.0}, kK));
}

TEST(Backproject, PrincipalPoint) {
  EXPECT_TRUE(Backproject(320.0, 240.0, 3.0, kK).isApprox(Point3(0.0, 0.0, 3.0)));
}

TEST(Backproject, InverseOfProjectionExample) {
  EXPECT_LT((Backproject(420.0, 165.0, 2.0, kK) - Point3(0.4, -0.3, 2.0)).norm(), 1e-12);
}

TEST(Backproject, RejectsNonPositiveDepth) {
  EXPECT_THROW(Backproject(10.0, 10.0, 0.0, kK), std::invalid_argument);
  EXPECT_THROW(Backproject(10.0, 10.0, -1.0, kK), std::invalid_argument);
}

TEST(Backproject, RoundTrip) {
  SplitMix64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const double u = rng.Uniform(0.0, 639.0);
    const double v = rng.Uniform(0.0, 479.0);
    const double z = rng.Uniform(0.5, 10.0);
    const auto px = Project(Backproject(u, v, z, kK), kK);
    ASSERT_TRUE(px);
    EXPECT_NEAR(px->u, u, 1e-9);
    EXPECT_NEAR(px->v, v, 1e-9);
    EXPECT_NEAR(*px->depth, z, 1e-9);
  }
}

TEST(Parallax, Examples) {
  EXPECT_DOUBLE_EQ(ParallaxAngleDeg({0, 0, 1}, {1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_NEAR(ParallaxAngleDeg({0, 0, 1}, {-1, 0, 0}, {1, 0, 0}), 90.0, 1e-12);
  EXPECT_NEAR(ParallaxAngleDeg({0, 0, 2}, {0, 0, 0}, {0.5, 0, 0}), 14.036243467926479, 1e-9);
  EXPECT_THROW(ParallaxAngleDeg({0, 0, 1}, {0, 0, 1}, {1, 0, 0}), std::invalid_argument);
}

TEST(Pose, ExpOfZeroIsIdentity) {
  const Pose p = Exp(Vector6d::Zero());
  EXPECT_TRUE(p.Matrix().isIdentity(0.0));
}

TEST(Pose, ComposeWithInverse) {
  SplitMix64 rng(5);
  const Pose p = Exp(testing::RandomTwist(rng, 2.0, 1.5));
  EXPECT_TRUE((p * p.Inverse()).Matrix().isIdentity(1e-12));
  EXPECT_TRUE((p.Inverse() * p).Matrix().isIdentity(1e-12));
}

TEST(Pose, ActsAsCameraToWorld) {
  const Pose p(Eigen::Quaterniond(Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitZ())), Eigen::Vector3d(1, 0, 0));
  EXPECT_TRUE((p * Point3(1, 0, 0)).isApprox(Point3(1, 1, 0)));
}

TEST(Pose, ExpLogRoundTrip) {
  SplitMix64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vector6d xi = testing::RandomTwist(rng, 3.0, 1.0);
    const double angle = xi.tail<3>().norm();
    if (angle >= 3.0) xi.tail<3>() *= 2.9 / angle;
    worst = std::max(worst, (Log(Exp(xi)) - xi).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Pose, SmallRotationTaylorBranch) {
  Vector6d xi;
  xi << 0.1, -0.2, 0.3, 1e-10, -2e-10, 3e-10;
  EXPECT_LT((Log(Exp(xi)) - xi).norm(), 1e-15);
}

TEST(Interpolate, Endpoints) {
  SplitMix64 rng(9);
  const Pose a = Exp(testing::RandomTwist(rng, 1.0, 1.0));
  const Pose b = Exp(testing::RandomTwist(rng, 1.0, 1.0));
  EXPECT_TRUE(Interpolate(a, b, 0.0).Matrix().isApprox(a.Matrix(), 1e-12));
  EXPECT_TRUE(Interpolate(a, b, 1.0).Matrix().isApprox(b.Matrix(), 1e-12));
}

TEST(ProjectionJacobian, MatchesCentralDifferences) {
  SplitMix64 rng(21);
  const Intrinsics k = testing::TestIntrinsics();
  for (int trial = 0; trial < 20; ++trial) {
    const Pose w2c = Exp(testing::RandomTwist(rng, 0.3, 0.3));
    const Point3 pw = w2c.Inverse() * Point3(rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(1.5, 4.0));
    const auto jac = ProjectionJacobian(w2c, pw, k);
    const double h = 1e-6;
    for (int c = 0; c < 6; ++c) {
      Vector6d d = Vector6d::Zero();
      d[c] = h;
      const Eigen::Vector2d plus = ProjectUnbounded(Exp(d) * w2c * pw, k);
      const Eigen::Vector2d minus = ProjectUnbounded(Exp(-d) * w2c * pw, k);
      const Eigen::Vector2d numeric = (plus - minus) / (2 * h);
      EXPECT_LT((numeric - jac.col(c)).norm(), 1e-4 * std::max(1.0, numeric.norm()));
    }
  }
}

TEST(Intrinsics, Validate) {
  EXPECT_NO_THROW(kK.Validate());
  Intrinsics bad = kK;
  bad.fx = 0.0;
  EXPECT_THROW(bad.Validate(), std::invalid_argument);
  bad = kK;
  bad.width = 0;
  EXPECT_THROW(bad.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mvdyn
