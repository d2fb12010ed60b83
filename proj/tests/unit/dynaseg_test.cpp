#include <gtest/gtest.h>

#include <algorithm>

#include "mvdyn/dynaseg.hpp"
#include "support.hpp"

namespace mvdyn {
namespace {

const Intrinsics kK = testing::TestIntrinsics();

DepthMap Constant(float z) { return DepthMap(kK.width, kK.height, z); }

TEST(Classify, StaticPointExactDepth) {
  const Pose kf;
  const Pose cf(Eigen::Quaterniond(Eigen::AngleAxisd(0.05, Eigen::Vector3d::UnitY())), Eigen::Vector3d(0.1, 0.0, 0.0));
  // Plane z = 2 in the world, seen by the current camera.
  DepthMap depth(kK.width, kK.height, 0.0f);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const Eigen::Vector3d ray = cf.rotation() * Backproject(u, v, 1.0, kK);
      depth(u, v) = static_cast<float>((2.0 - cf.translation().z()) / ray.z());
    }
  }
  const KeypointTest t = ClassifyKeypoint(320.0, 240.0, 2.0, kf, cf, depth, kK, {});
  EXPECT_EQ(t.label, KeypointLabel::kStatic);
  EXPECT_NEAR(t.delta_z, 0.0, 1e-3);
}

TEST(Classify, DepthDifferenceAboveThresholdIsDynamic) {
  const KeypointTest t = ClassifyKeypoint(300.0, 200.0, 2.0, Pose(), Pose(), Constant(1.5f), kK, {});
  EXPECT_EQ(t.label, KeypointLabel::kDynamic);
  EXPECT_NEAR(t.z_proj, 2.0, 1e-12);
  EXPECT_NEAR(t.delta_z, 0.5, 1e-6);
}

TEST(Classify, DepthDifferenceAtThresholdIsStatic) {
  const KeypointTest t = ClassifyKeypoint(300.0, 200.0, 2.0, Pose(), Pose(), Constant(1.75f), kK, {});
  EXPECT_EQ(t.label, KeypointLabel::kStatic);
}

TEST(Classify, HighParallaxRegardlessOfDepth) {
  // The current camera looks at X = (0, 0, 1) from 35 degrees off the keyframe ray.
  const double theta = Deg2Rad(-35.0);
  const Eigen::Vector3d look(std::sin(theta), 0.0, std::cos(theta));
  const Pose cf(Eigen::Quaterniond(Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY())), Eigen::Vector3d(0, 0, 1) - look);
  const KeypointTest t = ClassifyKeypoint(kK.cx, kK.cy, 1.0, Pose(), cf, Constant(0.2f), kK, {});
  EXPECT_EQ(t.label, KeypointLabel::kHighParallax);
  EXPECT_NEAR(t.parallax_deg, 35.0, 1e-9);
  EXPECT_NEAR(t.u, kK.cx, 1e-9);
}

TEST(Classify, OutOfViewAndNoDepth) {
  const Pose behind(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0, 0, 5));
  EXPECT_EQ(ClassifyKeypoint(300, 200, 2.0, Pose(), behind, Constant(1.0f), kK, {}).label, KeypointLabel::kOutOfView);
  EXPECT_EQ(ClassifyKeypoint(300, 200, 2.0, Pose(), Pose(), Constant(0.0f), kK, {}).label, KeypointLabel::kNoDepth);
  EXPECT_THROW(ClassifyKeypoint(300, 200, 0.0, Pose(), Pose(), Constant(1.0f), kK, {}), std::invalid_argument);
}

TEST(SampleDepthBilinear, InterpolatesOverValidNeighbours) {
  DepthMap d(4, 4, 0.0f);
  d(1, 1) = 1.0f;
  d(2, 1) = 2.0f;
  d(1, 2) = 3.0f;
  d(2, 2) = 4.0f;
  EXPECT_DOUBLE_EQ(*SampleDepthBilinear(d, 1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(*SampleDepthBilinear(d, 1.5, 1.5), 2.5);
  d(2, 2) = 0.0f;
  EXPECT_NEAR(*SampleDepthBilinear(d, 1.5, 1.5), 2.0, 1e-12);
  EXPECT_FALSE(SampleDepthBilinear(DepthMap(4, 4, 0.0f), 1.5, 1.5));
  EXPECT_FALSE(SampleDepthBilinear(d, 10.0, 1.0));
}

// 7x7 neighbourhood centred on (10, 10) of a 21x21 map.
DepthMap StepPatch(int near_cols, bool invalid_centre_column) {
  DepthMap d(21, 21, 2.0f);
  for (int v = 0; v < 21; ++v) {
    for (int u = 0; u < 21; ++u) {
      if (u < 7 + near_cols) d(u, v) = 1.0f;
      if (invalid_centre_column && u == 10) d(u, v) = 0.0f;
    }
  }
  return d;
}

TEST(Border, ConstantPatchKeepsLabel) {
  EXPECT_EQ(BorderCorrection(KeypointLabel::kDynamic, DepthMap(21, 21, 1.0f), 10, 10, {}), KeypointLabel::kDynamic);
}

TEST(Border, OneMetreStepIsRelabeledStatic) {
  // Three near and three far columns around an invalid centre column.
  const DepthMap d = StepPatch(3, true);
  EXPECT_DOUBLE_EQ(*PatchDepthVariance(d, 10, 10, 7), 0.25);
  EXPECT_EQ(BorderCorrection(KeypointLabel::kDynamic, d, 10, 10, {}), KeypointLabel::kStatic);
}

TEST(Border, UnevenSplitVariance) {
  // numpy.var over a 3|4 column split: 0.24489795918367346.
  EXPECT_NEAR(*PatchDepthVariance(StepPatch(3, false), 10, 10, 7), 0.24489795918367346, 1e-12);
}

TEST(Border, AllInvalidPatchKeepsLabel) {
  EXPECT_FALSE(PatchDepthVariance(DepthMap(21, 21, 0.0f), 10, 10, 7));
  EXPECT_EQ(BorderCorrection(KeypointLabel::kDynamic, DepthMap(21, 21, 0.0f), 10, 10, {}), KeypointLabel::kDynamic);
}

TEST(Border, OtherLabelsPassThrough) {
  const DepthMap d = StepPatch(3, true);
  EXPECT_EQ(BorderCorrection(KeypointLabel::kStatic, d, 10, 10, {}), KeypointLabel::kStatic);
  EXPECT_EQ(BorderCorrection(KeypointLabel::kHighParallax, d, 10, 10, {}), KeypointLabel::kHighParallax);
}

// 32x32: rectangle [8, 20) x [10, 24) at 1 m on a 3 m background.
DepthMap RectangleScene() {
  DepthMap d(32, 32, 3.0f);
  for (int v = 10; v < 24; ++v) {
    for (int u = 8; u < 20; ++u) d(u, v) = 1.0f;
  }
  return d;
}

TEST(Grow, NoSeedsGivesEmptyMask) { EXPECT_EQ(CountSet(GrowMask({}, RectangleScene(), {})), 0u); }

TEST(Grow, FillsExactlyTheRectangle) {
  const Mask m = GrowMask({{12, 15}}, RectangleScene(), {});
  for (int v = 0; v < 32; ++v) {
    for (int u = 0; u < 32; ++u) EXPECT_EQ(m(u, v), (u >= 8 && u < 20 && v >= 10 && v < 24) ? 1 : 0);
  }
}

TEST(Grow, InvalidSeedStaysAlone) {
  DepthMap d = RectangleScene();
  d(12, 15) = 0.0f;
  const Mask m = GrowMask({{12, 15}}, d, {});
  EXPECT_EQ(CountSet(m), 1u);
  EXPECT_EQ(m(12, 15), 1);
}

TEST(Grow, FollowsSmoothRampButStopsAtSteps) {
  DepthMap d(32, 4, 0.0f);
  for (int u = 0; u < 32; ++u) {
    for (int v = 0; v < 4; ++v) d(u, v) = static_cast<float>(1.0 + 0.04 * u + (u >= 20 ? 0.5 : 0.0));
  }
  const Mask m = GrowMask({{0, 0}}, d, {});
  EXPECT_EQ(CountSet(m), 20u * 4u);
}

TEST(Grow, DiagonalNeedsEightConnectivity) {
  DepthMap d(8, 8, 0.0f);
  for (int i = 0; i < 8; ++i) d(i, i) = 1.0f;
  SegParams p;
  EXPECT_EQ(CountSet(GrowMask({{0, 0}}, d, p)), 8u);
  p.grow_connectivity = 4;
  EXPECT_EQ(CountSet(GrowMask({{0, 0}}, d, p)), 1u);
}

Mask Rect(int w, int h, int u0, int v0, int u1, int v1) {
  Mask m(w, h, 0);
  for (int v = v0; v < v1; ++v) {
    for (int u = u0; u < u1; ++u) m(u, v) = 1;
  }
  return m;
}

TEST(Fuse, EmptyInputs) {
  const Mask g = Rect(64, 64, 5, 5, 20, 20);
  const Mask empty(64, 64, 0);
  EXPECT_EQ(FuseMasks(g, empty), g);
  EXPECT_EQ(FuseMasks(empty, g), g);
}

TEST(Fuse, OverlappedComponentTakesGeometricContour) {
  // Semantic blob A [10,30)x[10,30) is half covered by geometric blob G
  // [20,40)x[10,30); semantic blob B [45,60)x[45,60) is disjoint.
  const Mask a = Rect(64, 64, 10, 10, 30, 30);
  const Mask b = Rect(64, 64, 45, 45, 60, 60);
  const Mask g = Rect(64, 64, 20, 10, 40, 30);
  const Mask fused = FuseMasks(g, MaskUnion(a, b));
  EXPECT_EQ(fused, MaskUnion(g, b));
  EXPECT_EQ(CountSet(fused), 20u * 20u + 15u * 15u);
}

TEST(Fuse, SmallOverlapKeepsSemanticComponent) {
  // 10 of 100 pixels covered: below the 20% drop fraction.
  const Mask a = Rect(64, 64, 0, 0, 10, 10);
  const Mask g = Rect(64, 64, 9, 0, 30, 10);
  EXPECT_EQ(FuseMasks(g, a), MaskUnion(a, g));
}

TEST(Fuse, SizeMismatch) { EXPECT_THROW(FuseMasks(Mask(4, 4), Mask(5, 4)), std::invalid_argument); }

std::deque<Keyframe> KeyframesOnLine() {
  std::deque<Keyframe> kfs;
  for (int i = 0; i < 10; ++i) {
    Keyframe kf;
    kf.frame_id = i;
    kf.pose = Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.07 * i - 0.3, 0.0, 0.0));
    kfs.push_back(kf);
  }
  return kfs;
}

TEST(Overlap, SingleKeyframe) {
  std::deque<Keyframe> kfs(1);
  kfs[0].frame_id = 3;
  const auto sel = SelectOverlapKeyframes(AllKeyframes(kfs), Pose(), 5, {});
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0]->frame_id, 3);
}

TEST(Overlap, CoincidentKeyframeRanksFirst) {
  const auto kfs = KeyframesOnLine();
  const auto sel = SelectOverlapKeyframes(AllKeyframes(kfs), kfs[7].pose, 5, {});
  EXPECT_EQ(sel.front()->frame_id, 7);
  EXPECT_DOUBLE_EQ(OverlapScore(kfs[7].pose, kfs[7].pose, {}), 0.0);
}

TEST(Overlap, FiveNearestOnALine) {
  // Positions 0.07 i - 0.3; sorted distances from the origin pick 4, 5, 3, 6, 2.
  const auto kfs = KeyframesOnLine();
  const auto sel = SelectOverlapKeyframes(AllKeyframes(kfs), Pose(), 5, {});
  std::vector<int> ids;
  for (const Keyframe* kf : sel) ids.push_back(kf->frame_id);
  EXPECT_EQ(ids, (std::vector<int>{4, 5, 3, 6, 2}));
}

TEST(Overlap, ExcludesCurrentFrame) {
  const auto kfs = KeyframesOnLine();
  const auto sel = SelectOverlapKeyframes(AllKeyframes(kfs), kfs[4].pose, 3, {}, 4);
  for (const Keyframe* kf : sel) EXPECT_NE(kf->frame_id, 4);
}

TEST(Overlap, RotationCounts) {
  const Pose turned(Eigen::Quaterniond(Eigen::AngleAxisd(Deg2Rad(30.0), Eigen::Vector3d::UnitY())), Eigen::Vector3d::Zero());
  EXPECT_NEAR(OverlapScore(turned, Pose(), {}), 1.0, 1e-12);
}

// Keyframe at the identity pose looking at a 3 m wall; in the current frame
// (same pose) a 1 m object covers columns [300, 400).
struct WallScene {
  Keyframe kf;
  DepthMap current = Constant(3.0f);
  Mask truth{kK.width, kK.height, 0};

  WallScene() {
    kf.frame_id = 0;
    kf.depth = Constant(3.0f);
    for (int v = 100; v < 400; v += 20) {
      for (int u = 40; u < 600; u += 20) {
        Keypoint kp;
        kp.u = u;
        kp.v = v;
        kf.keypoints.push_back(kp);
      }
    }
    for (int v = 0; v < kK.height; ++v) {
      for (int u = 300; u < 400; ++u) {
        current(u, v) = 1.0f;
        truth(u, v) = 1;
      }
    }
  }
};

TEST(Segment, GrowsObjectFromVotedKeypoints) {
  const WallScene s;
  const DynMask m = SegmentFrame(s.current, std::nullopt, {&s.kf}, Pose(), 5, kK, {});
  EXPECT_FALSE(m.dynamic_keypoints.empty());
  EXPECT_EQ(m.geometric, s.truth);
  EXPECT_EQ(m.fused, s.truth);
}

TEST(Segment, WithoutKeyframesFallsBackToSemantic) {
  const WallScene s;
  const DynMask m = SegmentFrame(s.current, s.truth, {}, Pose(), 5, kK, {});
  EXPECT_EQ(CountSet(m.geometric), 0u);
  EXPECT_EQ(m.fused, s.truth);
}

SweepSample Sample(const WallScene& s, bool object_present) {
  SweepSample sample;
  sample.depth = object_present ? s.current : Constant(3.0f);
  sample.frame_id = 5;
  sample.keyframes = {s.kf};
  sample.ground_truth = object_present ? s.truth : Mask(kK.width, kK.height, 0);
  return sample;
}

TEST(Sweep, SingleCandidate) {
  const WallScene s;
  const SweepResult r = SweepTauZ({Sample(s, true)}, {0.7}, kK, {});
  EXPECT_DOUBLE_EQ(r.best_tau_z, 0.7);
  ASSERT_EQ(r.table.size(), 1u);
}

TEST(Sweep, SeparableScene) {
  const WallScene s;
  const SweepResult r = SweepTauZ({Sample(s, true)}, {0.5, 1.0, 1.5, 2.5}, kK, {});
  // Object keypoints have delta_z = 2: found for tau < 2, missed at 2.5. The
  // column at u = 300 sits on the depth step and is border-corrected, so one
  // object keypoint in five is always missed.
  EXPECT_DOUBLE_EQ(r.best_tau_z, 0.5);
  EXPECT_DOUBLE_EQ(r.table[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(r.table[0].recall, 0.8);
  EXPECT_EQ(r.table[0].true_positives, r.table[2].true_positives);
  EXPECT_EQ(r.table[3].true_positives, 0);
  EXPECT_DOUBLE_EQ(r.table[3].precision, 1.0);
  EXPECT_DOUBLE_EQ(r.table[3].recall, 0.0);
  EXPECT_DOUBLE_EQ(r.table[3].score, 0.7);
}

TEST(Sweep, AllStaticGroundTruthConvention) {
  const WallScene s;
  const SweepResult r = SweepTauZ({Sample(s, false)}, {0.2, 0.4}, kK, {});
  for (const SweepRow& row : r.table) {
    EXPECT_DOUBLE_EQ(row.precision, 1.0);
    EXPECT_DOUBLE_EQ(row.recall, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.best_tau_z, 0.2);
  EXPECT_THROW(SweepTauZ({}, {}, kK, {}), std::invalid_argument);
}

TEST(SegParams, Validate) {
  SegParams p;
  EXPECT_NO_THROW(p.Validate());
  p.grow_connectivity = 6;
  EXPECT_THROW(p.Validate(), std::invalid_argument);
  p = {};
  p.tau_z = 0.0;
  EXPECT_THROW(p.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mvdyn
