#include <gtest/gtest.h>

#include <json.hpp>

#include "mvdyn/eval.hpp"
#include "support.hpp"

namespace mvdyn::eval {
namespace {

Trajectory Curve(int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    const double s = 0.05 * i;
    t.push_back({10.0 + 0.1 * i, Pose(Eigen::Quaterniond(Eigen::AngleAxisd(0.3 * s, Eigen::Vector3d::UnitZ())),
                                      Eigen::Vector3d(std::cos(s), std::sin(2 * s), 0.2 * s))});
  }
  return t;
}

Trajectory Transformed(const Trajectory& t, const Pose& g) {
  Trajectory out = t;
  for (auto& sp : out) sp.pose = g * sp.pose;
  return out;
}

TEST(Ate, IdenticalTrajectories) {
  const Trajectory gt = Curve(50);
  const AteReport r = Ate(gt, gt);
  EXPECT_NEAR(r.rmse, 0.0, 1e-12);
  EXPECT_EQ(r.matched_pairs, 50u);
}

TEST(Ate, RigidTransformIsAlignedAway) {
  const Trajectory gt = Curve(50);
  testing::SplitMix64 rng(17);
  const Pose g = Exp(testing::RandomTwist(rng, 3.0, 2.0));
  const AteReport r = Ate(Transformed(gt, g), gt);
  EXPECT_LT(r.rmse, 1e-9);
  const Trajectory aligned = AlignTrajectory(Transformed(gt, g), r);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    EXPECT_LT((aligned[i].pose.translation() - gt[i].pose.translation()).norm(), 1e-9);
  }
}

TEST(Ate, ScaleOnlyWithFlag) {
  const Trajectory gt = Curve(50);
  Trajectory est = gt;
  for (auto& sp : est) sp.pose = Pose(sp.pose.rotation(), 2.0 * sp.pose.translation());
  EXPECT_GT(Ate(est, gt).rmse, 0.1);
  const AteReport scaled = Ate(est, gt, kDefaultAssociationTolerance, true);
  EXPECT_LT(scaled.rmse, 1e-9);
  EXPECT_NEAR(scaled.scale, 0.5, 1e-9);
}

TEST(Ate, MonteCarloNoiseMatchesOracle) {
  // tests/oracles/ate_monte_carlo.py
  Trajectory gt, est;
  testing::MonteCarloAteCase(&gt, &est);
  const AteReport r = Ate(est, gt);
  EXPECT_NEAR(r.rmse, 0.016967819328885535, 1e-9);
  EXPECT_GE(r.rmse, 0.015);
  EXPECT_LE(r.rmse, 0.020);
}

TEST(Ate, NeedsTwoPairs) {
  const Trajectory gt = Curve(5);
  EXPECT_THROW(Ate(Trajectory{gt[0]}, gt), std::invalid_argument);
  Trajectory shifted = gt;
  for (auto& sp : shifted) sp.timestamp += 1.0;
  EXPECT_THROW(Ate(shifted, gt), std::invalid_argument);
}

TEST(Ate, UsesOnlyAssociatedPoses) {
  const Trajectory gt = Curve(20);
  Trajectory est = gt;
  for (auto& sp : est) sp.timestamp += 0.01;
  est.push_back({100.0, Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(50, 50, 50))});
  const AteReport r = Ate(est, gt);
  EXPECT_EQ(r.matched_pairs, 20u);
  EXPECT_LT(r.rmse, 1e-9);
}

Trajectory StraightLine(int n, double speed) {
  Trajectory t;
  for (int i = 0; i < n; ++i) t.push_back({static_cast<double>(i), Pose(Eigen::Quaterniond::Identity(), {speed * i, 0.0, 0.0})});
  return t;
}

TEST(Rpe, IdenticalTrajectories) {
  const Trajectory gt = Curve(60);
  const RpeReport r = Rpe(gt, gt);
  EXPECT_NEAR(r.translational, 0.0, 1e-9);
  EXPECT_NEAR(r.rotational, 0.0, 1e-9);
  EXPECT_GT(r.segments, 0u);
}

TEST(Rpe, OnePercentScaleOnStraightPath) {
  const Trajectory gt = StraightLine(200, 0.01);
  const Trajectory est = StraightLine(200, 0.0101);
  const RpeReport r = Rpe(est, gt, {0.5, 1.0});
  EXPECT_NEAR(r.translational, 1.0, 0.05);
  EXPECT_NEAR(r.rotational, 0.0, 1e-9);
}

TEST(Rpe, SinglePoseHasNoSegments) {
  const Trajectory gt = StraightLine(1, 0.01);
  EXPECT_THROW(Rpe(gt, gt), std::invalid_argument);
}

TEST(TrackedFraction, Percentages) {
  EXPECT_DOUBLE_EQ(TrackedFraction(std::vector<bool>(10, true)), 100.0);
  EXPECT_DOUBLE_EQ(TrackedFraction(std::vector<bool>(10, false)), 0.0);
  std::vector<bool> t(100, false);
  std::fill(t.begin(), t.begin() + 87, true);
  EXPECT_DOUBLE_EQ(TrackedFraction(t), 87.0);
}

TEST(MaskScores, Conventions) {
  Mask gt(8, 8, 0);
  gt(1, 1) = 1;
  const MaskScores same = Scores(CountMask(gt, gt));
  EXPECT_DOUBLE_EQ(same.precision, 1.0);
  EXPECT_DOUBLE_EQ(same.recall, 1.0);
  EXPECT_DOUBLE_EQ(same.iou, 1.0);
  const MaskScores empty_pred = Scores(CountMask(Mask(8, 8, 0), gt));
  EXPECT_DOUBLE_EQ(empty_pred.precision, 1.0);
  EXPECT_DOUBLE_EQ(empty_pred.recall, 0.0);
  EXPECT_DOUBLE_EQ(empty_pred.iou, 0.0);
  const MaskScores both_empty = Scores(CountMask(Mask(8, 8, 0), Mask(8, 8, 0)));
  EXPECT_DOUBLE_EQ(both_empty.iou, 1.0);
  EXPECT_THROW(CountMask(Mask(8, 8), Mask(4, 8)), std::invalid_argument);
}

TEST(MaskScores, CheckerboardAgainstSolidBruteForce) {
  Mask pred(16, 10, 0), gt(16, 10, 0);
  for (int v = 0; v < 10; ++v) {
    for (int u = 0; u < 16; ++u) {
      pred(u, v) = (u + v) % 2;
      gt(u, v) = u < 6;
    }
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] && gt[i];
    fp += pred[i] && !gt[i];
    fn += !pred[i] && gt[i];
    tn += !pred[i] && !gt[i];
  }
  const MaskCounts c = CountMask(pred, gt);
  EXPECT_EQ(c.tp, tp);
  EXPECT_EQ(c.fp, fp);
  EXPECT_EQ(c.fn, fn);
  EXPECT_EQ(c.tn, tn);
  const MaskScores s = Scores(c);
  EXPECT_DOUBLE_EQ(s.precision, static_cast<double>(tp) / (tp + fp));
  EXPECT_DOUBLE_EQ(s.recall, static_cast<double>(tp) / (tp + fn));
  EXPECT_DOUBLE_EQ(s.iou, static_cast<double>(tp) / (tp + fp + fn));
}

TEST(MaskMetrics, StreamingMatchesBatch) {
  testing::SplitMix64 rng(23);
  std::vector<Mask> preds, gts;
  MaskAccumulator acc;
  for (int f = 0; f < 6; ++f) {
    Mask p(20, 15, 0), g(20, 15, 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.Uniform() < 0.3;
      g[i] = rng.Uniform() < 0.25;
    }
    acc.Add(p, g);
    preds.push_back(p);
    gts.push_back(g);
  }
  const MaskReport batch = MaskMetrics(preds, gts);
  const MaskReport stream = acc.Report();
  EXPECT_EQ(stream.totals.tp, batch.totals.tp);
  EXPECT_EQ(stream.totals.fp, batch.totals.fp);
  EXPECT_EQ(stream.totals.fn, batch.totals.fn);
  EXPECT_DOUBLE_EQ(stream.overall.iou, batch.overall.iou);
  ASSERT_EQ(stream.per_frame.size(), 6u);
  EXPECT_EQ(ToJson(stream), ToJson(batch));
  EXPECT_THROW(MaskMetrics(preds, {}), std::invalid_argument);
}

TEST(Json, ReportsParse) {
  const Trajectory gt = Curve(60);
  const auto ate = nlohmann::json::parse(ToJson(Ate(gt, gt)));
  EXPECT_TRUE(ate.contains("rmse"));
  const auto rpe = nlohmann::json::parse(ToJson(Rpe(gt, gt)));
  EXPECT_TRUE(rpe.contains("translational_percent"));
}

}  // namespace
}  // namespace mvdyn::eval
