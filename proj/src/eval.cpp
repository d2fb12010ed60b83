#include "mvdyn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Geometry>
#include <json.hpp>

namespace mvdyn::eval {
namespace {

using nlohmann::json;

struct Paired {
  std::vector<Pose> est;
  std::vector<Pose> gt;
};

Paired Pair(const Trajectory& est, const Trajectory& gt, double max_diff) {
  std::vector<double> te, tg;
  te.reserve(est.size());
  tg.reserve(gt.size());
  for (const auto& s : est) te.push_back(s.timestamp);
  for (const auto& s : gt) tg.push_back(s.timestamp);
  const Association assoc = Associate(te, tg, max_diff);
  Paired out;
  for (const MatchedPair& m : assoc.pairs) {
    out.est.push_back(est[m.index_a].pose);
    out.gt.push_back(gt[m.index_b].pose);
  }
  return out;
}

}  // namespace

AteReport Ate(const Trajectory& est, const Trajectory& gt, double max_diff, bool with_scale) {
  const Paired p = Pair(est, gt, max_diff);
  const std::size_t n = p.est.size();
  if (n < 2) throw std::invalid_argument("ate: fewer than 2 associated poses");
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    src.col(static_cast<Eigen::Index>(i)) = p.est[i].translation();
    dst.col(static_cast<Eigen::Index>(i)) = p.gt[i].translation();
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, with_scale);
  const Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  const double scale = with_scale ? std::cbrt(sr.determinant()) : 1.0;

  AteReport r;
  r.scale = scale;
  r.alignment = Pose(Eigen::Matrix3d(sr / scale), Eigen::Vector3d(t.topRightCorner<3, 1>()));
  r.matched_pairs = n;
  r.errors.reserve(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d aligned = sr * src.col(static_cast<Eigen::Index>(i)) + t.topRightCorner<3, 1>();
    const double e = (aligned - dst.col(static_cast<Eigen::Index>(i))).norm();
    r.errors.push_back(e);
    sq += e * e;
  }
  r.rmse = std::sqrt(sq / n);
  r.mean = std::accumulate(r.errors.begin(), r.errors.end(), 0.0) / n;
  r.max = *std::max_element(r.errors.begin(), r.errors.end());
  std::vector<double> sorted = r.errors;
  std::sort(sorted.begin(), sorted.end());
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return r;
}

Trajectory AlignTrajectory(const Trajectory& est, const AteReport& report) {
  Trajectory out;
  out.reserve(est.size());
  const Eigen::Matrix3d r = report.alignment.RotationMatrix();
  for (const auto& s : est) {
    const Eigen::Vector3d t = report.scale * (r * s.pose.translation()) + report.alignment.translation();
    out.push_back({s.timestamp, Pose(report.alignment.rotation() * s.pose.rotation(), t)});
  }
  return out;
}

RpeReport Rpe(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths,
              double max_diff, int step) {
  if (step < 1) throw std::invalid_argument("rpe: step must be >= 1");
  const Paired p = Pair(est, gt, max_diff);
  const std::size_t n = p.gt.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    dist[i] = dist[i - 1] + (p.gt[i].translation() - p.gt[i - 1].translation()).norm();
  }

  RpeReport r;
  double t_sum = 0.0, r_sum = 0.0;
  for (double len : segment_lengths) {
    if (!(len > 0.0)) throw std::invalid_argument("rpe: segment lengths must be positive");
    RpeBucket bucket;
    bucket.length = len;
    for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(step)) {
      // First pose whose path distance exceeds the segment length.
      const auto it = std::upper_bound(dist.begin() + static_cast<std::ptrdiff_t>(i), dist.end(), dist[i] + len);
      if (it == dist.end()) break;
      const std::size_t j = static_cast<std::size_t>(it - dist.begin());
      const Pose gt_rel = p.gt[i].Inverse() * p.gt[j];
      const Pose est_rel = p.est[i].Inverse() * p.est[j];
      const Pose err = gt_rel.Inverse() * est_rel;
      const double te = err.translation().norm() / len * 100.0;
      const double re = Rad2Deg(RotationAngle(err.rotation())) / len * 100.0;
      bucket.translational += te;
      bucket.rotational += re;
      ++bucket.segments;
      t_sum += te;
      r_sum += re;
    }
    r.segments += bucket.segments;
    if (bucket.segments) {
      bucket.translational /= bucket.segments;
      bucket.rotational /= bucket.segments;
    }
    r.buckets.push_back(bucket);
  }
  if (r.segments == 0) throw std::invalid_argument("rpe: trajectory too short for any segment length");
  r.translational = t_sum / r.segments;
  r.rotational = r_sum / r.segments;
  return r;
}

double TrackedFraction(const std::vector<bool>& tracked) {
  if (tracked.empty()) return 0.0;
  const auto n = std::count(tracked.begin(), tracked.end(), true);
  return 100.0 * static_cast<double>(n) / static_cast<double>(tracked.size());
}

MaskScores Scores(const MaskCounts& c) {
  MaskScores s;
  s.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 1.0;
  s.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 1.0;
  const std::size_t uni = c.tp + c.fp + c.fn;
  s.iou = uni ? static_cast<double>(c.tp) / static_cast<double>(uni) : 1.0;
  return s;
}

MaskCounts CountMask(const Mask& pred, const Mask& gt) {
  RequireSameSize(pred, gt, "mask_metrics");
  MaskCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

void MaskAccumulator::Add(const Mask& pred, const Mask& gt) {
  const MaskCounts c = CountMask(pred, gt);
  report_.totals.tp += c.tp;
  report_.totals.fp += c.fp;
  report_.totals.fn += c.fn;
  report_.totals.tn += c.tn;
  report_.per_frame.push_back(Scores(c));
}

MaskReport MaskAccumulator::Report() const {
  MaskReport r = report_;
  r.overall = Scores(r.totals);
  return r;
}

MaskReport MaskMetrics(const std::vector<Mask>& pred, const std::vector<Mask>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("mask_metrics: frame count mismatch");
  MaskReport r;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const MaskCounts c = CountMask(pred[f], gt[f]);
    r.per_frame.push_back(Scores(c));
    r.totals.tp += c.tp;
    r.totals.fp += c.fp;
    r.totals.fn += c.fn;
    r.totals.tn += c.tn;
  }
  r.overall = Scores(r.totals);
  return r;
}

std::string ToJson(const AteReport& r) {
  const auto& q = r.alignment.rotation();
  const auto& t = r.alignment.translation();
  json j = {{"rmse", r.rmse},
            {"mean", r.mean},
            {"median", r.median},
            {"max", r.max},
            {"matched_pairs", r.matched_pairs},
            {"scale", r.scale},
            {"alignment", {{"translation", {t.x(), t.y(), t.z()}}, {"rotation_wxyz", {q.w(), q.x(), q.y(), q.z()}}}}};
  return j.dump(2);
}

std::string ToJson(const RpeReport& r) {
  json buckets = json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back({{"length", b.length},
                       {"segments", b.segments},
                       {"translational_percent", b.translational},
                       {"rotational_deg_per_100m", b.rotational}});
  }
  json j = {{"translational_percent", r.translational},
            {"rotational_deg_per_100m", r.rotational},
            {"segments", r.segments},
            {"buckets", buckets}};
  return j.dump(2);
}

std::string ToJson(const MaskReport& r) {
  json frames = json::array();
  for (const auto& s : r.per_frame) frames.push_back({{"precision", s.precision}, {"recall", s.recall}, {"iou", s.iou}});
  json j = {{"precision", r.overall.precision},
            {"recall", r.overall.recall},
            {"iou", r.overall.iou},
            {"tp", r.totals.tp},
            {"fp", r.totals.fp},
            {"fn", r.totals.fn},
            {"per_frame", frames}};
  return j.dump(2);
}

}  // namespace mvdyn::eval
