#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvdyn/dataset.hpp"
#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"

namespace mvdyn::eval {

struct AteReport {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  /// Maps estimated positions onto ground truth: gt ~ scale * R * est + t.
  Pose alignment;
  double scale = 1.0;
  std::size_t matched_pairs = 0;
  /// Translational residual per matched pair, in association order.
  std::vector<double> errors;
};

/// Translation-only ATE after closed-form least-squares alignment of the
/// associated positions. Throws std::invalid_argument with fewer than 2 pairs.
AteReport Ate(const Trajectory& est, const Trajectory& gt, double max_diff = kDefaultAssociationTolerance,
              bool with_scale = false);

/// Estimated trajectory mapped into the ground-truth frame by `report`.
Trajectory AlignTrajectory(const Trajectory& est, const AteReport& report);

struct RpeBucket {
  double length = 0.0;
  std::size_t segments = 0;
  double translational = 0.0;  // percent of segment length
  double rotational = 0.0;     // degrees per 100 m
};

struct RpeReport {
  double translational = 0.0;
  double rotational = 0.0;
  std::size_t segments = 0;
  std::vector<RpeBucket> buckets;
};

inline const std::vector<double> kDefaultSegmentLengths = {0.1, 0.2, 0.5, 1.0};

/// KITTI-style relative errors over segments of the given ground-truth path
/// lengths, averaged over all segments. Throws std::invalid_argument when no
/// segment fits.
RpeReport Rpe(const Trajectory& est, const Trajectory& gt,
              const std::vector<double>& segment_lengths = kDefaultSegmentLengths,
              double max_diff = kDefaultAssociationTolerance, int step = 1);

/// Percentage of `true` entries; 0 for an empty timeline.
double TrackedFraction(const std::vector<bool>& tracked);

struct MaskCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct MaskScores {
  double precision = 1.0;
  double recall = 1.0;
  double iou = 1.0;
};

/// Precision is 1 without predictions, recall is 1 without positives, IoU is
/// 1 when both are empty.
MaskScores Scores(const MaskCounts& c);

struct MaskReport {
  MaskCounts totals;
  MaskScores overall;
  std::vector<MaskScores> per_frame;
};

MaskCounts CountMask(const Mask& pred, const Mask& gt);

/// Streaming accumulator; Report() gives the same numbers as MaskMetrics on
/// the same frames.
class MaskAccumulator {
 public:
  void Add(const Mask& pred, const Mask& gt);
  MaskReport Report() const;

 private:
  MaskReport report_;
};

MaskReport MaskMetrics(const std::vector<Mask>& pred, const std::vector<Mask>& gt);

std::string ToJson(const AteReport& r);
std::string ToJson(const RpeReport& r);
std::string ToJson(const MaskReport& r);

}  // namespace mvdyn::eval
