#pragma once

#include <deque>
#include <optional>
#include <string_view>
#include <vector>

#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"
#include "mvdyn/tracking.hpp"

namespace mvdyn {

/// Parameters of the multi-view dynamic-content segmentation.
struct SegParams {
  /// Depth-difference threshold (m): z_proj - z' above this marks a keypoint dynamic.
  double tau_z = 0.4;
  /// Parallax angle (deg) above which a keypoint is ignored as possibly occluded.
  double parallax_max_deg = 30.0;
  /// Number of highest-overlap keyframes tested against each frame.
  int overlap_keyframes = 5;
  int border_patch = 7;
  /// Depth variance (m^2) above which a dynamic keypoint is treated as lying on a border.
  double border_var_max = 0.04;
  double grow_depth_tol = 0.05;
  int grow_connectivity = 8;
  /// Overlap score normalizers: s = |t_rel| / dist_norm + angle_rel / angle_norm.
  double overlap_dist_norm = 0.5;
  double overlap_angle_norm_deg = 30.0;
  /// A semantic component is superseded when the geometric mask covers more
  /// than this fraction of it.
  double semantic_overlap_drop = 0.2;
  /// Projections from different keyframes within this radius (px) vote together.
  double vote_radius = 2.0;

  /// Throws std::invalid_argument naming the offending field.
  void Validate() const;
};

enum class KeypointLabel { kStatic, kDynamic, kHighParallax, kNoDepth, kOutOfView };

std::string_view ToString(KeypointLabel label);

struct KeypointTest {
  KeypointLabel label = KeypointLabel::kOutOfView;
  /// Projection x' in the current frame (valid unless kOutOfView).
  double u = 0.0;
  double v = 0.0;
  double z_proj = 0.0;
  /// Measured depth z' at x' (valid for kStatic / kDynamic).
  double z_measured = 0.0;
  double delta_z = 0.0;
  double parallax_deg = 0.0;
};

using KeyframeRefs = std::vector<const Keyframe*>;

KeyframeRefs AllKeyframes(const std::deque<Keyframe>& buffer);

/// Overlap score of a keyframe relative to the current pose (lower = more overlap).
double OverlapScore(const Pose& keyframe_pose, const Pose& current_pose, const SegParams& p);

/// The n keyframes with the lowest overlap score, excluding `exclude_frame_id`.
/// Ties are broken towards the more recent keyframe.
KeyframeRefs SelectOverlapKeyframes(const KeyframeRefs& buffer, const Pose& current_pose, int n,
                                    const SegParams& p, int exclude_frame_id = -1);

/// Bilinear depth read over the valid pixels among the four neighbours of
/// (u, v); nullopt when all four are invalid or outside the image.
std::optional<double> SampleDepthBilinear(const DepthMap& depth, double u, double v);

/// Projects keyframe pixel (u, v) with depth z_kf into the current frame and
/// applies the parallax and depth-difference tests.
KeypointTest ClassifyKeypoint(double u, double v, double z_kf, const Pose& pose_kf,
                              const Pose& pose_cf, const DepthMap& cf_depth, const Intrinsics& k,
                              const SegParams& p);

/// Variance of the valid depths in the border_patch window centred on
/// (u, v); nullopt when the window holds no valid depth.
std::optional<double> PatchDepthVariance(const DepthMap& depth, double u, double v, int patch);

/// Relabels a dynamic keypoint as static when its depth neighbourhood has
/// high variance. Other labels pass through.
KeypointLabel BorderCorrection(KeypointLabel label, const DepthMap& cf_depth, double u, double v,
                               const SegParams& p);

struct PixelCoord {
  int u = 0;
  int v = 0;
  bool operator==(const PixelCoord&) const = default;
};

/// Flood fill from every seed through valid depths whose neighbour-to-
/// neighbour difference is at most grow_depth_tol.
Mask GrowMask(const std::vector<PixelCoord>& seeds, const DepthMap& depth, const SegParams& p);

/// geometric ∪ (semantic components not superseded by the geometric mask).
Mask FuseMasks(const Mask& geometric, const Mask& semantic, double overlap_drop = 0.2);

struct ProjectedKeypoint {
  int keyframe_id = -1;
  int keypoint_index = -1;
  double kf_u = 0.0;
  double kf_v = 0.0;
  KeypointTest test;
  /// Label after border correction.
  KeypointLabel label = KeypointLabel::kOutOfView;
};

struct DynMask {
  Mask geometric;
  Mask semantic;
  Mask fused;
  /// Current-frame pixels that seeded the geometric mask.
  std::vector<PixelCoord> dynamic_keypoints;
  std::vector<ProjectedKeypoint> projections;
  std::vector<int> keyframe_ids;
};

/// Geometric segmentation of the current frame against its overlapping
/// keyframes, fused with the optional semantic mask. With no usable keyframe
/// the result degrades to the semantic mask alone.
DynMask SegmentFrame(const DepthMap& depth, const std::optional<Mask>& semantic,
                     const KeyframeRefs& keyframes, const Pose& current_pose, int frame_id,
                     const Intrinsics& k, const SegParams& p);

/// Keypoint-level projections of the selected keyframes without voting or
/// growing; shared by SegmentFrame and the threshold sweep.
std::vector<ProjectedKeypoint> ProjectKeyframeKeypoints(const DepthMap& depth,
                                                        const KeyframeRefs& selected,
                                                        const Pose& current_pose,
                                                        const Intrinsics& k, const SegParams& p);

struct SweepSample {
  DepthMap depth;
  Pose pose;
  int frame_id = -1;
  std::vector<Keyframe> keyframes;
  Mask ground_truth;
};

struct SweepRow {
  double tau_z = 0.0;
  double precision = 1.0;
  double recall = 1.0;
  double score = 0.0;
  long true_positives = 0;
  long false_positives = 0;
  long false_negatives = 0;
};

struct SweepResult {
  double best_tau_z = 0.0;
  std::vector<SweepRow> table;
};

/// Evaluates keypoint-level precision / recall of the geometric test for each
/// candidate threshold and returns the maximizer of
/// w_precision * P + w_recall * R (ties go to the smaller threshold).
/// Precision is 1 when nothing is predicted dynamic; recall is 1 when the
/// ground truth has no dynamic keypoints.
SweepResult SweepTauZ(const std::vector<SweepSample>& samples, const std::vector<double>& candidates,
                      const Intrinsics& k, const SegParams& base, double w_precision = 0.7,
                      double w_recall = 0.3);

}  // namespace mvdyn
