#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mvdyn/features.hpp"
#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"

namespace mvdyn {

// ---------------------------------------------------------------------------
// Pose-only optimization

struct Correspondence {
  Point3 point_world;
  Eigen::Vector2d pixel;
};

/// chi-square 95% quantile for 2 degrees of freedom.
constexpr double kChi2TwoDof = 5.991;

struct PoseOptimizerParams {
  double huber_delta = std::sqrt(kChi2TwoDof);
  /// Squared pixel residual below which a correspondence is an inlier (sigma = 1 px).
  double inlier_chi2 = kChi2TwoDof;
  int max_iterations = 20;
  double min_cost_decrease = 1e-6;
  /// Outlier re-classification rounds; each round re-solves on the current inliers.
  int rejection_rounds = 4;
};

struct PoseOptimizationResult {
  Pose pose;  // camera-to-world
  std::vector<char> inliers;
  int num_inliers = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  /// False when the solver stopped on an iterate it could not improve
  /// further (oscillation or line-search failure) rather than on the
  /// cost-decrease tolerance.
  bool converged = true;
};

/// Huber-robust squared pixel error summed over `correspondences`.
double RobustReprojectionCost(const Pose& camera_to_world,
                              std::span<const Correspondence> correspondences,
                              const Intrinsics& k, double huber_delta);

/// Gauss-Newton on a left twist perturbation of the world-to-camera transform,
/// with step halving so accepted iterates never increase the robust cost.
/// Throws DegenerateProblem with fewer than 6 correspondences.
PoseOptimizationResult OptimizePose(const Pose& initial_camera_to_world,
                                    std::span<const Correspondence> correspondences,
                                    const Intrinsics& k, const PoseOptimizerParams& params = {});

// ---------------------------------------------------------------------------
// Map and keyframes

struct MapPoint {
  int id = -1;
  Point3 position = Point3::Zero();
  Descriptor descriptor{};
  int observation_count = 1;
  int last_seen_frame = -1;
  int source_keyframe = -1;
  int visible_count = 0;
  int found_count = 0;
};

struct Keyframe {
  int frame_id = -1;
  double timestamp = 0.0;
  Pose pose;  // camera-to-world at selection time
  /// Keypoints outside this keyframe's dynamic mask (and its contour margin).
  std::vector<Keypoint> keypoints;
  /// Map point id per keypoint, -1 when none.
  std::vector<int> map_point_ids;
  RgbImage rgb;
  DepthMap depth;
  /// Dynamic mask at insertion time; empty image when none was computed.
  Mask dynamic_mask;
};

struct TrackerParams {
  DetectorParams detector;
  int contour_margin = 3;
  double search_radius = 15.0;
  double refine_radius = 4.0;
  int max_hamming = 80;
  double match_ratio = 0.9;
  int min_inliers = 15;
  int keyframe_interval = 10;
  double keyframe_ratio = 0.7;
  std::size_t keyframe_capacity = 20;
  PoseOptimizerParams optimizer;
};

struct TrackResult {
  Pose pose;  // camera-to-world
  int inliers = 0;
  int matches = 0;
  int visible_map_points = 0;
  bool tracked = false;
  bool used_motion_model = false;
  /// Map point id matched to each input keypoint (inliers only), -1 otherwise.
  std::vector<int> keypoint_map_points;
};

/// Sparse-map tracker: projects the local map with a motion-model prediction,
/// matches in a search window around each projection and refines the pose
/// on the matches.
class Tracker {
 public:
  Tracker(const TrackerParams& params, const Intrinsics& intrinsics);

  bool initialized() const { return initialized_; }
  const TrackerParams& params() const { return params_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }

  /// Starts a new map at `pose` from the given static keypoints; the frame
  /// becomes a keyframe. Existing keyframes survive, map points do not.
  TrackResult Bootstrap(int frame_id, double timestamp, const Pose& pose,
                        const std::vector<Keypoint>& static_keypoints, const RgbImage& rgb,
                        const DepthMap& depth, const Mask& dynamic_mask);

  /// Constant-velocity prediction of the next pose.
  Pose PredictPose() const;

  /// Pose estimate for the given (already filtered) keypoints; does not
  /// modify the tracker. `initial` overrides the motion-model prediction.
  TrackResult Estimate(const std::vector<Keypoint>& keypoints,
                       std::optional<Pose> initial = std::nullopt) const;

  /// Accepts `result` as the pose of frame `frame_id`: updates the motion
  /// model and map point statistics. A lost result leaves the map untouched
  /// and schedules a re-bootstrap.
  void Commit(int frame_id, const TrackResult& result);

  bool NeedsKeyframe(const TrackResult& result) const;

  /// Adds a keyframe and creates map points from its unmatched keypoints
  /// with valid depth, back-projected through `result.pose`.
  void InsertKeyframe(int frame_id, double timestamp, const TrackResult& result,
                      const std::vector<Keypoint>& static_keypoints, const RgbImage& rgb,
                      const DepthMap& depth, const Mask& dynamic_mask);

  /// Records a pose supplied from outside (ground truth) as the frame pose.
  void SetPose(int frame_id, const Pose& pose);

  bool needs_reinit() const { return needs_reinit_; }
  const std::deque<Keyframe>& keyframes() const { return keyframes_; }
  const std::map<int, MapPoint>& map_points() const { return map_points_; }
  int frames_since_keyframe(int frame_id) const { return frame_id - last_keyframe_id_; }
  const Pose& last_pose() const { return last_pose_; }

 private:
  struct ProjectionMatch {
    int map_point = -1;
    int keypoint = -1;
    int distance = 0;
  };

  std::vector<ProjectionMatch> SearchByProjection(const std::vector<Keypoint>& keypoints,
                                                  const KeypointIndex& index, const Pose& pose,
                                                  double radius, int* visible) const;
  void AddKeyframe(Keyframe kf);
  void CreateMapPoints(Keyframe& kf, const std::vector<int>& matched);

  TrackerParams params_;
  Intrinsics intrinsics_;
  bool initialized_ = false;
  bool needs_reinit_ = false;
  bool has_velocity_ = false;
  Pose last_pose_;
  Pose velocity_;
  int last_frame_id_ = -1;
  int last_keyframe_id_ = -1;
  int next_map_point_id_ = 0;
  std::deque<Keyframe> keyframes_;
  std::map<int, MapPoint> map_points_;
};

/// Depth at an integer-rounded keypoint location, 0 when invalid or outside.
double DepthAt(const DepthMap& depth, const Keypoint& kp);

}  // namespace mvdyn
