#include "mvdyn/tracking.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Cholesky>

#include "mvdyn/errors.hpp"

namespace mvdyn {
namespace {

constexpr int kMinCorrespondences = 6;
constexpr double kBehindCameraResidual = 1e3;
constexpr int kMaxStepHalvings = 10;

double HuberCost(double residual_norm, double delta) {
  if (residual_norm <= delta) return residual_norm * residual_norm;
  return 2.0 * delta * residual_norm - delta * delta;
}

double HuberWeight(double residual_norm, double delta) {
  return residual_norm <= delta ? 1.0 : delta / residual_norm;
}

// Residual obs - proj for world_to_camera; nullopt when behind the camera.
std::optional<Eigen::Vector2d> Residual(const Pose& world_to_camera, const Correspondence& c,
                                        const Intrinsics& k) {
  const Point3 p = world_to_camera * c.point_world;
  if (!(p.z() > 1e-6)) return std::nullopt;
  return c.pixel - ProjectUnbounded(p, k);
}

double CostWorldToCamera(const Pose& world_to_camera, std::span<const Correspondence> cs,
                         const std::vector<char>& active, const Intrinsics& k, double delta) {
  double cost = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!active[i]) continue;
    const auto r = Residual(world_to_camera, cs[i], k);
    cost += HuberCost(r ? r->norm() : kBehindCameraResidual, delta);
  }
  return cost;
}

struct SolveOutcome {
  Pose world_to_camera;
  int iterations = 0;
  bool converged = true;
};

SolveOutcome GaussNewton(Pose world_to_camera, std::span<const Correspondence> cs,
                         const std::vector<char>& active, const Intrinsics& k,
                         const PoseOptimizerParams& params) {
  SolveOutcome out;
  double cost = CostWorldToCamera(world_to_camera, cs, active, k, params.huber_delta);
  for (int it = 0; it < params.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!active[i]) continue;
      const auto r = Residual(world_to_camera, cs[i], k);
      if (!r) continue;
      const double w = HuberWeight(r->norm(), params.huber_delta);
      const Eigen::Matrix<double, 2, 6> j = ProjectionJacobian(world_to_camera, cs[i].point_world, k);
      h.noalias() += w * j.transpose() * j;
      b.noalias() += w * j.transpose() * (*r);
    }
    const Vector6d step = h.ldlt().solve(b);
    if (!step.allFinite()) {
      out.converged = false;
      break;
    }
    ++out.iterations;

    double scale = 1.0;
    bool accepted = false;
    double new_cost = cost;
    Pose candidate = world_to_camera;
    for (int halving = 0; halving <= kMaxStepHalvings; ++halving, scale *= 0.5) {
      candidate = Pose::Exp(scale * step) * world_to_camera;
      new_cost = CostWorldToCamera(candidate, cs, active, k, params.huber_delta);
      if (new_cost < cost) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No descent direction left: either at the optimum (cost already
      // negligible) or oscillating.
      out.converged = cost < params.min_cost_decrease;
      break;
    }
    const double decrease = cost - new_cost;
    world_to_camera = candidate;
    cost = new_cost;
    if (decrease < params.min_cost_decrease) break;
    if (it + 1 == params.max_iterations) out.converged = false;
  }
  out.world_to_camera = world_to_camera;
  return out;
}

}  // namespace

double RobustReprojectionCost(const Pose& camera_to_world,
                              std::span<const Correspondence> correspondences,
                              const Intrinsics& k, double huber_delta) {
  const std::vector<char> all(correspondences.size(), 1);
  return CostWorldToCamera(camera_to_world.Inverse(), correspondences, all, k, huber_delta);
}

PoseOptimizationResult OptimizePose(const Pose& initial_camera_to_world,
                                    std::span<const Correspondence> correspondences,
                                    const Intrinsics& k, const PoseOptimizerParams& params) {
  if (correspondences.size() < static_cast<std::size_t>(kMinCorrespondences)) {
    throw DegenerateProblem("optimize_pose: need at least 6 correspondences, got " +
                            std::to_string(correspondences.size()));
  }
  const std::size_t n = correspondences.size();
  const std::vector<char> all(n, 1);
  const Pose initial_wc = initial_camera_to_world.Inverse();

  PoseOptimizationResult result;
  result.initial_cost = CostWorldToCamera(initial_wc, correspondences, all, k, params.huber_delta);

  auto classify = [&](const Pose& wc, std::vector<char>* flags) {
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = Residual(wc, correspondences[i], k);
      (*flags)[i] = r && r->squaredNorm() < params.inlier_chi2;
      count += (*flags)[i];
    }
    return count;
  };

  Pose wc = initial_wc;
  std::vector<char> active = all;
  std::vector<char> flags(n, 0);
  const int rounds = std::max(params.rejection_rounds, 1);
  for (int round = 0; round < rounds; ++round) {
    const SolveOutcome s = GaussNewton(wc, correspondences, active, k, params);
    wc = s.world_to_camera;
    result.iterations += s.iterations;
    result.converged = s.converged;
    const int inliers = classify(wc, &flags);
    if (inliers < kMinCorrespondences || flags == active) break;
    active = flags;
  }

  result.final_cost = CostWorldToCamera(wc, correspondences, all, k, params.huber_delta);
  if (result.final_cost > result.initial_cost) {
    // Re-weighting on the inlier subset can raise the all-correspondence
    // cost; the best iterate under that cost is then the starting point.
    wc = initial_wc;
    result.final_cost = result.initial_cost;
    result.converged = false;
  }
  result.pose = wc.Inverse();
  result.inliers.assign(n, 0);
  result.num_inliers = classify(wc, &result.inliers);
  return result;
}

double DepthAt(const DepthMap& depth, const Keypoint& kp) {
  const int u = static_cast<int>(std::lround(kp.u));
  const int v = static_cast<int>(std::lround(kp.v));
  if (!depth.Contains(u, v)) return 0.0;
  const double d = depth(u, v);
  return d > 0.0 ? d : 0.0;
}

Tracker::Tracker(const TrackerParams& params, const Intrinsics& intrinsics)
    : params_(params), intrinsics_(intrinsics) {
  intrinsics_.Validate();
  if (params_.keyframe_capacity < 20) {
    throw std::invalid_argument("tracker: keyframe capacity must be at least 20");
  }
}

Pose Tracker::PredictPose() const {
  return has_velocity_ ? last_pose_ * velocity_ : last_pose_;
}

std::vector<Tracker::ProjectionMatch> Tracker::SearchByProjection(
    const std::vector<Keypoint>& keypoints, const KeypointIndex& index, const Pose& pose,
    double radius, int* visible) const {
  const Pose world_to_camera = pose.Inverse();
  std::vector<ProjectionMatch> candidates;
  *visible = 0;
  for (const auto& [id, mp] : map_points_) {
    const Point3 pc = world_to_camera * mp.position;
    if (!(pc.z() > 0.05)) continue;
    const Eigen::Vector2d px = ProjectUnbounded(pc, intrinsics_);
    if (px.x() < kPatchMargin || px.y() < kPatchMargin ||
        px.x() >= intrinsics_.width - kPatchMargin || px.y() >= intrinsics_.height - kPatchMargin) {
      continue;
    }
    ++*visible;
    int best = std::numeric_limits<int>::max();
    int second = std::numeric_limits<int>::max();
    int best_idx = -1;
    for (int idx : index.Query(px.x(), px.y(), radius)) {
      const int d = Hamming(mp.descriptor, keypoints[static_cast<std::size_t>(idx)].descriptor);
      if (d < best) {
        second = best;
        best = d;
        best_idx = idx;
      } else if (d < second) {
        second = d;
      }
    }
    if (best_idx < 0 || best > params_.max_hamming) continue;
    if (second != std::numeric_limits<int>::max() && !(best < params_.match_ratio * second)) continue;
    candidates.push_back({id, best_idx, best});
  }
  // One map point per keypoint: the closest descriptor wins, lower id on ties.
  std::vector<int> owner(keypoints.size(), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    int& o = owner[static_cast<std::size_t>(candidates[i].keypoint)];
    if (o < 0 || candidates[i].distance < candidates[static_cast<std::size_t>(o)].distance) {
      o = static_cast<int>(i);
    }
  }
  std::vector<ProjectionMatch> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (owner[static_cast<std::size_t>(candidates[i].keypoint)] == static_cast<int>(i)) {
      out.push_back(candidates[i]);
    }
  }
  return out;
}

TrackResult Tracker::Estimate(const std::vector<Keypoint>& keypoints,
                              std::optional<Pose> initial) const {
  TrackResult result;
  result.keypoint_map_points.assign(keypoints.size(), -1);
  Pose prediction = initial.value_or(PredictPose());
  result.used_motion_model = !initial && has_velocity_;
  result.pose = prediction;
  if (!initialized_ || needs_reinit_) return result;

  const KeypointIndex index(keypoints, intrinsics_.width, intrinsics_.height);
  int visible = 0;
  auto matches = SearchByProjection(keypoints, index, prediction, params_.search_radius, &visible);
  if (static_cast<int>(matches.size()) < params_.min_inliers && result.used_motion_model) {
    prediction = last_pose_;
    result.used_motion_model = false;
    result.pose = prediction;
    matches = SearchByProjection(keypoints, index, prediction, params_.search_radius, &visible);
  }
  result.visible_map_points = visible;
  result.matches = static_cast<int>(matches.size());
  if (static_cast<int>(matches.size()) < kMinCorrespondences) return result;

  auto solve = [&](const Pose& start, const std::vector<ProjectionMatch>& ms) {
    std::vector<Correspondence> cs;
    cs.reserve(ms.size());
    for (const auto& m : ms) {
      const Keypoint& kp = keypoints[static_cast<std::size_t>(m.keypoint)];
      cs.push_back({map_points_.at(m.map_point).position, Eigen::Vector2d(kp.u, kp.v)});
    }
    return OptimizePose(start, cs, intrinsics_, params_.optimizer);
  };

  PoseOptimizationResult opt = solve(prediction, matches);
  // Second pass in a tight window around the refined projections.
  int refined_visible = 0;
  auto refined = SearchByProjection(keypoints, index, opt.pose, params_.refine_radius, &refined_visible);
  if (refined.size() >= static_cast<std::size_t>(kMinCorrespondences)) {
    PoseOptimizationResult opt2 = solve(opt.pose, refined);
    if (opt2.num_inliers >= opt.num_inliers) {
      opt = std::move(opt2);
      matches = std::move(refined);
      result.visible_map_points = refined_visible;
      result.matches = static_cast<int>(matches.size());
    }
  }

  result.inliers = opt.num_inliers;
  result.tracked = opt.num_inliers >= params_.min_inliers;
  if (!result.tracked) return result;
  result.pose = opt.pose;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (opt.inliers[i]) {
      result.keypoint_map_points[static_cast<std::size_t>(matches[i].keypoint)] = matches[i].map_point;
    }
  }
  return result;
}

void Tracker::Commit(int frame_id, const TrackResult& result) {
  if (!result.tracked) {
    needs_reinit_ = true;
    last_pose_ = result.pose;
    last_frame_id_ = frame_id;
    return;
  }
  if (last_frame_id_ >= 0) {
    velocity_ = last_pose_.Inverse() * result.pose;
    has_velocity_ = true;
  }
  last_pose_ = result.pose;
  last_frame_id_ = frame_id;

  const Pose world_to_camera = result.pose.Inverse();
  for (auto& [id, mp] : map_points_) {
    const Point3 pc = world_to_camera * mp.position;
    if (!(pc.z() > 0.05)) continue;
    const Eigen::Vector2d px = ProjectUnbounded(pc, intrinsics_);
    if (px.x() >= 0 && px.y() >= 0 && px.x() < intrinsics_.width && px.y() < intrinsics_.height) {
      ++mp.visible_count;
    }
  }
  for (int id : result.keypoint_map_points) {
    if (id < 0) continue;
    auto it = map_points_.find(id);
    if (it == map_points_.end()) continue;
    ++it->second.found_count;
    ++it->second.observation_count;
    it->second.last_seen_frame = frame_id;
  }
  // Points that keep failing to match where they should be visible are
  // unreliable (often on objects that moved).
  for (auto it = map_points_.begin(); it != map_points_.end();) {
    const MapPoint& mp = it->second;
    if (mp.visible_count >= 6 && mp.found_count * 4 < mp.visible_count &&
        mp.source_keyframe != last_keyframe_id_) {
      it = map_points_.erase(it);
    } else {
      ++it;
    }
  }
}

void Tracker::SetPose(int frame_id, const Pose& pose) {
  if (last_frame_id_ >= 0) {
    velocity_ = last_pose_.Inverse() * pose;
    has_velocity_ = true;
  }
  last_pose_ = pose;
  last_frame_id_ = frame_id;
}

bool Tracker::NeedsKeyframe(const TrackResult& result) const {
  if (!result.tracked) return false;
  if (last_keyframe_id_ < 0 || last_frame_id_ - last_keyframe_id_ >= params_.keyframe_interval) {
    return true;
  }
  return result.visible_map_points > 0 &&
         result.inliers < params_.keyframe_ratio * result.visible_map_points;
}

void Tracker::CreateMapPoints(Keyframe& kf, const std::vector<int>& matched) {
  kf.map_point_ids.assign(kf.keypoints.size(), -1);
  for (std::size_t i = 0; i < kf.keypoints.size(); ++i) {
    if (i < matched.size() && matched[i] >= 0) {
      kf.map_point_ids[i] = matched[i];
      continue;
    }
    const Keypoint& kp = kf.keypoints[i];
    const double z = DepthAt(kf.depth, kp);
    if (!(z > 0.0)) continue;
    MapPoint mp;
    mp.id = next_map_point_id_++;
    mp.position = kf.pose * Backproject(kp.u, kp.v, z, intrinsics_);
    mp.descriptor = kp.descriptor;
    mp.last_seen_frame = kf.frame_id;
    mp.source_keyframe = kf.frame_id;
    kf.map_point_ids[i] = mp.id;
    map_points_.emplace(mp.id, mp);
  }
}

void Tracker::AddKeyframe(Keyframe kf) {
  last_keyframe_id_ = kf.frame_id;
  keyframes_.push_back(std::move(kf));
  while (keyframes_.size() > params_.keyframe_capacity) {
    const int evicted = keyframes_.front().frame_id;
    keyframes_.pop_front();
    std::erase_if(map_points_, [evicted](const auto& entry) {
      return entry.second.source_keyframe == evicted;
    });
  }
}

TrackResult Tracker::Bootstrap(int frame_id, double timestamp, const Pose& pose,
                               const std::vector<Keypoint>& static_keypoints, const RgbImage& rgb,
                               const DepthMap& depth, const Mask& dynamic_mask) {
  map_points_.clear();
  initialized_ = true;
  needs_reinit_ = false;
  has_velocity_ = false;
  last_pose_ = pose;
  last_frame_id_ = frame_id;

  Keyframe kf;
  kf.frame_id = frame_id;
  kf.timestamp = timestamp;
  kf.pose = pose;
  kf.keypoints = static_keypoints;
  kf.rgb = rgb;
  kf.depth = depth;
  kf.dynamic_mask = dynamic_mask;
  CreateMapPoints(kf, {});

  TrackResult result;
  result.pose = pose;
  result.tracked = true;
  result.keypoint_map_points = kf.map_point_ids;
  result.inliers = static_cast<int>(map_points_.size());
  result.visible_map_points = result.inliers;
  AddKeyframe(std::move(kf));
  return result;
}

void Tracker::InsertKeyframe(int frame_id, double timestamp, const TrackResult& result,
                             const std::vector<Keypoint>& static_keypoints, const RgbImage& rgb,
                             const DepthMap& depth, const Mask& dynamic_mask) {
  Keyframe kf;
  kf.frame_id = frame_id;
  kf.timestamp = timestamp;
  kf.pose = result.pose;
  kf.keypoints = static_keypoints;
  kf.rgb = rgb;
  kf.depth = depth;
  kf.dynamic_mask = dynamic_mask;
  if (!initialized_) {
    initialized_ = true;
    last_pose_ = result.pose;
    last_frame_id_ = frame_id;
  }
  CreateMapPoints(kf, result.keypoint_map_points);
  AddKeyframe(std::move(kf));
}

}  // namespace mvdyn
