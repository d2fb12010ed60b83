#include "mvdyn/dynaseg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvdyn {

void SegParams::Validate() const {
  auto fail = [](const std::string& field) {
    throw std::invalid_argument("seg params: invalid " + field);
  };
  if (!(tau_z > 0.0)) fail("tau_z (must be > 0)");
  if (!(parallax_max_deg > 0.0 && parallax_max_deg < 90.0)) fail("parallax_max (must be in (0, 90))");
  if (overlap_keyframes < 1) fail("overlap_keyframes (must be >= 1)");
  if (border_patch < 1) fail("border_patch (must be >= 1)");
  if (!(border_var_max >= 0.0)) fail("border_var_max");
  if (!(grow_depth_tol >= 0.0)) fail("grow_depth_tol");
  if (grow_connectivity != 4 && grow_connectivity != 8) fail("grow_connectivity (must be 4 or 8)");
  if (!(overlap_dist_norm > 0.0) || !(overlap_angle_norm_deg > 0.0)) fail("overlap normalizers");
}

std::string_view ToString(KeypointLabel label) {
  switch (label) {
    case KeypointLabel::kStatic: return "static";
    case KeypointLabel::kDynamic: return "dynamic";
    case KeypointLabel::kHighParallax: return "high_parallax";
    case KeypointLabel::kNoDepth: return "no_depth";
    case KeypointLabel::kOutOfView: return "out_of_view";
  }
  return "unknown";
}

KeyframeRefs AllKeyframes(const std::deque<Keyframe>& buffer) {
  KeyframeRefs out;
  out.reserve(buffer.size());
  for (const Keyframe& kf : buffer) out.push_back(&kf);
  return out;
}

double OverlapScore(const Pose& keyframe_pose, const Pose& current_pose, const SegParams& p) {
  const double dist = (keyframe_pose.translation() - current_pose.translation()).norm();
  const double angle = Rad2Deg(RelativeRotationAngle(keyframe_pose, current_pose));
  return dist / p.overlap_dist_norm + angle / p.overlap_angle_norm_deg;
}

KeyframeRefs SelectOverlapKeyframes(const KeyframeRefs& buffer, const Pose& current_pose, int n,
                                    const SegParams& p, int exclude_frame_id) {
  struct Scored {
    double score;
    const Keyframe* kf;
  };
  std::vector<Scored> scored;
  for (const Keyframe* kf : buffer) {
    if (kf->frame_id == exclude_frame_id) continue;
    scored.push_back({OverlapScore(kf->pose, current_pose, p), kf});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.kf->frame_id > b.kf->frame_id;
  });
  KeyframeRefs out;
  for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < n; ++i) out.push_back(scored[i].kf);
  return out;
}

std::optional<double> SampleDepthBilinear(const DepthMap& depth, double u, double v) {
  const int u0 = static_cast<int>(std::floor(u));
  const int v0 = static_cast<int>(std::floor(v));
  const double fu = u - u0;
  const double fv = v - v0;
  double sum = 0.0;
  double wsum = 0.0;
  for (int dv = 0; dv <= 1; ++dv) {
    for (int du = 0; du <= 1; ++du) {
      const int x = u0 + du;
      const int y = v0 + dv;
      if (!depth.Contains(x, y)) continue;
      const double d = depth(x, y);
      if (!(d > 0.0)) continue;
      const double w = (du ? fu : 1.0 - fu) * (dv ? fv : 1.0 - fv);
      sum += w * d;
      wsum += w;
    }
  }
  if (wsum <= 0.0) {
    // Valid neighbours with zero bilinear weight (x' exactly on a pixel
    // whose own depth is invalid) still carry evidence; use their mean.
    int count = 0;
    for (int dv = 0; dv <= 1; ++dv) {
      for (int du = 0; du <= 1; ++du) {
        const int x = u0 + du;
        const int y = v0 + dv;
        if (depth.Contains(x, y) && depth(x, y) > 0.0f) {
          sum += depth(x, y);
          ++count;
        }
      }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
  }
  return sum / wsum;
}

KeypointTest ClassifyKeypoint(double u, double v, double z_kf, const Pose& pose_kf,
                              const Pose& pose_cf, const DepthMap& cf_depth, const Intrinsics& k,
                              const SegParams& p) {
  if (!(z_kf > 0.0)) throw std::invalid_argument("classify_keypoint: keyframe depth must be positive");
  KeypointTest t;
  const Point3 world = pose_kf * Backproject(u, v, z_kf, k);
  const Point3 in_cf = pose_cf.Inverse() * world;
  const auto px = Project(in_cf, k);
  if (!px) {
    t.label = KeypointLabel::kOutOfView;
    return t;
  }
  t.u = px->u;
  t.v = px->v;
  t.z_proj = in_cf.z();
  t.parallax_deg = ParallaxAngleDeg(world, pose_kf.translation(), pose_cf.translation());
  if (t.parallax_deg > p.parallax_max_deg) {
    t.label = KeypointLabel::kHighParallax;
    return t;
  }
  const auto measured = SampleDepthBilinear(cf_depth, t.u, t.v);
  if (!measured) {
    t.label = KeypointLabel::kNoDepth;
    return t;
  }
  t.z_measured = *measured;
  t.delta_z = t.z_proj - t.z_measured;
  t.label = t.delta_z > p.tau_z ? KeypointLabel::kDynamic : KeypointLabel::kStatic;
  return t;
}

std::optional<double> PatchDepthVariance(const DepthMap& depth, double u, double v, int patch) {
  const int cu = static_cast<int>(std::lround(u));
  const int cv = static_cast<int>(std::lround(v));
  const int r = patch / 2;
  double sum = 0.0;
  double sum_sq = 0.0;
  int n = 0;
  for (int y = cv - r; y <= cv + r; ++y) {
    for (int x = cu - r; x <= cu + r; ++x) {
      if (!depth.Contains(x, y)) continue;
      const double d = depth(x, y);
      if (!(d > 0.0)) continue;
      sum += d;
      sum_sq += d * d;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  const double mean = sum / n;
  return std::max(sum_sq / n - mean * mean, 0.0);
}

KeypointLabel BorderCorrection(KeypointLabel label, const DepthMap& cf_depth, double u, double v,
                               const SegParams& p) {
  if (label != KeypointLabel::kDynamic) return label;
  const auto var = PatchDepthVariance(cf_depth, u, v, p.border_patch);
  if (var && *var > p.border_var_max) return KeypointLabel::kStatic;
  return label;
}

Mask GrowMask(const std::vector<PixelCoord>& seeds, const DepthMap& depth, const SegParams& p) {
  Mask mask(depth.width(), depth.height(), 0);
  std::vector<PixelCoord> stack;
  for (const PixelCoord& s : seeds) {
    if (!depth.Contains(s.u, s.v)) throw std::invalid_argument("grow_mask: seed out of bounds");
    if (mask(s.u, s.v)) continue;
    mask(s.u, s.v) = 1;
    stack.push_back(s);
  }
  static constexpr int kN8[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  const int neighbours = p.grow_connectivity == 4 ? 4 : 8;
  while (!stack.empty()) {
    const PixelCoord c = stack.back();
    stack.pop_back();
    const double dc = depth(c.u, c.v);
    if (!(dc > 0.0)) continue;
    for (int i = 0; i < neighbours; ++i) {
      const int x = c.u + kN8[i][0];
      const int y = c.v + kN8[i][1];
      if (!depth.Contains(x, y) || mask(x, y)) continue;
      const double dn = depth(x, y);
      if (!(dn > 0.0) || std::abs(dn - dc) > p.grow_depth_tol) continue;
      mask(x, y) = 1;
      stack.push_back({x, y});
    }
  }
  return mask;
}

Mask FuseMasks(const Mask& geometric, const Mask& semantic, double overlap_drop) {
  RequireSameSize(geometric, semantic, "fuse_masks");
  const int w = semantic.width();
  const int h = semantic.height();
  Mask fused = geometric;
  Image<int> label(w, h, -1);
  std::vector<PixelCoord> stack;
  std::vector<PixelCoord> component;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!semantic(u, v) || label(u, v) >= 0) continue;
      component.clear();
      stack.assign(1, {u, v});
      label(u, v) = 1;
      while (!stack.empty()) {
        const PixelCoord c = stack.back();
        stack.pop_back();
        component.push_back(c);
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            const int x = c.u + du;
            const int y = c.v + dv;
            if (!semantic.Contains(x, y) || !semantic(x, y) || label(x, y) >= 0) continue;
            label(x, y) = 1;
            stack.push_back({x, y});
          }
        }
      }
      std::size_t overlap = 0;
      for (const PixelCoord& c : component) overlap += geometric(c.u, c.v) ? 1 : 0;
      if (static_cast<double>(overlap) > overlap_drop * static_cast<double>(component.size())) continue;
      for (const PixelCoord& c : component) fused(c.u, c.v) = 1;
    }
  }
  return fused;
}

std::vector<ProjectedKeypoint> ProjectKeyframeKeypoints(const DepthMap& depth,
                                                        const KeyframeRefs& selected,
                                                        const Pose& current_pose,
                                                        const Intrinsics& k, const SegParams& p) {
  std::vector<ProjectedKeypoint> out;
  for (const Keyframe* kf : selected) {
    const bool has_mask = !kf->dynamic_mask.empty();
    for (std::size_t i = 0; i < kf->keypoints.size(); ++i) {
      const Keypoint& kp = kf->keypoints[i];
      const double z_kf = DepthAt(kf->depth, kp);
      if (!(z_kf > 0.0)) continue;
      if (has_mask) {
        const int u = static_cast<int>(std::lround(kp.u));
        const int v = static_cast<int>(std::lround(kp.v));
        if (kf->dynamic_mask.Contains(u, v) && kf->dynamic_mask(u, v)) continue;
      }
      ProjectedKeypoint pk;
      pk.keyframe_id = kf->frame_id;
      pk.keypoint_index = static_cast<int>(i);
      pk.kf_u = kp.u;
      pk.kf_v = kp.v;
      pk.test = ClassifyKeypoint(kp.u, kp.v, z_kf, kf->pose, current_pose, depth, k, p);
      pk.label = BorderCorrection(pk.test.label, depth, pk.test.u, pk.test.v, p);
      out.push_back(pk);
    }
  }
  return out;
}

namespace {

// A dynamic projection seeds the mask when a strict majority of the
// keyframes that observe its location (a projection of theirs within
// vote_radius) label it dynamic.
std::vector<PixelCoord> VoteSeeds(const std::vector<ProjectedKeypoint>& projections, int width,
                                  int height, const SegParams& p) {
  std::vector<const ProjectedKeypoint*> labeled;
  for (const auto& pk : projections) {
    if (pk.label == KeypointLabel::kStatic || pk.label == KeypointLabel::kDynamic) labeled.push_back(&pk);
  }
  const int cell = std::max(4, static_cast<int>(std::ceil(p.vote_radius)) * 2);
  const int cols = (width + cell - 1) / cell;
  const int rows = (height + cell - 1) / cell;
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(cols * rows));
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(labeled[i]->test.u) / cell, 0, cols - 1);
    const int cy = std::clamp(static_cast<int>(labeled[i]->test.v) / cell, 0, rows - 1);
    grid[static_cast<std::size_t>(cy * cols + cx)].push_back(static_cast<int>(i));
  }

  std::vector<PixelCoord> seeds;
  const double r2 = p.vote_radius * p.vote_radius;
  for (const ProjectedKeypoint* pk : labeled) {
    if (pk->label != KeypointLabel::kDynamic) continue;
    // Nearest projection per keyframe around this location.
    std::vector<std::pair<int, std::pair<double, KeypointLabel>>> nearest;
    const int cx = static_cast<int>(pk->test.u) / cell;
    const int cy = static_cast<int>(pk->test.v) / cell;
    for (int gy = std::max(cy - 1, 0); gy <= std::min(cy + 1, rows - 1); ++gy) {
      for (int gx = std::max(cx - 1, 0); gx <= std::min(cx + 1, cols - 1); ++gx) {
        for (int idx : grid[static_cast<std::size_t>(gy * cols + gx)]) {
          const ProjectedKeypoint* other = labeled[static_cast<std::size_t>(idx)];
          const double du = other->test.u - pk->test.u;
          const double dv = other->test.v - pk->test.v;
          const double d2 = du * du + dv * dv;
          if (d2 > r2) continue;
          if (other->keyframe_id == pk->keyframe_id && other != pk) continue;
          auto it = std::find_if(nearest.begin(), nearest.end(),
                                 [&](const auto& e) { return e.first == other->keyframe_id; });
          if (it == nearest.end()) {
            nearest.push_back({other->keyframe_id, {d2, other->label}});
          } else if (d2 < it->second.first) {
            it->second = {d2, other->label};
          }
        }
      }
    }
    int dynamic_votes = 0;
    for (const auto& e : nearest) dynamic_votes += e.second.second == KeypointLabel::kDynamic;
    if (2 * dynamic_votes > static_cast<int>(nearest.size())) {
      const int u = std::clamp(static_cast<int>(std::lround(pk->test.u)), 0, width - 1);
      const int v = std::clamp(static_cast<int>(std::lround(pk->test.v)), 0, height - 1);
      seeds.push_back({u, v});
    }
  }
  return seeds;
}

}  // namespace

DynMask SegmentFrame(const DepthMap& depth, const std::optional<Mask>& semantic,
                     const KeyframeRefs& keyframes, const Pose& current_pose, int frame_id,
                     const Intrinsics& k, const SegParams& p) {
  DynMask out;
  out.geometric = Mask(depth.width(), depth.height(), 0);
  out.semantic = semantic ? *semantic : Mask(depth.width(), depth.height(), 0);
  RequireSameSize(depth, out.semantic, "segment_frame");

  const KeyframeRefs selected =
      keyframes.empty() ? KeyframeRefs{}
                        : SelectOverlapKeyframes(keyframes, current_pose, p.overlap_keyframes, p, frame_id);
  for (const Keyframe* kf : selected) out.keyframe_ids.push_back(kf->frame_id);
  if (!selected.empty()) {
    out.projections = ProjectKeyframeKeypoints(depth, selected, current_pose, k, p);
    out.dynamic_keypoints = VoteSeeds(out.projections, depth.width(), depth.height(), p);
    out.geometric = GrowMask(out.dynamic_keypoints, depth, p);
  }
  out.fused = FuseMasks(out.geometric, out.semantic, p.semantic_overlap_drop);
  return out;
}

SweepResult SweepTauZ(const std::vector<SweepSample>& samples, const std::vector<double>& candidates,
                      const Intrinsics& k, const SegParams& base, double w_precision,
                      double w_recall) {
  if (candidates.empty()) throw std::invalid_argument("sweep_tau_z: no candidates");

  // Projection, parallax and border tests do not depend on tau_z; classify
  // once and threshold delta_z per candidate.
  struct Evidence {
    double delta_z;
    bool border;
    bool truth;
  };
  std::vector<Evidence> evidence;
  for (const SweepSample& s : samples) {
    KeyframeRefs refs;
    for (const Keyframe& kf : s.keyframes) refs.push_back(&kf);
    const KeyframeRefs selected =
        SelectOverlapKeyframes(refs, s.pose, base.overlap_keyframes, base, s.frame_id);
    SegParams always_dynamic = base;
    always_dynamic.tau_z = -1e9;  // every measured keypoint reaches the border test
    for (const ProjectedKeypoint& pk : ProjectKeyframeKeypoints(s.depth, selected, s.pose, k, always_dynamic)) {
      if (pk.test.label != KeypointLabel::kDynamic) continue;
      const int u = static_cast<int>(std::lround(pk.test.u));
      const int v = static_cast<int>(std::lround(pk.test.v));
      const bool truth = s.ground_truth.Contains(u, v) && s.ground_truth(u, v);
      evidence.push_back({pk.test.delta_z, pk.label == KeypointLabel::kStatic, truth});
    }
  }

  SweepResult result;
  double best_score = -1.0;
  for (double tau : candidates) {
    SweepRow row;
    row.tau_z = tau;
    for (const Evidence& e : evidence) {
      const bool predicted = e.delta_z > tau && !e.border;
      if (predicted && e.truth) ++row.true_positives;
      if (predicted && !e.truth) ++row.false_positives;
      if (!predicted && e.truth) ++row.false_negatives;
    }
    const long predicted = row.true_positives + row.false_positives;
    const long positives = row.true_positives + row.false_negatives;
    row.precision = predicted == 0 ? 1.0 : static_cast<double>(row.true_positives) / predicted;
    row.recall = positives == 0 ? 1.0 : static_cast<double>(row.true_positives) / positives;
    row.score = w_precision * row.precision + w_recall * row.recall;
    if (row.score > best_score || (row.score == best_score && tau < result.best_tau_z)) {
      best_score = row.score;
      result.best_tau_z = tau;
    }
    result.table.push_back(row);
  }
  return result;
}

}  // namespace mvdyn
