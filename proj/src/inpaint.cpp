#include "mvdyn/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvdyn {
namespace {

struct Candidate {
  double depth = std::numeric_limits<double>::infinity();
  double offset = 0.0;
  Rgb color;
  int src_u = -1;
  int src_v = -1;
  bool set = false;
};

// Nearer surface wins; on the same surface the sample projecting closest to
// the pixel centre wins.
bool Better(const Candidate& c, const Candidate& current, double tol) {
  if (!current.set) return true;
  if (c.depth < current.depth - tol) return true;
  if (c.depth > current.depth + tol) return false;
  return c.offset < current.offset;
}

}  // namespace

std::optional<SplatSample> Splat(double u, double v, double depth, const Pose& pose_src,
                                 const Pose& pose_dst, const Intrinsics& k) {
  if (!(depth > 0.0)) return std::nullopt;
  const Point3 p = pose_dst.Inverse() * (pose_src * Backproject(u, v, depth, k));
  if (!(p.z() > 1e-6)) return std::nullopt;
  const Eigen::Vector2d px = ProjectUnbounded(p, k);
  const double ru = std::round(px.x());
  const double rv = std::round(px.y());
  if (ru < 0 || rv < 0 || ru >= k.width || rv >= k.height) return std::nullopt;
  SplatSample s;
  s.u = static_cast<int>(ru);
  s.v = static_cast<int>(rv);
  s.depth = p.z();
  s.offset = std::hypot(px.x() - ru, px.y() - rv);
  return s;
}

KeyframeRefs MostRecentKeyframes(const KeyframeRefs& buffer, int n, int exclude_frame_id) {
  KeyframeRefs sorted;
  for (const Keyframe* kf : buffer) {
    if (kf->frame_id != exclude_frame_id) sorted.push_back(kf);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const Keyframe* a, const Keyframe* b) { return a->frame_id > b->frame_id; });
  if (static_cast<int>(sorted.size()) > n) sorted.resize(static_cast<std::size_t>(std::max(n, 0)));
  return sorted;
}

InpaintResult InpaintFrame(const RgbImage& rgb, const DepthMap& depth, const Mask& mask,
                           const KeyframeRefs& keyframes, const Pose& current_pose,
                           const Intrinsics& k, const InpaintParams& params) {
  RequireSameSize(rgb, depth, "inpaint_frame");
  RequireSameSize(rgb, mask, "inpaint_frame");
  const int w = rgb.width();
  const int h = rgb.height();

  InpaintResult out;
  out.rgb = rgb;
  out.depth = depth;
  out.coverage = Mask(w, h, 0);
  out.source_count = Image<std::uint8_t>(w, h, 0);
  out.sources = Image<SourceRef>(w, h);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    out.rgb[i] = Rgb{};
    out.depth[i] = 0.0f;
  }
  if (CountSet(mask) == 0) return out;

  Image<double> written_depth(w, h, 0.0);
  const double tol = params.depth_tolerance;
  const Pose world_to_current = current_pose.Inverse();
  const Eigen::Matrix3d k_inv_scale = Eigen::Vector3d(1.0 / k.fx, 1.0 / k.fy, 1.0).asDiagonal();
  Image<Candidate> buffer(w, h);

  for (const Keyframe* kf : keyframes) {
    if (kf->depth.empty() || kf->rgb.empty()) continue;
    const bool has_mask = !kf->dynamic_mask.empty();
    const Pose rel = world_to_current * kf->pose;  // keyframe camera -> current camera
    const Eigen::Matrix3d r = rel.RotationMatrix();
    const Eigen::Vector3d t = rel.translation();
    std::fill(buffer.pixels().begin(), buffer.pixels().end(), Candidate{});

    for (int v = 0; v < kf->depth.height(); ++v) {
      for (int u = 0; u < kf->depth.width(); ++u) {
        const double z = kf->depth(u, v);
        if (!(z > 0.0)) continue;
        if (has_mask && kf->dynamic_mask(u, v)) continue;
        const Eigen::Vector3d ray = k_inv_scale * Eigen::Vector3d(u - k.cx, v - k.cy, 1.0);
        const Eigen::Vector3d p = r * (ray * z) + t;
        if (!(p.z() > 1e-6)) continue;
        const double pu = k.fx * p.x() / p.z() + k.cx;
        const double pv = k.fy * p.y() / p.z() + k.cy;
        const double ru = std::round(pu);
        const double rv = std::round(pv);
        if (ru < 0 || rv < 0 || ru >= w || rv >= h) continue;
        const int tu = static_cast<int>(ru);
        const int tv = static_cast<int>(rv);
        if (!mask(tu, tv)) continue;
        Candidate c;
        c.depth = p.z();
        c.offset = std::hypot(pu - ru, pv - rv);
        c.color = kf->rgb(u, v);
        c.src_u = u;
        c.src_v = v;
        c.set = true;
        Candidate& slot = buffer(tu, tv);
        if (Better(c, slot, tol)) slot = c;
      }
    }

    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const Candidate& c = buffer(u, v);
        if (!c.set) continue;
        if (out.source_count(u, v) < 255) ++out.source_count(u, v);
        // Most recent keyframe keeps the pixel unless a later source sees a
        // clearly nearer surface.
        if (out.coverage(u, v) && !(c.depth < written_depth(u, v) - tol)) continue;
        out.coverage(u, v) = 1;
        written_depth(u, v) = c.depth;
        out.rgb(u, v) = c.color;
        out.depth(u, v) = static_cast<float>(c.depth);
        out.sources(u, v) = SourceRef{kf->frame_id, c.src_u, c.src_v};
      }
    }
  }
  return out;
}

}  // namespace mvdyn
