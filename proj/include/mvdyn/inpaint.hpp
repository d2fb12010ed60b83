#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvdyn/dynaseg.hpp"
#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"

namespace mvdyn {

struct InpaintParams {
  /// Number of most recent keyframes used as sources.
  int keyframes = 20;
  /// Depth band (m) within which two samples count as the same surface.
  double depth_tolerance = 0.05;
};

struct SourceRef {
  int keyframe_id = -1;
  int u = -1;
  int v = -1;
};

struct InpaintResult {
  RgbImage rgb;
  DepthMap depth;
  /// Mask pixels that received a reprojected sample.
  Mask coverage;
  /// Number of keyframes that produced a sample for each mask pixel.
  Image<std::uint8_t> source_count;
  /// Keyframe and pixel each covered pixel was copied from.
  Image<SourceRef> sources;
};

struct SplatSample {
  int u = 0;
  int v = 0;
  double depth = 0.0;
  /// Distance from the projected sub-pixel position to the target pixel centre.
  double offset = 0.0;
};

/// Forward-warps one pixel with depth from a source camera into a destination
/// camera (both camera-to-world) and rounds to the nearest pixel. nullopt when
/// the point lands behind the destination camera or outside its image.
std::optional<SplatSample> Splat(double u, double v, double depth, const Pose& pose_src,
                                 const Pose& pose_dst, const Intrinsics& k);

/// Paints the masked pixels of the frame with colour and depth forward-warped
/// from the given keyframes (most recent first). Pixels outside the mask are
/// copied unchanged; mask pixels nobody explains are left blank (black, depth 0).
InpaintResult InpaintFrame(const RgbImage& rgb, const DepthMap& depth, const Mask& mask,
                           const KeyframeRefs& keyframes, const Pose& current_pose,
                           const Intrinsics& k, const InpaintParams& params = {});

/// The `n` most recent keyframes of the buffer, most recent first.
KeyframeRefs MostRecentKeyframes(const KeyframeRefs& buffer, int n, int exclude_frame_id = -1);

}  // namespace mvdyn
