#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"

namespace mvdyn::synth {

/// Procedural value-noise texture: square cells of `cell` meters with a
/// pseudo-random intensity in [low, high], scaled per channel by `tint`.
struct Texture {
  std::uint64_t seed = 1;
  double cell = 0.1;
  int low = 40;
  int high = 215;
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();
};

/// Box in its own frame spanning [-size/2, size/2]; a zero extent along one
/// axis makes it a rectangular plane.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Texture texture;
};

/// Pose keyed by (fractional) frame index; motion between keys is linear in
/// translation and spherical in rotation.
struct Waypoint {
  double frame = 0.0;
  Pose pose;
};

struct DynamicObject {
  Box box;
  /// Object-to-world motion applied to the box (box center relative).
  std::vector<Waypoint> path;
};

struct SceneSpec {
  std::vector<Box> static_boxes;
  std::vector<DynamicObject> dynamic_objects;
  std::vector<Waypoint> camera_path;
  Intrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
  int frame_count = 60;
  double frame_rate = 30.0;
  double start_time = 1000.0;
  double depth_noise = 0.0;
  double pixel_noise = 0.0;
  std::uint64_t seed = 7;
  /// When > 0, the dataset writer also emits `semantic/` masks: ground-truth
  /// dynamic masks dilated by this many pixels (a coarse detector stand-in).
  int semantic_dilation = 0;

  /// Throws std::invalid_argument naming the first invalid field.
  void Validate() const;
};

struct SynthFrame {
  int index = 0;
  double timestamp = 0.0;
  RgbImage rgb;
  /// Exact depth along the optical axis, 0 where no geometry is hit.
  DepthMap depth;
  Pose gt_pose;
  Mask gt_dynamic_mask;
  /// Same render with every dynamic object removed.
  RgbImage gt_background_rgb;
  DepthMap gt_background_depth;
};

struct RayHit {
  double depth = 0.0;
  bool dynamic = false;
  Rgb color;
};

Pose SamplePath(const std::vector<Waypoint>& path, double frame);

/// Nearest intersection of the camera ray through pixel (u, v) with the scene
/// at frame `frame`. `include_dynamic` = false renders the background only.
std::optional<RayHit> CastRay(const SceneSpec& spec, double frame, const Pose& camera, double u,
                              double v, bool include_dynamic);

SynthFrame RenderFrame(const SceneSpec& spec, int index);
std::vector<SynthFrame> Render(const SceneSpec& spec);

/// Writes a TUM-layout directory: rgb/, depth/, masks/, background/,
/// rgb.txt, depth.txt, groundtruth.txt, scene.json and config.json.
void WriteDataset(const SceneSpec& spec, const std::filesystem::path& dir);

SceneSpec LoadSceneSpec(const std::filesystem::path& file);
void SaveSceneSpec(const SceneSpec& spec, const std::filesystem::path& file);

/// Default scene: textured back wall and two static boxes, a 0.8 x 0.7 x 0.3 m
/// cuboid crossing the view at 0.02 m/frame about 1.4 m from the camera,
/// camera translating 0.5 m with a few degrees of rotation.
SceneSpec CuboidWalkScene();

/// The same scene without the moving cuboid.
SceneSpec StaticScene();

}  // namespace mvdyn::synth
