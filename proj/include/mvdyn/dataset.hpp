#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvdyn/geometry.hpp"
#include "mvdyn/image.hpp"
#include "mvdyn/image_io.hpp"

namespace mvdyn {

constexpr double kDefaultAssociationTolerance = 0.02;

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

/// Timestamped camera-to-world poses, strictly increasing in time.
using Trajectory = std::vector<StampedPose>;

struct StampedPath {
  double timestamp = 0.0;
  std::string path;
};

struct MatchedPair {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double time_a = 0.0;
  double time_b = 0.0;
};

struct Association {
  std::vector<MatchedPair> pairs;
  std::size_t unmatched_a = 0;
  std::size_t unmatched_b = 0;
};

/// Greedy one-to-one matching by increasing |dt| (TUM associate convention).
/// Only pairs with |dt| <= max_diff are considered; result sorted by time_a.
Association Associate(const std::vector<double>& times_a, const std::vector<double>& times_b,
                      double max_diff = kDefaultAssociationTolerance);
Association Associate(const std::vector<StampedPath>& a, const std::vector<StampedPath>& b,
                      double max_diff = kDefaultAssociationTolerance);

/// Parses "timestamp filename" lists; '#' lines and blank lines are skipped.
std::vector<StampedPath> ReadStampedPaths(const std::filesystem::path& file);

/// TUM trajectory format: "timestamp tx ty tz qx qy qz qw".
Trajectory ReadTrajectory(const std::filesystem::path& file);
void WriteTrajectory(const std::filesystem::path& file, const Trajectory& traj);
Trajectory ParseTrajectory(std::istream& in, const std::string& source_name);
void SerializeTrajectory(std::ostream& out, const Trajectory& traj);

/// Pose at time t, interpolated between the bracketing samples. Returns
/// nullopt when t lies further than max_gap from the nearest sample of its
/// bracket (or outside the trajectory by more than max_gap).
std::optional<Pose> GroundTruthPoseAt(const Trajectory& traj, double t,
                                      double max_gap = kDefaultAssociationTolerance);

struct FrameRecord {
  double timestamp = 0.0;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::optional<std::filesystem::path> mask_path;
  std::optional<Pose> gt_pose;

  std::string Stem() const { return rgb_path.stem().string(); }
};

struct Frame {
  FrameRecord record;
  RgbImage rgb;
  DepthMap depth;
  std::optional<Mask> semantic_mask;
  Intrinsics intrinsics;
};

struct SequenceConfig {
  Intrinsics intrinsics;
  double depth_scale = kTumDepthScale;
  double association_tolerance = kDefaultAssociationTolerance;
  /// Directory holding semantic masks named after the RGB stems. Defaults to
  /// `<dataset>/masks` when unset.
  std::optional<std::filesystem::path> mask_dir;
};

struct Sequence {
  std::filesystem::path root;
  std::vector<FrameRecord> records;
  Trajectory ground_truth;
  std::size_t dropped_rgb = 0;
  std::size_t dropped_depth = 0;
  bool has_masks = false;
};

/// Reads rgb.txt / depth.txt (mandatory), groundtruth.txt and the mask
/// directory (optional). Images are not decoded here; see LoadFrame.
Sequence LoadSequence(const std::filesystem::path& dir, const SequenceConfig& config);

/// Decodes the images of one record. Deterministic and thread-safe.
Frame LoadFrame(const FrameRecord& record, const SequenceConfig& config);

/// Image stem convention used for synthetic and pipeline outputs.
std::string TimestampStem(double timestamp);

}  // namespace mvdyn
