#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "mvdyn/image.hpp"

namespace mvdyn {

/// 256-bit binary descriptor.
using Descriptor = std::array<std::uint64_t, 4>;

inline int Hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

/// Keypoints never come closer than this to the image border, so the rotated
/// descriptor pattern and the orientation patch stay inside the image.
constexpr int kPatchMargin = 16;

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double response = 0.0;
  double angle_deg = 0.0;
  Descriptor descriptor{};

  bool operator==(const Keypoint&) const = default;
};

struct DetectorParams {
  int target_count = 1000;
  int grid_cols = 8;
  int grid_rows = 6;
  /// Intensity difference for the 9-of-16 segment test.
  int fast_threshold = 20;
  int harris_block = 7;
  double harris_k = 0.04;
};

/// Single-scale oriented corner detection with binary descriptors.
///
/// Segment-test corners are scored by the Harris response, thinned by 3x3
/// non-maximum suppression and bucketed over a grid_cols x grid_rows grid
/// (each cell keeps at most ceil(target_count / cells)). Output is sorted by
/// (response desc, v, u) and truncated to target_count.
std::vector<Keypoint> DetectKeypoints(const GrayImage& gray, const DetectorParams& params = {});

struct Match {
  int index_a = 0;
  int index_b = 0;
  int hamming = 0;

  bool operator==(const Match&) const = default;
};

/// Mutual nearest neighbours under Hamming distance. A pair survives only if
/// best < ratio * second-best in both directions and hamming <= max_hamming.
/// Sorted by index_a.
std::vector<Match> MatchKeypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                  int max_hamming = 64, double ratio = 0.8);

/// Drops keypoints inside the mask or within `contour_margin` pixels
/// (Euclidean) of a mask pixel. Throws std::invalid_argument if a keypoint
/// lies outside the mask, i.e. the mask does not match the detection image.
std::vector<Keypoint> FilterKeypointsByMask(const std::vector<Keypoint>& keypoints,
                                            const Mask& mask, int contour_margin = 3);

/// Uniform bucket grid over keypoint positions for radius queries.
class KeypointIndex {
 public:
  KeypointIndex(const std::vector<Keypoint>& keypoints, int width, int height, int cell = 16);

  /// Indices of keypoints within `radius` pixels of (u, v), ascending.
  std::vector<int> Query(double u, double v, double radius) const;

 private:
  const std::vector<Keypoint>* keypoints_;
  int cell_;
  int cols_;
  int rows_;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace mvdyn
