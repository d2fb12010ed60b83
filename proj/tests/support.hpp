#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvdyn/dataset.hpp"
#include "mvdyn/geometry.hpp"
#include "mvdyn/tracking.hpp"

namespace mvdyn::testing {

/// splitmix64 stream; the Python oracles replicate it bit for bit.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t Next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Box-Muller, cosine branch only: two uniforms per normal.
  double Normal() {
    const double u1 = 1.0 - Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::uint64_t state_;
};

/// 1000-pose ground truth on a smooth 3D curve and a copy with isotropic
/// N(0, 0.01^2) noise on every coordinate (seed 42). Mirrored by
/// tests/oracles/ate_monte_carlo.py.
inline void MonteCarloAteCase(Trajectory* gt, Trajectory* est) {
  SplitMix64 rng(42);
  gt->clear();
  est->clear();
  for (int i = 0; i < 1000; ++i) {
    const double s = 0.01 * i;
    const Eigen::Vector3d p(2.0 * std::cos(s), std::sin(1.3 * s), 0.1 * s);
    const Eigen::Quaterniond q(Eigen::AngleAxisd(0.5 * s, Eigen::Vector3d::UnitY()));
    const double t = 100.0 + 0.05 * i;
    gt->push_back({t, Pose(q, p)});
    Eigen::Vector3d n;
    n.x() = 0.01 * rng.Normal();
    n.y() = 0.01 * rng.Normal();
    n.z() = 0.01 * rng.Normal();
    est->push_back({t, Pose(q, p + n)});
  }
}

inline Vector6d RandomTwist(SplitMix64& rng, double trans, double rot) {
  Vector6d x;
  for (int i = 0; i < 3; ++i) x[i] = rng.Uniform(-trans, trans);
  for (int i = 3; i < 6; ++i) x[i] = rng.Uniform(-rot, rot);
  return x;
}

inline Intrinsics TestIntrinsics() { return {525.0, 525.0, 319.5, 239.5, 640, 480}; }

/// Points in front of `camera` (camera-to-world) projected exactly into it.
inline std::vector<Correspondence> SyntheticCorrespondences(const Pose& camera, const Intrinsics& k, int n,
                                                            SplitMix64& rng) {
  std::vector<Correspondence> out;
  while (static_cast<int>(out.size()) < n) {
    const double u = rng.Uniform(20.0, k.width - 20.0);
    const double v = rng.Uniform(20.0, k.height - 20.0);
    const double z = rng.Uniform(1.0, 5.0);
    const Point3 pw = camera * Backproject(u, v, z, k);
    out.push_back({pw, Eigen::Vector2d(u, v)});
  }
  return out;
}

/// Translation distance and rotation angle between two poses.
inline std::pair<double, double> PoseError(const Pose& a, const Pose& b) {
  return {(a.translation() - b.translation()).norm(), RelativeRotationAngle(a, b)};
}

}  // namespace mvdyn::testing
