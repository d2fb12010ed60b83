#include "mvdyn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "mvdyn/errors.hpp"

namespace mvdyn {
namespace {

constexpr char kCommentChar = '#';

bool IsBlankOrComment(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == kCommentChar;
}

std::ifstream OpenOrThrow(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open file: " + file.string());
  return in;
}

}  // namespace

Association Associate(const std::vector<double>& times_a, const std::vector<double>& times_b,
                      double max_diff) {
  struct Candidate {
    double diff;
    double sum;
    std::size_t ia;
    std::size_t ib;
  };
  std::vector<Candidate> candidates;
  // Both lists are time-sorted, so the window of b-entries within max_diff of
  // a[i] only moves forward.
  std::size_t lo = 0;
  for (std::size_t ia = 0; ia < times_a.size(); ++ia) {
    const double ta = times_a[ia];
    while (lo < times_b.size() && times_b[lo] < ta - max_diff) ++lo;
    for (std::size_t ib = lo; ib < times_b.size() && times_b[ib] <= ta + max_diff; ++ib) {
      const double diff = std::abs(ta - times_b[ib]);
      if (diff <= max_diff) candidates.push_back({diff, ta + times_b[ib], ia, ib});
    }
  }
  // The (diff, sum) key does not depend on argument order, which keeps the
  // matching symmetric under swapping the two lists.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(x.diff, x.sum, x.ia, x.ib) < std::tie(y.diff, y.sum, y.ia, y.ib);
  });

  std::vector<char> used_a(times_a.size(), 0);
  std::vector<char> used_b(times_b.size(), 0);
  Association out;
  for (const Candidate& c : candidates) {
    if (used_a[c.ia] || used_b[c.ib]) continue;
    used_a[c.ia] = 1;
    used_b[c.ib] = 1;
    out.pairs.push_back({c.ia, c.ib, times_a[c.ia], times_b[c.ib]});
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const MatchedPair& x, const MatchedPair& y) { return x.index_a < y.index_a; });
  out.unmatched_a = times_a.size() - out.pairs.size();
  out.unmatched_b = times_b.size() - out.pairs.size();
  return out;
}

Association Associate(const std::vector<StampedPath>& a, const std::vector<StampedPath>& b,
                      double max_diff) {
  std::vector<double> ta;
  std::vector<double> tb;
  ta.reserve(a.size());
  tb.reserve(b.size());
  for (const auto& e : a) ta.push_back(e.timestamp);
  for (const auto& e : b) tb.push_back(e.timestamp);
  return Associate(ta, tb, max_diff);
}

std::vector<StampedPath> ReadStampedPaths(const std::filesystem::path& file) {
  std::ifstream in = OpenOrThrow(file);
  std::vector<StampedPath> out;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (IsBlankOrComment(line)) continue;
    std::istringstream iss(line);
    StampedPath e;
    if (!(iss >> e.timestamp >> e.path)) {
      throw FormatError(file.string() + ":" + std::to_string(line_no) +
                        ": expected 'timestamp filename'");
    }
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const StampedPath& x, const StampedPath& y) { return x.timestamp < y.timestamp; });
  return out;
}

Trajectory ParseTrajectory(std::istream& in, const std::string& source_name) {
  Trajectory out;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (IsBlankOrComment(line)) continue;
    std::istringstream iss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(iss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw FormatError(source_name + ":" + std::to_string(line_no) +
                        ": expected 'timestamp tx ty tz qx qy qz qw'");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-6) {
      throw FormatError(source_name + ":" + std::to_string(line_no) + ": zero quaternion");
    }
    if (!out.empty() && !(t > out.back().timestamp)) {
      throw FormatError(source_name + ":" + std::to_string(line_no) +
                        ": timestamps must be strictly increasing");
    }
    out.push_back({t, Pose(q, Eigen::Vector3d(tx, ty, tz))});
  }
  return out;
}

Trajectory ReadTrajectory(const std::filesystem::path& file) {
  std::ifstream in = OpenOrThrow(file);
  return ParseTrajectory(in, file.string());
}

void SerializeTrajectory(std::ostream& out, const Trajectory& traj) {
  char buf[256];
  for (const auto& sp : traj) {
    const auto& t = sp.pose.translation();
    const auto& q = sp.pose.rotation();
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", sp.timestamp,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

void WriteTrajectory(const std::filesystem::path& file, const Trajectory& traj) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw InputError("cannot write trajectory: " + file.string());
  out << "# timestamp tx ty tz qx qy qz qw\n";
  SerializeTrajectory(out, traj);
}

std::optional<Pose> GroundTruthPoseAt(const Trajectory& traj, double t, double max_gap) {
  if (traj.empty()) return std::nullopt;
  auto it = std::lower_bound(traj.begin(), traj.end(), t,
                             [](const StampedPose& sp, double value) { return sp.timestamp < value; });
  if (it != traj.end() && it->timestamp == t) return it->pose;
  if (it == traj.begin()) {
    if (it->timestamp - t <= max_gap) return it->pose;
    return std::nullopt;
  }
  if (it == traj.end()) {
    const auto& last = traj.back();
    if (t - last.timestamp <= max_gap) return last.pose;
    return std::nullopt;
  }
  const StampedPose& before = *(it - 1);
  const StampedPose& after = *it;
  const double gap = std::min(t - before.timestamp, after.timestamp - t);
  if (gap > max_gap) return std::nullopt;
  const double s = (t - before.timestamp) / (after.timestamp - before.timestamp);
  return Interpolate(before.pose, after.pose, s);
}

Sequence LoadSequence(const std::filesystem::path& dir, const SequenceConfig& config) {
  const auto rgb_list = dir / "rgb.txt";
  const auto depth_list = dir / "depth.txt";
  for (const auto& f : {rgb_list, depth_list}) {
    if (!std::filesystem::exists(f)) throw InputError("missing mandatory file: " + f.string());
  }
  Sequence seq;
  seq.root = dir;
  const auto rgb = ReadStampedPaths(rgb_list);
  const auto depth = ReadStampedPaths(depth_list);
  const Association assoc = Associate(rgb, depth, config.association_tolerance);
  seq.dropped_rgb = assoc.unmatched_a;
  seq.dropped_depth = assoc.unmatched_b;

  const auto gt_file = dir / "groundtruth.txt";
  if (std::filesystem::exists(gt_file)) seq.ground_truth = ReadTrajectory(gt_file);

  const std::filesystem::path mask_dir = config.mask_dir.value_or(dir / "masks");
  const bool mask_dir_exists = std::filesystem::is_directory(mask_dir);
  seq.has_masks = mask_dir_exists && !assoc.pairs.empty();

  for (const MatchedPair& p : assoc.pairs) {
    FrameRecord r;
    r.timestamp = rgb[p.index_a].timestamp;
    r.rgb_path = dir / rgb[p.index_a].path;
    r.depth_path = dir / depth[p.index_b].path;
    if (mask_dir_exists) {
      const auto candidate = mask_dir / (r.rgb_path.stem().string() + ".png");
      if (std::filesystem::exists(candidate)) {
        r.mask_path = candidate;
      } else {
        seq.has_masks = false;
      }
    }
    if (!seq.ground_truth.empty()) {
      r.gt_pose = GroundTruthPoseAt(seq.ground_truth, r.timestamp, config.association_tolerance);
    }
    if (!seq.records.empty() && !(r.timestamp > seq.records.back().timestamp)) continue;
    seq.records.push_back(std::move(r));
  }
  return seq;
}

Frame LoadFrame(const FrameRecord& record, const SequenceConfig& config) {
  Frame f;
  f.record = record;
  f.intrinsics = config.intrinsics;
  f.rgb = ReadRgb(record.rgb_path);
  f.depth = ReadDepth(record.depth_path, config.depth_scale);
  RequireSameSize(f.rgb, f.depth, record.depth_path.string().c_str());
  for (float& d : f.depth.pixels()) {
    if (!(d > 0.01f && d < 100.0f)) d = 0.0f;
  }
  if (record.mask_path) {
    f.semantic_mask = ReadMask(*record.mask_path);
    RequireSameSize(f.rgb, *f.semantic_mask, record.mask_path->string().c_str());
  }
  return f;
}

std::string TimestampStem(double timestamp) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", timestamp);
  return buf;
}

}  // namespace mvdyn
