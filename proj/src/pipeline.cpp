#include "mvdyn/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mvdyn/errors.hpp"
#include "mvdyn/features.hpp"
#include "mvdyn/image_io.hpp"

namespace mvdyn {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double Ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Pixels of `mask` not restored by the inpainting.
Mask Unrestored(const Mask& mask, const Mask& coverage) {
  Mask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (coverage[i]) out[i] = 0;
  }
  return out;
}

json IntrinsicsJson(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

void WriteText(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw InputError("cannot write " + file.string());
  out << text;
}

}  // namespace

std::string ToString(Variant v) {
  switch (v) {
    case Variant::kNone: return "none";
    case Variant::kN: return "N";
    case Variant::kG: return "G";
    case Variant::kNG: return "N+G";
    case Variant::kNGBI: return "N+G+BI";
  }
  return "?";
}

std::string ToString(PoseSource s) { return s == PoseSource::kTracked ? "tracked" : "ground-truth"; }

Variant ParseVariant(const std::string& s) {
  for (Variant v : {Variant::kNone, Variant::kN, Variant::kG, Variant::kNG, Variant::kNGBI}) {
    if (s == ToString(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "' (expected none, N, G, N+G or N+G+BI)");
}

PoseSource ParsePoseSource(const std::string& s) {
  if (s == "tracked") return PoseSource::kTracked;
  if (s == "ground-truth" || s == "gt") return PoseSource::kGroundTruth;
  throw std::invalid_argument("unknown pose source '" + s + "' (expected tracked or ground-truth)");
}

bool UsesSemantic(Variant v) { return v == Variant::kN || v == Variant::kNG || v == Variant::kNGBI; }
bool UsesGeometry(Variant v) { return v == Variant::kG || v == Variant::kNG || v == Variant::kNGBI; }

bool PipelineConfig::InpaintEnabled() const {
  return run_inpaint.value_or(variant == Variant::kNG || variant == Variant::kNGBI);
}

void PipelineConfig::Validate() const {
  if (dataset.empty()) throw std::invalid_argument("config: dataset directory not set");
  sequence.intrinsics.Validate();
  seg.Validate();
  if (variant == Variant::kNGBI && !InpaintEnabled()) {
    throw std::invalid_argument("config: variant N+G+BI requires inpainting");
  }
  if (inpaint.keyframes < 1) throw std::invalid_argument("config: inpaint keyframes must be >= 1");
  if (tracker.keyframe_interval < 1) throw std::invalid_argument("config: keyframe interval must be >= 1");
}

RunResult RunPipeline(const PipelineConfig& config, const FrameObserver& observer) {
  config.Validate();
  const Intrinsics& k = config.sequence.intrinsics;
  const Sequence seq = LoadSequence(config.dataset, config.sequence);
  if (seq.records.empty()) throw InputError("dataset has no associated rgb/depth frames: " + config.dataset.string());
  if (UsesSemantic(config.variant) && !seq.has_masks) {
    throw InputError("variant " + ToString(config.variant) + " needs a mask for every frame in " +
                     config.sequence.mask_dir.value_or(config.dataset / "masks").string());
  }
  const bool gt_poses = config.pose_source == PoseSource::kGroundTruth;
  if (gt_poses) {
    for (const FrameRecord& r : seq.records) {
      if (!r.gt_pose) throw InputError("no ground-truth pose for frame " + r.Stem());
    }
  }
  const bool do_inpaint = config.InpaintEnabled();
  const bool write = !config.out.empty();
  const std::filesystem::path out_dir = config.out;

  Tracker tracker(config.tracker, k);
  RunResult result;
  eval::MaskAccumulator mask_acc;
  const std::size_t n =
      config.max_frames < 0 ? seq.records.size()
                            : std::min(seq.records.size(), static_cast<std::size_t>(config.max_frames));

  for (std::size_t fi = 0; fi < n; ++fi) {
    const int id = static_cast<int>(fi);
    const auto t_start = Clock::now();
    FrameState state;
    state.index = id;
    Frame frame = LoadFrame(seq.records[fi], config.sequence);
    if (!UsesSemantic(config.variant)) frame.semantic_mask.reset();
    state.frame = &frame;
    StageTimes& times = state.times;

    auto t0 = Clock::now();
    std::vector<Keypoint> keypoints = DetectKeypoints(ToGray(frame.rgb), config.tracker.detector);
    times.detect_ms = Ms(t0, Clock::now());

    const Mask empty(k.width, k.height, 0);
    const Mask& semantic = frame.semantic_mask ? *frame.semantic_mask : empty;
    auto filtered = [&](const std::vector<Keypoint>& kps, const Mask& m) {
      return CountSet(m) ? FilterKeypointsByMask(kps, m, config.tracker.contour_margin) : kps;
    };

    // Low-cost tracking on the semantic-static features gives the pose used
    // by the multi-view geometry stage.
    Pose pose;
    TrackResult low_cost;
    const bool fresh = !tracker.initialized() || tracker.needs_reinit();
    if (gt_poses) {
      pose = *frame.record.gt_pose;
    } else if (fresh) {
      pose = tracker.initialized() ? tracker.last_pose() : Pose();
    } else {
      t0 = Clock::now();
      low_cost = tracker.Estimate(filtered(keypoints, semantic));
      pose = low_cost.pose;
      times.low_cost_tracking_ms = Ms(t0, Clock::now());
    }

    Mask dynamic = semantic;
    if (UsesGeometry(config.variant)) {
      t0 = Clock::now();
      const KeyframeRefs selected = SelectOverlapKeyframes(AllKeyframes(tracker.keyframes()), pose,
                                                           config.seg.overlap_keyframes, config.seg, id);
      state.segmentation = SegmentFrame(frame.depth, frame.semantic_mask, selected, pose, id, k, config.seg);
      dynamic = state.segmentation->fused;
      times.multi_view_geometry_ms = Ms(t0, Clock::now());
    }

    // N+G+BI restores the masked regions before the final tracking and lets
    // features come from the reconstruction as well.
    const RgbImage* track_rgb = &frame.rgb;
    const DepthMap* track_depth = &frame.depth;
    Mask track_mask = dynamic;
    if (do_inpaint && config.variant == Variant::kNGBI) {
      t0 = Clock::now();
      state.inpaint = InpaintFrame(frame.rgb, frame.depth, dynamic,
                                   MostRecentKeyframes(AllKeyframes(tracker.keyframes()),
                                                       config.inpaint.keyframes, id),
                                   pose, k, config.inpaint);
      times.background_inpainting_ms = Ms(t0, Clock::now());
      track_rgb = &state.inpaint->rgb;
      track_depth = &state.inpaint->depth;
      track_mask = Unrestored(dynamic, state.inpaint->coverage);
      t0 = Clock::now();
      keypoints = DetectKeypoints(ToGray(*track_rgb), config.tracker.detector);
      times.detect_ms += Ms(t0, Clock::now());
    }
    const std::vector<Keypoint> static_kps = filtered(keypoints, track_mask);

    t0 = Clock::now();
    TrackResult final_result;
    if (gt_poses) {
      final_result.pose = pose;
      final_result.tracked = true;
      final_result.keypoint_map_points.assign(static_kps.size(), -1);
      tracker.SetPose(id, pose);
      state.keyframe = tracker.keyframes().empty() || tracker.frames_since_keyframe(id) >= config.tracker.keyframe_interval;
      if (state.keyframe) {
        tracker.InsertKeyframe(id, frame.record.timestamp, final_result, static_kps, *track_rgb, *track_depth, track_mask);
      }
    } else if (fresh) {
      if (tracker.initialized()) ++result.reinitializations;
      final_result = tracker.Bootstrap(id, frame.record.timestamp, pose, static_kps, *track_rgb, *track_depth, track_mask);
      // A re-initialized frame only inherits the last pose.
      final_result.tracked = id == 0;
      state.keyframe = true;
    } else {
      final_result = tracker.Estimate(static_kps, low_cost.tracked ? std::optional<Pose>(low_cost.pose) : std::nullopt);
      tracker.Commit(id, final_result);
      if (tracker.NeedsKeyframe(final_result)) {
        tracker.InsertKeyframe(id, frame.record.timestamp, final_result, static_kps, *track_rgb, *track_depth, track_mask);
        state.keyframe = true;
      }
    }
    times.final_tracking_ms = Ms(t0, Clock::now());
    if (state.keyframe) ++result.keyframes_inserted;
    state.pose = final_result.pose;
    state.tracked = final_result.tracked;

    if (do_inpaint && config.variant != Variant::kNGBI) {
      t0 = Clock::now();
      state.inpaint = InpaintFrame(frame.rgb, frame.depth, dynamic,
                                   MostRecentKeyframes(AllKeyframes(tracker.keyframes()),
                                                       config.inpaint.keyframes, id),
                                   state.pose, k, config.inpaint);
      times.background_inpainting_ms = Ms(t0, Clock::now());
    }
    state.mask = dynamic;
    state.tracker = &tracker;
    times.total_ms = Ms(t_start, Clock::now());

    const std::string stem = frame.record.Stem();
    if (config.gt_mask_dir) {
      const auto gt_file = *config.gt_mask_dir / (stem + ".png");
      if (!std::filesystem::exists(gt_file)) throw InputError("missing ground-truth mask " + gt_file.string());
      mask_acc.Add(dynamic, ReadMask(gt_file));
    }
    if (write && config.write_masks) {
      const auto file = out_dir / "masks" / (stem + ".png");
      WriteMask(file, dynamic);
      result.outputs.push_back(file);
    }
    if (write && config.write_inpaint && state.inpaint) {
      const auto dir = out_dir / "inpaint";
      const auto rgb_file = dir / (stem + "_inpaint.png");
      const auto depth_file = dir / (stem + "_depth_inpaint.png");
      const auto cov_file = dir / (stem + "_coverage.png");
      WriteRgb(rgb_file, state.inpaint->rgb);
      WriteDepth(depth_file, state.inpaint->depth, config.sequence.depth_scale);
      WriteMask(cov_file, state.inpaint->coverage);
      result.outputs.insert(result.outputs.end(), {rgb_file, depth_file, cov_file});
    }

    result.trajectory.push_back({frame.record.timestamp, state.pose});
    result.tracked.push_back(state.tracked);
    result.stems.push_back(stem);
    result.times.push_back(times);
    if (observer) observer(state);
  }

  if (!tracker.initialized()) throw DegenerateProblem("tracking never initialized");

  if (!seq.ground_truth.empty() && result.trajectory.size() >= 2) {
    try {
      result.ate = eval::Ate(result.trajectory, seq.ground_truth, config.sequence.association_tolerance);
      result.rpe = eval::Rpe(result.trajectory, seq.ground_truth, eval::kDefaultSegmentLengths,
                             config.sequence.association_tolerance);
    } catch (const std::invalid_argument&) {
      // Too short for a report; metrics.json simply omits it.
    }
  }
  if (config.gt_mask_dir) result.masks = mask_acc.Report();

  if (write) {
    std::filesystem::create_directories(out_dir);
    const auto traj_file = out_dir / "trajectory.txt";
    WriteTrajectory(traj_file, result.trajectory);
    result.outputs.push_back(traj_file);

    std::ostringstream csv;
    csv << "frame,stem,detect_ms,low_cost_tracking_ms,multi_view_geometry_ms,background_inpainting_ms,"
           "final_tracking_ms,total_ms\n";
    for (std::size_t i = 0; i < result.times.size(); ++i) {
      const StageTimes& t = result.times[i];
      char line[256];
      std::snprintf(line, sizeof line, "%zu,%s,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f\n", i, result.stems[i].c_str(),
                    t.detect_ms, t.low_cost_tracking_ms, t.multi_view_geometry_ms, t.background_inpainting_ms,
                    t.final_tracking_ms, t.total_ms);
      csv << line;
    }
    WriteText(out_dir / "timings.csv", csv.str());
    result.outputs.push_back(out_dir / "timings.csv");

    json m = {{"dataset", config.dataset.string()},
              {"variant", ToString(config.variant)},
              {"pose_source", ToString(config.pose_source)},
              {"seed", config.seed},
              {"tau_z", config.seg.tau_z},
              {"inpaint_keyframes", config.inpaint.keyframes},
              {"intrinsics", IntrinsicsJson(k)},
              {"frames", result.trajectory.size()},
              {"tracked_percent", eval::TrackedFraction(result.tracked)},
              {"keyframes_inserted", result.keyframes_inserted},
              {"reinitializations", result.reinitializations}};
    if (result.ate) m["ate"] = json::parse(eval::ToJson(*result.ate));
    if (result.rpe) m["rpe"] = json::parse(eval::ToJson(*result.rpe));
    if (result.masks) {
      json mj = json::parse(eval::ToJson(*result.masks));
      mj.erase("per_frame");
      m["mask"] = mj;
    }
    WriteText(out_dir / "metrics.json", m.dump(2) + "\n");
    result.outputs.push_back(out_dir / "metrics.json");
  }
  return result;
}

std::vector<SweepSample> BuildSweepSamples(const PipelineConfig& config, int stride) {
  if (stride < 1) throw std::invalid_argument("sweep: stride must be >= 1");
  if (!config.gt_mask_dir) throw std::invalid_argument("sweep: ground-truth mask directory not set");
  SequenceConfig sc = config.sequence;
  sc.mask_dir = *config.gt_mask_dir;
  const Sequence seq = LoadSequence(config.dataset, sc);
  if (!seq.has_masks) throw InputError("sweep: ground-truth masks missing in " + config.gt_mask_dir->string());

  std::deque<Keyframe> keyframes;
  std::vector<SweepSample> samples;
  const std::size_t n =
      config.max_frames < 0 ? seq.records.size()
                            : std::min(seq.records.size(), static_cast<std::size_t>(config.max_frames));
  int last_kf = -1;
  for (std::size_t fi = 0; fi < n; ++fi) {
    const int id = static_cast<int>(fi);
    const Frame frame = LoadFrame(seq.records[fi], sc);
    if (!frame.record.gt_pose) throw InputError("sweep: no ground-truth pose for frame " + frame.record.Stem());
    const Pose pose = *frame.record.gt_pose;
    const Mask& gt = *frame.semantic_mask;

    if (!keyframes.empty() && id % stride == 0) {
      SweepSample s;
      s.depth = frame.depth;
      s.pose = pose;
      s.frame_id = id;
      s.ground_truth = gt;
      KeyframeRefs refs = AllKeyframes(keyframes);
      for (const Keyframe* kf : SelectOverlapKeyframes(refs, pose, config.seg.overlap_keyframes, config.seg, id)) {
        Keyframe copy;
        copy.frame_id = kf->frame_id;
        copy.timestamp = kf->timestamp;
        copy.pose = kf->pose;
        copy.keypoints = kf->keypoints;
        copy.depth = kf->depth;
        s.keyframes.push_back(std::move(copy));
      }
      samples.push_back(std::move(s));
    }
    if (last_kf < 0 || id - last_kf >= config.tracker.keyframe_interval) {
      Keyframe kf;
      kf.frame_id = id;
      kf.timestamp = frame.record.timestamp;
      kf.pose = pose;
      kf.keypoints = FilterKeypointsByMask(DetectKeypoints(ToGray(frame.rgb), config.tracker.detector), gt,
                                           config.tracker.contour_margin);
      kf.depth = frame.depth;
      keyframes.push_back(std::move(kf));
      while (keyframes.size() > config.tracker.keyframe_capacity) keyframes.pop_front();
      last_kf = id;
    }
  }
  return samples;
}

std::string SweepCsv(const SweepResult& r) {
  std::ostringstream out;
  out << "tau_z,precision,recall,score\n";
  for (const SweepRow& row : r.table) {
    char line[128];
    std::snprintf(line, sizeof line, "%.3f,%.6f,%.6f,%.6f\n", row.tau_z, row.precision, row.recall, row.score);
    out << line;
  }
  return out.str();
}

void ApplyConfigFile(const std::filesystem::path& file, PipelineConfig* c) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("config " + file.string() + ": " + e.what());
  }
  try {
    if (j.contains("dataset")) c->dataset = j.at("dataset").get<std::string>();
    if (j.contains("intrinsics")) {
      const json& k = j.at("intrinsics");
      c->sequence.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                                k.at("cy").get<double>(), k.at("width").get<int>(), k.at("height").get<int>()};
    }
    c->sequence.depth_scale = j.value("depth_scale", c->sequence.depth_scale);
    c->sequence.association_tolerance = j.value("association_tolerance", c->sequence.association_tolerance);
    if (j.contains("masks")) c->sequence.mask_dir = j.at("masks").get<std::string>();
    if (j.contains("gt_masks")) c->gt_mask_dir = j.at("gt_masks").get<std::string>();
    if (j.contains("variant")) c->variant = ParseVariant(j.at("variant").get<std::string>());
    if (j.contains("pose_source")) c->pose_source = ParsePoseSource(j.at("pose_source").get<std::string>());
    if (j.contains("out")) c->out = j.at("out").get<std::string>();
    c->seed = j.value("seed", c->seed);
    c->max_frames = j.value("max_frames", c->max_frames);
    if (j.contains("inpaint")) c->run_inpaint = j.at("inpaint").get<bool>();
    if (j.contains("seg")) {
      const json& s = j.at("seg");
      SegParams& p = c->seg;
      p.tau_z = s.value("tau_z", p.tau_z);
      p.parallax_max_deg = s.value("parallax_max_deg", p.parallax_max_deg);
      p.overlap_keyframes = s.value("overlap_keyframes", p.overlap_keyframes);
      p.border_patch = s.value("border_patch", p.border_patch);
      p.border_var_max = s.value("border_var_max", p.border_var_max);
      p.grow_depth_tol = s.value("grow_depth_tol", p.grow_depth_tol);
      p.grow_connectivity = s.value("grow_connectivity", p.grow_connectivity);
    }
    if (j.contains("tracker")) {
      const json& t = j.at("tracker");
      TrackerParams& p = c->tracker;
      p.detector.target_count = t.value("features", p.detector.target_count);
      p.detector.fast_threshold = t.value("fast_threshold", p.detector.fast_threshold);
      p.contour_margin = t.value("contour_margin", p.contour_margin);
      p.search_radius = t.value("search_radius", p.search_radius);
      p.min_inliers = t.value("min_inliers", p.min_inliers);
      p.keyframe_interval = t.value("keyframe_interval", p.keyframe_interval);
      p.keyframe_ratio = t.value("keyframe_ratio", p.keyframe_ratio);
      p.keyframe_capacity = t.value("keyframe_capacity", p.keyframe_capacity);
    }
    if (j.contains("inpaint_keyframes")) c->inpaint.keyframes = j.at("inpaint_keyframes").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("config " + file.string() + ": " + e.what());
  }
}

}  // namespace mvdyn
