#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvdyn/dataset.hpp"
#include "mvdyn/dynaseg.hpp"
#include "mvdyn/eval.hpp"
#include "mvdyn/inpaint.hpp"
#include "mvdyn/tracking.hpp"

namespace mvdyn {

/// Variants: semantic masks only (N), multi-view geometry only (G),
/// both (N+G), both plus background inpainting before the final tracking
/// (N+G+BI), and no dynamic handling at all (none).
enum class Variant { kNone, kN, kG, kNG, kNGBI };
enum class PoseSource { kTracked, kGroundTruth };

std::string ToString(Variant v);
std::string ToString(PoseSource s);
Variant ParseVariant(const std::string& s);
PoseSource ParsePoseSource(const std::string& s);
bool UsesSemantic(Variant v);
bool UsesGeometry(Variant v);

struct PipelineConfig {
  std::filesystem::path dataset;
  SequenceConfig sequence;
  Variant variant = Variant::kNG;
  PoseSource pose_source = PoseSource::kTracked;
  SegParams seg;
  TrackerParams tracker;
  InpaintParams inpaint;
  /// Run background inpainting; defaults to on for N+G and N+G+BI.
  std::optional<bool> run_inpaint;
  /// Ground-truth dynamic masks for mask metrics (optional).
  std::optional<std::filesystem::path> gt_mask_dir;
  /// Empty: nothing is written.
  std::filesystem::path out;
  bool write_masks = true;
  bool write_inpaint = true;
  std::uint64_t seed = 0;
  /// Process at most this many frames (< 0: all).
  int max_frames = -1;

  bool InpaintEnabled() const;
  /// Throws std::invalid_argument on an inconsistent configuration.
  void Validate() const;
};

struct StageTimes {
  double detect_ms = 0.0;
  double low_cost_tracking_ms = 0.0;
  double multi_view_geometry_ms = 0.0;
  double background_inpainting_ms = 0.0;
  double final_tracking_ms = 0.0;
  double total_ms = 0.0;
};

/// Everything known about one processed frame; handed to the observer.
struct FrameState {
  int index = 0;
  const Frame* frame = nullptr;
  Pose pose;
  bool tracked = false;
  bool keyframe = false;
  /// Mask used to filter tracking features.
  Mask mask;
  std::optional<DynMask> segmentation;
  std::optional<InpaintResult> inpaint;
  const Tracker* tracker = nullptr;
  StageTimes times;
};

using FrameObserver = std::function<void(const FrameState&)>;

struct RunResult {
  Trajectory trajectory;
  std::vector<bool> tracked;
  std::vector<std::string> stems;
  std::vector<StageTimes> times;
  std::size_t keyframes_inserted = 0;
  std::size_t reinitializations = 0;
  std::optional<eval::AteReport> ate;
  std::optional<eval::RpeReport> rpe;
  std::optional<eval::MaskReport> masks;
  /// Files written under config.out.
  std::vector<std::filesystem::path> outputs;
};

/// Processes the whole sequence. Deterministic for a given configuration.
RunResult RunPipeline(const PipelineConfig& config, const FrameObserver& observer = {});

/// Labeled samples for the tau_z sweep: ground-truth poses, keyframes every
/// tracker.keyframe_interval frames with keypoints outside the ground-truth
/// mask, one sample every `stride` frames once a keyframe exists.
std::vector<SweepSample> BuildSweepSamples(const PipelineConfig& config, int stride = 5);

/// Sweep table as CSV with header "tau_z,precision,recall,score".
std::string SweepCsv(const SweepResult& r);

/// Reads a JSON configuration (see README) into `config`; keys that are
/// absent leave the current values untouched.
void ApplyConfigFile(const std::filesystem::path& file, PipelineConfig* config);

}  // namespace mvdyn
