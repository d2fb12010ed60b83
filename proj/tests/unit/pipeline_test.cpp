#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mvdyn/errors.hpp"
#include "mvdyn/pipeline.hpp"
#include "mvdyn/synth.hpp"

namespace fs = std::filesystem;

namespace mvdyn {
namespace {

// Full-resolution synthetic sequences rendered once for the whole suite.
class Sequences : public ::testing::Environment {
 public:
  static fs::path root() { return fs::temp_directory_path() / "mvdyn_pipeline_test"; }
  static fs::path static_dir() { return root() / "static"; }
  static fs::path cuboid_dir() { return root() / "cuboid"; }

  void SetUp() override {
    fs::remove_all(root());
    synth::WriteDataset(synth::StaticScene(), static_dir());
    synth::WriteDataset(synth::CuboidWalkScene(), cuboid_dir());
  }
};

PipelineConfig Config(const fs::path& dataset, Variant v) {
  PipelineConfig c;
  c.dataset = dataset;
  ApplyConfigFile(dataset / "config.json", &c);
  c.sequence.mask_dir = dataset / "semantic";
  c.variant = v;
  c.run_inpaint = false;
  return c;
}

double PathLength(const Trajectory& t) {
  double len = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) len += (t[i].pose.translation() - t[i - 1].pose.translation()).norm();
  return len;
}

const RunResult& StaticRun() {
  static const RunResult r = RunPipeline(Config(Sequences::static_dir(), Variant::kNone));
  return r;
}

TEST(Pipeline, StaticSceneAteBelowOnePercentOfPath) {
  const PipelineConfig c = Config(Sequences::static_dir(), Variant::kNone);
  const RunResult& r = StaticRun();
  ASSERT_TRUE(r.ate);
  const double length = PathLength(LoadSequence(c.dataset, c.sequence).ground_truth);
  EXPECT_LT(r.ate->rmse, 0.01 * length) << "ATE " << r.ate->rmse << " path " << length;
  EXPECT_DOUBLE_EQ(eval::TrackedFraction(r.tracked), 100.0);
}

TEST(Pipeline, MaskedCuboidStaysCloseToStaticUnmaskedDegrades) {
  const RunResult masked = RunPipeline(Config(Sequences::cuboid_dir(), Variant::kN));
  const RunResult unmasked = RunPipeline(Config(Sequences::cuboid_dir(), Variant::kNone));
  const double base = StaticRun().ate->rmse;
  EXPECT_LE(masked.ate->rmse, 2.0 * base) << masked.ate->rmse << " vs static " << base;
  EXPECT_GT(unmasked.ate->rmse, 5.0 * base) << unmasked.ate->rmse << " vs static " << base;
}

TEST(Pipeline, EveryFrameReachesAKeyframe) {
  PipelineConfig c = Config(Sequences::cuboid_dir(), Variant::kNG);
  c.pose_source = PoseSource::kGroundTruth;
  SegParams reach;
  int frames = 0, reached = 0;
  RunPipeline(c, [&](const FrameState& s) {
    ++frames;
    const auto kfs = AllKeyframes(s.tracker->keyframes());
    reached += !SelectOverlapKeyframes(kfs, s.pose, reach.overlap_keyframes, reach).empty();
  });
  EXPECT_EQ(frames, 60);
  EXPECT_EQ(reached, frames);
}

TEST(Pipeline, WritesAnnouncedOutputs) {
  PipelineConfig c = Config(Sequences::cuboid_dir(), Variant::kNG);
  c.pose_source = PoseSource::kGroundTruth;
  c.run_inpaint = true;
  c.max_frames = 12;
  c.gt_mask_dir = Sequences::cuboid_dir() / "masks";
  c.out = Sequences::root() / "run_out";
  const RunResult r = RunPipeline(c);
  EXPECT_EQ(r.trajectory.size(), 12u);
  ASSERT_TRUE(r.masks);
  for (const auto& f : r.outputs) EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_TRUE(fs::exists(c.out / "trajectory.txt"));
  EXPECT_TRUE(fs::exists(c.out / "metrics.json"));
  EXPECT_TRUE(fs::exists(c.out / "timings.csv"));
  EXPECT_EQ(ReadMask(c.out / "masks" / (r.stems[5] + ".png")).width(), 640);
  EXPECT_TRUE(fs::exists(c.out / "inpaint" / (r.stems[5] + "_inpaint.png")));
  EXPECT_EQ(ReadTrajectory(c.out / "trajectory.txt").size(), 12u);
}

TEST(Pipeline, SemanticVariantsNeedMasks) {
  PipelineConfig c = Config(Sequences::static_dir(), Variant::kN);
  c.sequence.mask_dir = Sequences::root() / "nowhere";
  EXPECT_THROW(RunPipeline(c), InputError);
}

TEST(Variants, ParseAndPrint) {
  for (Variant v : {Variant::kNone, Variant::kN, Variant::kG, Variant::kNG, Variant::kNGBI}) {
    EXPECT_EQ(ParseVariant(ToString(v)), v);
  }
  EXPECT_TRUE(UsesSemantic(Variant::kNG));
  EXPECT_FALSE(UsesSemantic(Variant::kG));
  EXPECT_TRUE(UsesGeometry(Variant::kNGBI));
  EXPECT_FALSE(UsesGeometry(Variant::kN));
  EXPECT_EQ(ParsePoseSource("gt"), PoseSource::kGroundTruth);
  EXPECT_THROW(ParseVariant("X"), std::invalid_argument);
}

TEST(Config, JsonKeysOverrideDefaults) {
  const fs::path file = fs::temp_directory_path() / "mvdyn_config_test.json";
  std::ofstream(file) << R"({"variant": "G", "pose_source": "ground-truth", "seed": 9,
    "seg": {"tau_z": 0.55, "grow_connectivity": 4}, "tracker": {"keyframe_interval": 7},
    "inpaint_keyframes": 12, "intrinsics": {"fx": 1, "fy": 2, "cx": 3, "cy": 4, "width": 5, "height": 6}})";
  PipelineConfig c;
  ApplyConfigFile(file, &c);
  EXPECT_EQ(c.variant, Variant::kG);
  EXPECT_EQ(c.pose_source, PoseSource::kGroundTruth);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.seg.tau_z, 0.55);
  EXPECT_EQ(c.seg.grow_connectivity, 4);
  EXPECT_DOUBLE_EQ(c.seg.parallax_max_deg, 30.0);
  EXPECT_EQ(c.tracker.keyframe_interval, 7);
  EXPECT_EQ(c.inpaint.keyframes, 12);
  EXPECT_EQ(c.sequence.intrinsics.height, 6);

  std::ofstream(file) << R"({"seg": {"tau_z": "high"}})";
  EXPECT_THROW(ApplyConfigFile(file, &c), FormatError);
}

TEST(Config, Validate) {
  PipelineConfig c;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c.dataset = "x";
  c.variant = Variant::kNGBI;
  c.run_inpaint = false;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mvdyn

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::AddGlobalTestEnvironment(new mvdyn::Sequences);
  return RUN_ALL_TESTS();
}
