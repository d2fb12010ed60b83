#include "mvdyn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mvdyn/dataset.hpp"
#include "mvdyn/errors.hpp"
#include "mvdyn/image_io.hpp"

namespace mvdyn::synth {
namespace {

using nlohmann::json;

std::uint64_t Mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rgb Shade(const Texture& tex, int face, double a, double b) {
  const auto i = static_cast<std::int64_t>(std::floor(a / tex.cell));
  const auto j = static_cast<std::int64_t>(std::floor(b / tex.cell));
  std::uint64_t h = Mix(tex.seed);
  h = Mix(h ^ static_cast<std::uint64_t>(face));
  h = Mix(h ^ static_cast<std::uint64_t>(i));
  h = Mix(h ^ static_cast<std::uint64_t>(j));
  const int span = std::max(tex.high - tex.low, 0) + 1;
  const double value = tex.low + static_cast<double>(h % static_cast<std::uint64_t>(span));
  auto channel = [value](double t) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(value * t), 0L, 255L));
  };
  return Rgb{channel(tex.tint.x()), channel(tex.tint.y()), channel(tex.tint.z())};
}

// Slab intersection in the box frame. Returns the entry distance and the
// entry face (axis * 2 + side).
std::optional<std::pair<double, int>> IntersectBox(const Eigen::Vector3d& half,
                                                   const Eigen::Vector3d& origin,
                                                   const Eigen::Vector3d& dir) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int face = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < -half[a] || origin[a] > half[a]) return std::nullopt;
      continue;
    }
    double t1 = (-half[a] - origin[a]) / dir[a];
    double t2 = (half[a] - origin[a]) / dir[a];
    int side = 0;
    if (t1 > t2) {
      std::swap(t1, t2);
      side = 1;
    }
    if (t1 > t_near) {
      t_near = t1;
      face = a * 2 + side;
    }
    t_far = std::min(t_far, t2);
  }
  if (face < 0 || t_near > t_far || !(t_near > 1e-9)) return std::nullopt;
  return std::make_pair(t_near, face);
}

struct Candidate {
  double depth;
  bool dynamic;
  Rgb color;
};

struct PlacedBox {
  const Box* box;
  Pose world_to_box;
  bool dynamic;
};

std::vector<PlacedBox> Place(const SceneSpec& spec, double frame) {
  std::vector<PlacedBox> out;
  for (const Box& b : spec.static_boxes) {
    out.push_back({&b, Pose(Eigen::Quaterniond::Identity(), -b.center), false});
  }
  for (const DynamicObject& o : spec.dynamic_objects) {
    const Pose m = SamplePath(o.path, frame) * Pose(Eigen::Quaterniond::Identity(), o.box.center);
    out.push_back({&o.box, m.Inverse(), true});
  }
  return out;
}

// Nearest hit over all boxes and over static boxes only.
void Trace(const std::vector<PlacedBox>& boxes, const Eigen::Vector3d& origin_w, const Eigen::Vector3d& dir_w,
           std::optional<Candidate>* all, std::optional<Candidate>* background) {
  for (const PlacedBox& pb : boxes) {
    const Eigen::Vector3d o = pb.world_to_box * origin_w;
    const Eigen::Vector3d d = pb.world_to_box.rotation() * dir_w;
    const Eigen::Vector3d half = 0.5 * pb.box->size;
    const auto hit = IntersectBox(half, o, d);
    if (!hit) continue;
    const bool near_all = !*all || hit->first < (*all)->depth;
    const bool near_bg = !pb.dynamic && background && (!*background || hit->first < (*background)->depth);
    if (!near_all && !near_bg) continue;
    const Eigen::Vector3d p = o + hit->first * d + half;  // in [0, size]
    const int axis = hit->second / 2;
    const Candidate c{hit->first, pb.dynamic,
                      Shade(pb.box->texture, hit->second, p[(axis + 1) % 3], p[(axis + 2) % 3])};
    if (near_all) *all = c;
    if (near_bg) *background = c;
  }
}

Eigen::Vector3d RayDirection(const Intrinsics& k, const Pose& camera, double u, double v) {
  // Unit z in the camera frame, so the ray parameter is the depth.
  return camera.rotation() * Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
}

json ToJson(const Pose& p) {
  const auto& q = p.rotation();
  const auto& t = p.translation();
  return {{"translation", {t.x(), t.y(), t.z()}}, {"rotation_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose PoseFromJson(const json& j) {
  const auto t = j.at("translation").get<std::vector<double>>();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  if (j.contains("rotation_wxyz")) {
    const auto r = j.at("rotation_wxyz").get<std::vector<double>>();
    if (r.size() != 4) throw std::invalid_argument("scene: rotation_wxyz needs 4 values");
    q = Eigen::Quaterniond(r[0], r[1], r[2], r[3]);
  } else if (j.contains("rotation_deg")) {
    // Extrinsic x-y-z Euler angles in degrees.
    const auto e = j.at("rotation_deg").get<std::vector<double>>();
    if (e.size() != 3) throw std::invalid_argument("scene: rotation_deg needs 3 values");
    q = Eigen::AngleAxisd(Deg2Rad(e[2]), Eigen::Vector3d::UnitZ()) *
        Eigen::AngleAxisd(Deg2Rad(e[1]), Eigen::Vector3d::UnitY()) *
        Eigen::AngleAxisd(Deg2Rad(e[0]), Eigen::Vector3d::UnitX());
  }
  if (t.size() != 3) throw std::invalid_argument("scene: translation needs 3 values");
  return Pose(q, Eigen::Vector3d(t[0], t[1], t[2]));
}

json ToJson(const Box& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}},
          {"texture",
           {{"seed", b.texture.seed},
            {"cell", b.texture.cell},
            {"low", b.texture.low},
            {"high", b.texture.high},
            {"tint", {b.texture.tint.x(), b.texture.tint.y(), b.texture.tint.z()}}}}};
}

Eigen::Vector3d Vec3(const json& j, const char* name) {
  const auto v = j.at(name).get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument(std::string("scene: ") + name + " needs 3 values");
  return {v[0], v[1], v[2]};
}

Box BoxFromJson(const json& j) {
  Box b;
  b.center = Vec3(j, "center");
  b.size = Vec3(j, "size");
  if (j.contains("texture")) {
    const json& t = j.at("texture");
    b.texture.seed = t.value("seed", b.texture.seed);
    b.texture.cell = t.value("cell", b.texture.cell);
    b.texture.low = t.value("low", b.texture.low);
    b.texture.high = t.value("high", b.texture.high);
    if (t.contains("tint")) b.texture.tint = Vec3(t, "tint");
  }
  return b;
}

json ToJson(const std::vector<Waypoint>& path) {
  json arr = json::array();
  for (const auto& w : path) {
    json e = ToJson(w.pose);
    e["frame"] = w.frame;
    arr.push_back(e);
  }
  return arr;
}

std::vector<Waypoint> PathFromJson(const json& j) {
  std::vector<Waypoint> path;
  for (const auto& e : j) path.push_back({e.at("frame").get<double>(), PoseFromJson(e)});
  return path;
}

bool PointInsideBox(const Box& box, const Pose& box_to_world, const Eigen::Vector3d& p) {
  const Eigen::Vector3d local = box_to_world.Inverse() * p;
  const Eigen::Vector3d half = 0.5 * box.size;
  return (local.array().abs() < half.array()).all();
}

}  // namespace

void SceneSpec::Validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("scene spec: " + field + ": " + why);
  };
  try {
    intrinsics.Validate();
  } catch (const std::invalid_argument& e) {
    fail("intrinsics", e.what());
  }
  if (intrinsics.width < 64 || intrinsics.height < 64) fail("intrinsics", "resolution must be at least 64x64");
  if (frame_count < 1) fail("frame_count", "must be >= 1");
  if (!(frame_rate > 0.0)) fail("frame_rate", "must be > 0");
  if (!(depth_noise >= 0.0)) fail("depth_noise", "must be >= 0");
  if (!(pixel_noise >= 0.0)) fail("pixel_noise", "must be >= 0");
  if (semantic_dilation < 0) fail("semantic_dilation", "must be >= 0");
  if (camera_path.empty()) fail("camera_path", "needs at least one waypoint");
  auto check_box = [&](const Box& b, const std::string& name) {
    if ((b.size.array() < 0.0).any()) fail(name + ".size", "must be non-negative");
    if (!(b.texture.cell > 0.0)) fail(name + ".texture.cell", "must be > 0");
    if (b.texture.low < 0 || b.texture.high > 255 || b.texture.low > b.texture.high) {
      fail(name + ".texture", "need 0 <= low <= high <= 255");
    }
  };
  for (std::size_t i = 0; i < static_boxes.size(); ++i) check_box(static_boxes[i], "static_boxes[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < dynamic_objects.size(); ++i) {
    const std::string name = "dynamic_objects[" + std::to_string(i) + "]";
    check_box(dynamic_objects[i].box, name + ".box");
    if (dynamic_objects[i].path.empty()) fail(name + ".path", "needs at least one waypoint");
  }
  for (int f = 0; f < frame_count; ++f) {
    const Eigen::Vector3d c = SamplePath(camera_path, f).translation();
    for (const Box& b : static_boxes) {
      if (PointInsideBox(b, Pose(Eigen::Quaterniond::Identity(), b.center), c)) {
        fail("camera_path", "camera inside static geometry at frame " + std::to_string(f));
      }
    }
    for (const DynamicObject& o : dynamic_objects) {
      const Pose m = SamplePath(o.path, f) * Pose(Eigen::Quaterniond::Identity(), o.box.center);
      if (PointInsideBox(o.box, m, c)) {
        fail("camera_path", "camera inside a dynamic object at frame " + std::to_string(f));
      }
    }
  }
}

Pose SamplePath(const std::vector<Waypoint>& path, double frame) {
  if (path.empty()) return Pose();
  if (frame <= path.front().frame) return path.front().pose;
  if (frame >= path.back().frame) return path.back().pose;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (frame <= path[i].frame) {
      const double s = (frame - path[i - 1].frame) / (path[i].frame - path[i - 1].frame);
      return Interpolate(path[i - 1].pose, path[i].pose, s);
    }
  }
  return path.back().pose;
}

std::optional<RayHit> CastRay(const SceneSpec& spec, double frame, const Pose& camera, double u,
                              double v, bool include_dynamic) {
  std::vector<PlacedBox> boxes = Place(spec, frame);
  if (!include_dynamic) std::erase_if(boxes, [](const PlacedBox& b) { return b.dynamic; });
  std::optional<Candidate> best;
  Trace(boxes, camera.translation(), RayDirection(spec.intrinsics, camera, u, v), &best, nullptr);
  if (!best) return std::nullopt;
  return RayHit{best->depth, best->dynamic, best->color};
}

SynthFrame RenderFrame(const SceneSpec& spec, int index) {
  const Intrinsics& k = spec.intrinsics;
  SynthFrame f;
  f.index = index;
  f.timestamp = spec.start_time + index / spec.frame_rate;
  f.gt_pose = SamplePath(spec.camera_path, index);
  f.rgb = RgbImage(k.width, k.height);
  f.depth = DepthMap(k.width, k.height, 0.0f);
  f.gt_dynamic_mask = Mask(k.width, k.height, 0);
  f.gt_background_rgb = RgbImage(k.width, k.height);
  f.gt_background_depth = DepthMap(k.width, k.height, 0.0f);

  std::mt19937_64 rng(Mix(spec.seed) ^ static_cast<std::uint64_t>(index));
  std::normal_distribution<double> pixel_noise(0.0, spec.pixel_noise > 0.0 ? spec.pixel_noise : 1.0);
  std::normal_distribution<double> depth_noise(0.0, spec.depth_noise > 0.0 ? spec.depth_noise : 1.0);
  auto noisy = [](Rgb c, double n) {
    auto ch = [n](std::uint8_t x) {
      return static_cast<std::uint8_t>(std::clamp(std::lround(x + n), 0L, 255L));
    };
    return Rgb{ch(c.r), ch(c.g), ch(c.b)};
  };
  auto valid_depth = [](double d) { return d > 0.01 && d < 100.0 ? static_cast<float>(d) : 0.0f; };

  const std::vector<PlacedBox> boxes = Place(spec, index);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      std::optional<Candidate> hit, bg;
      Trace(boxes, f.gt_pose.translation(), RayDirection(k, f.gt_pose, u, v), &hit, &bg);
      // Noise is drawn once per pixel and shared by both renders so they
      // agree exactly outside the dynamic mask.
      const double pn = spec.pixel_noise > 0.0 ? pixel_noise(rng) : 0.0;
      const double dn = spec.depth_noise > 0.0 ? depth_noise(rng) : 0.0;
      if (hit) {
        f.rgb(u, v) = noisy(hit->color, pn);
        f.depth(u, v) = valid_depth(hit->depth + dn);
        f.gt_dynamic_mask(u, v) = hit->dynamic ? 1 : 0;
      }
      if (bg) {
        f.gt_background_rgb(u, v) = noisy(bg->color, pn);
        f.gt_background_depth(u, v) = valid_depth(bg->depth + dn);
      }
    }
  }
  return f;
}

std::vector<SynthFrame> Render(const SceneSpec& spec) {
  spec.Validate();
  std::vector<SynthFrame> frames;
  frames.reserve(static_cast<std::size_t>(spec.frame_count));
  for (int i = 0; i < spec.frame_count; ++i) frames.push_back(RenderFrame(spec, i));
  return frames;
}

void WriteDataset(const SceneSpec& spec, const std::filesystem::path& dir) {
  spec.Validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream rgb_list(dir / "rgb.txt");
  std::ofstream depth_list(dir / "depth.txt");
  if (!rgb_list || !depth_list) throw InputError("cannot write dataset lists in " + dir.string());
  rgb_list << "# synthetic rgb\n# timestamp filename\n";
  depth_list << "# synthetic depth\n# timestamp filename\n";
  Trajectory gt;
  for (int i = 0; i < spec.frame_count; ++i) {
    const SynthFrame f = RenderFrame(spec, i);
    const std::string stem = TimestampStem(f.timestamp);
    WriteRgb(dir / "rgb" / (stem + ".png"), f.rgb);
    WriteDepth(dir / "depth" / (stem + ".png"), f.depth);
    WriteMask(dir / "masks" / (stem + ".png"), f.gt_dynamic_mask);
    WriteRgb(dir / "background" / (stem + ".png"), f.gt_background_rgb);
    if (spec.semantic_dilation > 0) {
      WriteMask(dir / "semantic" / (stem + ".png"), Dilate(f.gt_dynamic_mask, spec.semantic_dilation));
    }
    rgb_list << stem << " rgb/" << stem << ".png\n";
    depth_list << stem << " depth/" << stem << ".png\n";
    gt.push_back({f.timestamp, f.gt_pose});
  }
  WriteTrajectory(dir / "groundtruth.txt", gt);
  SaveSceneSpec(spec, dir / "scene.json");

  const Intrinsics& k = spec.intrinsics;
  json config = {{"intrinsics",
                  {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
                 {"depth_scale", kTumDepthScale}};
  std::ofstream(dir / "config.json") << config.dump(2) << "\n";
}

void SaveSceneSpec(const SceneSpec& spec, const std::filesystem::path& file) {
  json j;
  const Intrinsics& k = spec.intrinsics;
  j["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  j["frame_count"] = spec.frame_count;
  j["frame_rate"] = spec.frame_rate;
  j["start_time"] = spec.start_time;
  j["depth_noise"] = spec.depth_noise;
  j["pixel_noise"] = spec.pixel_noise;
  j["seed"] = spec.seed;
  j["semantic_dilation"] = spec.semantic_dilation;
  j["static_boxes"] = json::array();
  for (const Box& b : spec.static_boxes) j["static_boxes"].push_back(ToJson(b));
  j["dynamic_objects"] = json::array();
  for (const DynamicObject& o : spec.dynamic_objects) {
    j["dynamic_objects"].push_back({{"box", ToJson(o.box)}, {"path", ToJson(o.path)}});
  }
  j["camera_path"] = ToJson(spec.camera_path);
  std::ofstream out(file);
  if (!out) throw InputError("cannot write scene spec: " + file.string());
  out << j.dump(2) << "\n";
}

SceneSpec LoadSceneSpec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open scene spec: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("scene spec " + file.string() + ": " + e.what());
  }
  SceneSpec s;
  try {
    if (j.contains("intrinsics")) {
      const json& k = j.at("intrinsics");
      s.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                      k.at("cy").get<double>(), k.at("width").get<int>(), k.at("height").get<int>()};
    }
    s.frame_count = j.value("frame_count", s.frame_count);
    s.frame_rate = j.value("frame_rate", s.frame_rate);
    s.start_time = j.value("start_time", s.start_time);
    s.depth_noise = j.value("depth_noise", s.depth_noise);
    s.pixel_noise = j.value("pixel_noise", s.pixel_noise);
    s.seed = j.value("seed", s.seed);
    s.semantic_dilation = j.value("semantic_dilation", s.semantic_dilation);
    if (j.contains("static_boxes")) {
      for (const auto& b : j.at("static_boxes")) s.static_boxes.push_back(BoxFromJson(b));
    }
    if (j.contains("dynamic_objects")) {
      for (const auto& o : j.at("dynamic_objects")) {
        s.dynamic_objects.push_back({BoxFromJson(o.at("box")), PathFromJson(o.at("path"))});
      }
    }
    if (j.contains("camera_path")) s.camera_path = PathFromJson(j.at("camera_path"));
  } catch (const json::exception& e) {
    throw FormatError("scene spec " + file.string() + ": " + e.what());
  }
  s.Validate();
  return s;
}

SceneSpec StaticScene() {
  SceneSpec s;
  Box wall;
  wall.center = {0.0, 0.0, 4.0};
  wall.size = {9.0, 7.0, 0.0};
  wall.texture = {11, 0.2, 30, 225, {1.0, 0.95, 0.85}};
  s.static_boxes.push_back(wall);
  Box left;
  // Static blocks stand 0.3 m proud of the wall.
  left.center = {-1.1, 0.55, 3.85};
  left.size = {0.6, 0.6, 0.3};
  left.texture = {23, 0.12, 30, 225, {0.85, 1.0, 0.9}};
  s.static_boxes.push_back(left);
  Box right;
  right.center = {1.15, -0.75, 3.85};
  right.size = {0.7, 0.5, 0.3};
  right.texture = {37, 0.12, 30, 225, {0.9, 0.9, 1.0}};
  s.static_boxes.push_back(right);

  const int last = s.frame_count - 1;
  const Eigen::Quaterniond end_rot = Eigen::AngleAxisd(Deg2Rad(-4.0), Eigen::Vector3d::UnitY()) *
                                     Eigen::AngleAxisd(Deg2Rad(1.5), Eigen::Vector3d::UnitX()) *
                                     Eigen::AngleAxisd(Deg2Rad(1.0), Eigen::Vector3d::UnitZ());
  s.camera_path = {{0.0, Pose()},
                   {last * 0.5, Pose(Eigen::AngleAxisd(Deg2Rad(-2.0), Eigen::Vector3d::UnitY()) *
                                         Eigen::Quaterniond(Eigen::AngleAxisd(Deg2Rad(0.5), Eigen::Vector3d::UnitX())),
                                     Eigen::Vector3d(-0.25, -0.04, 0.03))},
                   {static_cast<double>(last), Pose(end_rot, Eigen::Vector3d(-0.49, -0.05, 0.06))}};
  return s;
}

SceneSpec CuboidWalkScene() {
  SceneSpec s = StaticScene();
  DynamicObject cuboid;
  cuboid.box.center = {0.0, 0.05, 1.55};
  cuboid.box.size = {0.8, 0.7, 0.3};
  cuboid.box.texture = {101, 0.02, 20, 235, {1.0, 0.8, 0.7}};
  const double speed = 0.02;  // m per frame along +x
  const double start_x = -0.75;
  const int last = s.frame_count - 1;
  cuboid.path = {{0.0, Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(start_x, 0.0, 0.0))},
                 {static_cast<double>(last),
                  Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(start_x + speed * last, 0.0, 0.0))}};
  s.dynamic_objects.push_back(cuboid);
  s.semantic_dilation = 8;
  return s;
}

}  // namespace mvdyn::synth
