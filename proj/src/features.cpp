#include "mvdyn/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "mvdyn/geometry.hpp"

namespace mvdyn {
namespace {

constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1},
                                {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
constexpr int kArcLength = 9;
constexpr int kOrientationRadius = 15;
constexpr int kPatternRadius = 13;

struct PatternPair {
  int x1, y1, x2, y2;
};

std::uint64_t SplitMix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Roughly Gaussian offsets (sum of four uniforms) restricted to a disc, so a
// rotated pattern never leaves the kPatchMargin border.
std::array<PatternPair, 256> MakePattern() {
  std::array<PatternPair, 256> pattern{};
  std::uint64_t state = 0x5eed0fb41e7ULL;
  auto sample = [&state]() {
    for (;;) {
      int xy[2];
      for (int& c : xy) {
        int s = 0;
        for (int k = 0; k < 4; ++k) s += static_cast<int>(SplitMix64(state) % 15);
        c = s - 28;  // range [-28, 28], std ~8.6
        c = c / 2;   // range [-14, 14]
      }
      if (xy[0] * xy[0] + xy[1] * xy[1] <= kPatternRadius * kPatternRadius) {
        return std::pair<int, int>(xy[0], xy[1]);
      }
    }
  };
  for (auto& p : pattern) {
    do {
      std::tie(p.x1, p.y1) = sample();
      std::tie(p.x2, p.y2) = sample();
    } while (p.x1 == p.x2 && p.y1 == p.y2);
  }
  return pattern;
}

const std::array<PatternPair, 256>& Pattern() {
  static const std::array<PatternPair, 256> pattern = MakePattern();
  return pattern;
}

bool SegmentTest(const GrayImage& img, int u, int v, int threshold) {
  const int center = img(u, v);
  const int hi = center + threshold;
  const int lo = center - threshold;
  // At least two of the four compass points belong to any 9-pixel arc.
  int brighter = 0;
  int darker = 0;
  for (int k = 0; k < 16; k += 4) {
    const int p = img(u + kCircle[k][0], v + kCircle[k][1]);
    brighter += p > hi;
    darker += p < lo;
  }
  if (brighter < 2 && darker < 2) return false;

  int state[16];
  for (int k = 0; k < 16; ++k) {
    const int p = img(u + kCircle[k][0], v + kCircle[k][1]);
    state[k] = p > hi ? 1 : (p < lo ? -1 : 0);
  }
  for (int sign : {1, -1}) {
    int run = 0;
    for (int k = 0; k < 16 + kArcLength - 1; ++k) {
      if (state[k % 16] == sign) {
        if (++run >= kArcLength) return true;
      } else {
        run = 0;
      }
    }
  }
  return false;
}

double HarrisResponse(const GrayImage& img, int u, int v, int block, double k) {
  const int r = block / 2;
  // Gaussian window: a flat one pulls the maximum inside sharp corners.
  const double inv_two_sigma2 = 1.0 / (2.0 * std::max(0.25 * r * r, 0.25));
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (int dv = -r; dv <= r; ++dv) {
    for (int du = -r; du <= r; ++du) {
      const int x = u + du;
      const int y = v + dv;
      // Sobel gradients.
      const double gx = (img(x + 1, y - 1) + 2.0 * img(x + 1, y) + img(x + 1, y + 1)) -
                        (img(x - 1, y - 1) + 2.0 * img(x - 1, y) + img(x - 1, y + 1));
      const double gy = (img(x - 1, y + 1) + 2.0 * img(x, y + 1) + img(x + 1, y + 1)) -
                        (img(x - 1, y - 1) + 2.0 * img(x, y - 1) + img(x + 1, y - 1));
      const double w = std::exp(-(du * du + dv * dv) * inv_two_sigma2);
      sxx += w * gx * gx;
      syy += w * gy * gy;
      sxy += w * gx * gy;
    }
  }
  // Normalize so responses are comparable across block sizes.
  const double scale = 1.0 / (4.0 * 255.0 * block * block);
  sxx *= scale;
  syy *= scale;
  sxy *= scale;
  const double trace = sxx + syy;
  return sxx * syy - sxy * sxy - k * trace * trace;
}

double Orientation(const GrayImage& img, int u, int v) {
  long long m10 = 0;
  long long m01 = 0;
  const int r2 = kOrientationRadius * kOrientationRadius;
  for (int dv = -kOrientationRadius; dv <= kOrientationRadius; ++dv) {
    for (int du = -kOrientationRadius; du <= kOrientationRadius; ++du) {
      if (du * du + dv * dv > r2) continue;
      const int p = img(u + du, v + dv);
      m10 += static_cast<long long>(du) * p;
      m01 += static_cast<long long>(dv) * p;
    }
  }
  return Rad2Deg(std::atan2(static_cast<double>(m01), static_cast<double>(m10)));
}

// Integer 5x5 binomial blur; exact, so a constant offset passes through.
GrayImage Smooth(const GrayImage& img) {
  static constexpr int kKernel[5] = {1, 4, 6, 4, 1};
  const int w = img.width();
  const int h = img.height();
  Image<int> tmp(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int s = 0;
      for (int k = -2; k <= 2; ++k) s += kKernel[k + 2] * img(std::clamp(u + k, 0, w - 1), v);
      tmp(u, v) = s;
    }
  }
  GrayImage out(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int s = 0;
      for (int k = -2; k <= 2; ++k) s += kKernel[k + 2] * tmp(u, std::clamp(v + k, 0, h - 1));
      out(u, v) = static_cast<std::uint8_t>((s + 128) / 256);
    }
  }
  return out;
}

Descriptor Describe(const GrayImage& smooth, int u, int v, double angle_deg) {
  const double a = Deg2Rad(angle_deg);
  const double c = std::cos(a);
  const double s = std::sin(a);
  Descriptor d{};
  const auto& pattern = Pattern();
  for (int i = 0; i < 256; ++i) {
    const PatternPair& p = pattern[i];
    const int x1 = u + static_cast<int>(std::lround(c * p.x1 - s * p.y1));
    const int y1 = v + static_cast<int>(std::lround(s * p.x1 + c * p.y1));
    const int x2 = u + static_cast<int>(std::lround(c * p.x2 - s * p.y2));
    const int y2 = v + static_cast<int>(std::lround(s * p.x2 + c * p.y2));
    if (smooth(x1, y1) < smooth(x2, y2)) d[i / 64] |= (std::uint64_t{1} << (i % 64));
  }
  return d;
}

bool ResponseOrder(const Keypoint& a, const Keypoint& b) {
  if (a.response != b.response) return a.response > b.response;
  if (a.v != b.v) return a.v < b.v;
  return a.u < b.u;
}

}  // namespace

std::vector<Keypoint> DetectKeypoints(const GrayImage& gray, const DetectorParams& params) {
  const int w = gray.width();
  const int h = gray.height();
  if (w < 32 || h < 32) throw std::invalid_argument("detect: image must be at least 32x32");
  if (params.target_count <= 0) return {};

  // Candidate corners with their Harris scores; zero means "not a corner".
  Image<double> score(w, h, 0.0);
  const int lo = kPatchMargin;
  for (int v = lo; v < h - lo; ++v) {
    for (int u = lo; u < w - lo; ++u) {
      if (!SegmentTest(gray, u, v, params.fast_threshold)) continue;
      const double r = HarrisResponse(gray, u, v, params.harris_block, params.harris_k);
      if (r > 0.0) score(u, v) = r;
    }
  }

  const int cells = params.grid_cols * params.grid_rows;
  const int per_cell = (params.target_count + cells - 1) / cells;
  std::vector<std::vector<Keypoint>> buckets(static_cast<std::size_t>(cells));
  for (int v = lo; v < h - lo; ++v) {
    for (int u = lo; u < w - lo; ++u) {
      const double r = score(u, v);
      if (r <= 0.0) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1 && is_max; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          const double n = score(u + du, v + dv);
          // Ties go to the neighbour that comes first in raster order.
          if (n > r || (n == r && (dv < 0 || (dv == 0 && du < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      const int cx = std::min(u * params.grid_cols / w, params.grid_cols - 1);
      const int cy = std::min(v * params.grid_rows / h, params.grid_rows - 1);
      Keypoint kp;
      kp.u = u;
      kp.v = v;
      kp.response = r;
      buckets[static_cast<std::size_t>(cy * params.grid_cols + cx)].push_back(kp);
    }
  }

  std::vector<Keypoint> out;
  for (auto& bucket : buckets) {
    std::sort(bucket.begin(), bucket.end(), ResponseOrder);
    if (static_cast<int>(bucket.size()) > per_cell) bucket.resize(static_cast<std::size_t>(per_cell));
    out.insert(out.end(), bucket.begin(), bucket.end());
  }
  std::sort(out.begin(), out.end(), ResponseOrder);
  if (static_cast<int>(out.size()) > params.target_count) {
    out.resize(static_cast<std::size_t>(params.target_count));
  }

  const GrayImage smooth = Smooth(gray);
  for (Keypoint& kp : out) {
    const int u = static_cast<int>(kp.u);
    const int v = static_cast<int>(kp.v);
    kp.angle_deg = Orientation(gray, u, v);
    kp.descriptor = Describe(smooth, u, v, kp.angle_deg);
  }
  return out;
}

std::vector<Match> MatchKeypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                  int max_hamming, double ratio) {
  constexpr int kNone = std::numeric_limits<int>::max();
  struct Best {
    int index = -1;
    int best = kNone;
    int second = kNone;
  };
  std::vector<Best> best_a(a.size());
  std::vector<Best> best_b(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = Hamming(a[i].descriptor, b[j].descriptor);
      auto update = [d](Best& s, int idx) {
        if (d < s.best) {
          s.second = s.best;
          s.best = d;
          s.index = idx;
        } else if (d < s.second) {
          s.second = d;
        }
      };
      update(best_a[i], static_cast<int>(j));
      update(best_b[j], static_cast<int>(i));
    }
  }
  auto passes_ratio = [ratio](const Best& s) {
    return s.second == kNone || s.best < ratio * s.second;
  };
  std::vector<Match> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Best& sa = best_a[i];
    if (sa.index < 0 || sa.best > max_hamming) continue;
    const Best& sb = best_b[static_cast<std::size_t>(sa.index)];
    if (sb.index != static_cast<int>(i)) continue;
    if (!passes_ratio(sa) || !passes_ratio(sb)) continue;
    out.push_back({static_cast<int>(i), sa.index, sa.best});
  }
  return out;
}

std::vector<Keypoint> FilterKeypointsByMask(const std::vector<Keypoint>& keypoints,
                                            const Mask& mask, int contour_margin) {
  const int r = std::max(contour_margin, 0);
  const int r2 = r * r;
  std::vector<Keypoint> out;
  out.reserve(keypoints.size());
  for (const Keypoint& kp : keypoints) {
    const int u = static_cast<int>(std::lround(kp.u));
    const int v = static_cast<int>(std::lround(kp.v));
    if (!mask.Contains(u, v)) {
      throw std::invalid_argument("filter_keypoints_by_mask: keypoint outside the mask; size mismatch");
    }
    bool near = false;
    for (int dv = -r; dv <= r && !near; ++dv) {
      for (int du = -r; du <= r; ++du) {
        if (du * du + dv * dv > r2) continue;
        if (mask.Contains(u + du, v + dv) && mask(u + du, v + dv)) {
          near = true;
          break;
        }
      }
    }
    if (!near) out.push_back(kp);
  }
  return out;
}

KeypointIndex::KeypointIndex(const std::vector<Keypoint>& keypoints, int width, int height, int cell)
    : keypoints_(&keypoints),
      cell_(cell),
      cols_((width + cell - 1) / cell),
      rows_((height + cell - 1) / cell),
      buckets_(static_cast<std::size_t>(cols_ * rows_)) {
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(keypoints[i].u) / cell_, 0, cols_ - 1);
    const int cy = std::clamp(static_cast<int>(keypoints[i].v) / cell_, 0, rows_ - 1);
    buckets_[static_cast<std::size_t>(cy * cols_ + cx)].push_back(static_cast<int>(i));
  }
}

std::vector<int> KeypointIndex::Query(double u, double v, double radius) const {
  std::vector<int> out;
  const int x0 = std::max(static_cast<int>(std::floor((u - radius) / cell_)), 0);
  const int x1 = std::min(static_cast<int>(std::floor((u + radius) / cell_)), cols_ - 1);
  const int y0 = std::max(static_cast<int>(std::floor((v - radius) / cell_)), 0);
  const int y1 = std::min(static_cast<int>(std::floor((v + radius) / cell_)), rows_ - 1);
  const double r2 = radius * radius;
  for (int cy = y0; cy <= y1; ++cy) {
    for (int cx = x0; cx <= x1; ++cx) {
      for (int idx : buckets_[static_cast<std::size_t>(cy * cols_ + cx)]) {
        const Keypoint& kp = (*keypoints_)[static_cast<std::size_t>(idx)];
        const double du = kp.u - u;
        const double dv = kp.v - v;
        if (du * du + dv * dv <= r2) out.push_back(idx);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mvdyn
