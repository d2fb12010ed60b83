#include "mvdyn/image.hpp"

#include <string>

namespace mvdyn {

GrayImage ToGray(const RgbImage& rgb) {
  GrayImage gray(rgb.width(), rgb.height());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const Rgb& p = rgb[i];
    gray[i] = static_cast<std::uint8_t>((299 * p.r + 587 * p.g + 114 * p.b + 500) / 1000);
  }
  return gray;
}

Mask Dilate(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const int r2 = radius * radius;
  Mask out(mask.width(), mask.height(), 0);
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      if (!mask(u, v)) continue;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          if (du * du + dv * dv > r2) continue;
          if (out.Contains(u + du, v + dv)) out(u + du, v + dv) = 1;
        }
      }
    }
  }
  return out;
}

Mask MaskUnion(const Mask& a, const Mask& b) {
  RequireSameSize(a, b, "mask union");
  Mask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

std::size_t CountSet(const Mask& mask) {
  std::size_t n = 0;
  for (auto p : mask.pixels()) n += p ? 1 : 0;
  return n;
}

}  // namespace mvdyn
