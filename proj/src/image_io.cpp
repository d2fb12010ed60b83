#include "mvdyn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mvdyn/errors.hpp"

namespace mvdyn {
namespace {

cv::Mat Load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw InputError("image file not found: " + path.string());
  }
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError("cannot decode image: " + path.string());
  return m;
}

void Store(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) {
    throw InputError("cannot write image: " + path.string());
  }
}

}  // namespace

RgbImage ReadRgb(const std::filesystem::path& path) {
  cv::Mat m = Load(path);
  if (m.depth() != CV_8U || (m.channels() != 3 && m.channels() != 4 && m.channels() != 1)) {
    throw FormatError("expected an 8-bit color image: " + path.string());
  }
  RgbImage out(m.cols, m.rows);
  const int ch = m.channels();
  for (int v = 0; v < m.rows; ++v) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(v);
    for (int u = 0; u < m.cols; ++u) {
      const std::uint8_t* p = row + static_cast<std::ptrdiff_t>(u) * ch;
      out(u, v) = ch == 1 ? Rgb{p[0], p[0], p[0]} : Rgb{p[2], p[1], p[0]};
    }
  }
  return out;
}

void WriteRgb(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat m(image.height(), image.width(), CV_8UC3);
  for (int v = 0; v < image.height(); ++v) {
    auto* row = m.ptr<cv::Vec3b>(v);
    for (int u = 0; u < image.width(); ++u) {
      const Rgb& p = image(u, v);
      row[u] = cv::Vec3b(p.b, p.g, p.r);
    }
  }
  Store(path, m);
}

RawDepth ReadRawDepth(const std::filesystem::path& path) {
  cv::Mat m = Load(path);
  if (m.depth() != CV_16U || m.channels() != 1) {
    throw FormatError("depth must be a 16-bit single-channel PNG: " + path.string());
  }
  RawDepth out(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const auto* row = m.ptr<std::uint16_t>(v);
    for (int u = 0; u < m.cols; ++u) out(u, v) = row[u];
  }
  return out;
}

void WriteRawDepth(const std::filesystem::path& path, const RawDepth& raw) {
  cv::Mat m(raw.height(), raw.width(), CV_16UC1);
  for (int v = 0; v < raw.height(); ++v) {
    auto* row = m.ptr<std::uint16_t>(v);
    for (int u = 0; u < raw.width(); ++u) row[u] = raw(u, v);
  }
  Store(path, m);
}

DepthMap DepthFromRaw(const RawDepth& raw, double scale) {
  DepthMap out(raw.width(), raw.height(), 0.0f);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = raw[i] == 0 ? 0.0f : static_cast<float>(raw[i] / scale);
  }
  return out;
}

RawDepth RawFromDepth(const DepthMap& depth, double scale) {
  RawDepth out(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double d = depth[i];
    if (!(d > 0.0) || !std::isfinite(d)) continue;
    const double raw = std::round(d * scale);
    out[i] = static_cast<std::uint16_t>(std::min(raw, 65535.0));
  }
  return out;
}

DepthMap ReadDepth(const std::filesystem::path& path, double scale) {
  return DepthFromRaw(ReadRawDepth(path), scale);
}

void WriteDepth(const std::filesystem::path& path, const DepthMap& depth, double scale) {
  WriteRawDepth(path, RawFromDepth(depth, scale));
}

Mask ReadMask(const std::filesystem::path& path) {
  cv::Mat m = Load(path);
  if (m.depth() != CV_8U || m.channels() != 1) {
    throw FormatError("mask must be an 8-bit grayscale PNG: " + path.string());
  }
  Mask out(m.cols, m.rows, 0);
  for (int v = 0; v < m.rows; ++v) {
    const auto* row = m.ptr<std::uint8_t>(v);
    for (int u = 0; u < m.cols; ++u) out(u, v) = row[u] ? 1 : 0;
  }
  return out;
}

void WriteMask(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int v = 0; v < mask.height(); ++v) {
    auto* row = m.ptr<std::uint8_t>(v);
    for (int u = 0; u < mask.width(); ++u) row[u] = mask(u, v) ? 255 : 0;
  }
  Store(path, m);
}

}  // namespace mvdyn
