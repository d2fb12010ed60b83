#pragma once

#include <cstdint>
#include <filesystem>

#include "mvdyn/image.hpp"

namespace mvdyn {

/// Raw units per meter of the TUM 16-bit depth encoding.
constexpr double kTumDepthScale = 5000.0;

using RawDepth = Image<std::uint16_t>;

RgbImage ReadRgb(const std::filesystem::path& path);
void WriteRgb(const std::filesystem::path& path, const RgbImage& image);

/// 16-bit single-channel PNG to meters (raw / scale); raw 0 stays invalid.
/// Throws FormatError for any other bit depth or channel count.
DepthMap ReadDepth(const std::filesystem::path& path, double scale = kTumDepthScale);
void WriteDepth(const std::filesystem::path& path, const DepthMap& depth,
                double scale = kTumDepthScale);

RawDepth ReadRawDepth(const std::filesystem::path& path);
void WriteRawDepth(const std::filesystem::path& path, const RawDepth& raw);

/// 8-bit grayscale mask; any nonzero value is set.
Mask ReadMask(const std::filesystem::path& path);
/// Written as 0 / 255.
void WriteMask(const std::filesystem::path& path, const Mask& mask);

DepthMap DepthFromRaw(const RawDepth& raw, double scale = kTumDepthScale);
RawDepth RawFromDepth(const DepthMap& depth, double scale = kTumDepthScale);

}  // namespace mvdyn
