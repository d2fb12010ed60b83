#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvdyn {

/// Dense row-major image with value semantics.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("image: negative size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  bool Contains(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }

  T& operator()(int u, int v) { return data_[Index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[Index(u, v)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  template <typename U>
  bool SameSize(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t Index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

using RgbImage = Image<Rgb>;
using GrayImage = Image<std::uint8_t>;
/// Depth in meters; 0 marks an invalid measurement.
using DepthMap = Image<float>;
/// Binary mask stored one byte per pixel: 0 = false, 1 = true.
using Mask = Image<std::uint8_t>;

GrayImage ToGray(const RgbImage& rgb);

/// Pixels within Euclidean distance `radius` of any set pixel.
Mask Dilate(const Mask& mask, int radius);

Mask MaskUnion(const Mask& a, const Mask& b);
std::size_t CountSet(const Mask& mask);

template <typename T, typename U>
void RequireSameSize(const Image<T>& a, const Image<U>& b, const char* what) {
  if (!a.SameSize(b)) {
    throw std::invalid_argument(std::string(what) + ": image size mismatch");
  }
}

}  // namespace mvdyn
