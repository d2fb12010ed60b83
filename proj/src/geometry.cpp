#include "mvdyn/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mvdyn {
namespace {

constexpr double kTaylorAngle = 1e-8;
// Below this angle the V-matrix coefficients switch to their series
// expansions; the closed forms lose digits to cancellation there.
constexpr double kSeriesAngle = 1e-4;

Eigen::Quaterniond Normalized(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

// Coefficients (a, b) of V = I + a*W + b*W^2 with W = skew(omega).
void LeftJacobianCoefficients(double theta, double* a, double* b) {
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    *a = 0.5 - t2 / 24.0;
    *b = 1.0 / 6.0 - t2 / 120.0;
    return;
  }
  const double t2 = theta * theta;
  *a = (1.0 - std::cos(theta)) / t2;
  *b = (theta - std::sin(theta)) / (t2 * theta);
}

}  // namespace

Pose::Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : rotation_(Normalized(rotation)), translation_(translation) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(Normalized(Eigen::Quaterniond(rotation))), translation_(translation) {}

Eigen::Matrix4d Pose::Matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = RotationMatrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

Pose Pose::Inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Pose(inv, -(inv * translation_));
}

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond ExpSO3(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < kTaylorAngle) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Eigen::Vector3d axis = omega / theta;
  const double s = std::sin(half);
  return Eigen::Quaterniond(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Eigen::Vector3d LogSO3(const Eigen::Quaterniond& q_in) {
  const Eigen::Quaterniond q = Normalized(q_in);
  const Eigen::Vector3d v = q.vec();
  const double n = v.norm();
  if (n < kTaylorAngle) {
    // atan2(n, w) / n -> 1 / w as n -> 0.
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return theta * v / n;
}

Pose Pose::Exp(const Vector6d& twist) {
  const Eigen::Vector3d rho = twist.head<3>();
  const Eigen::Vector3d omega = twist.tail<3>();
  const double theta = omega.norm();
  double a = 0.0;
  double b = 0.0;
  LeftJacobianCoefficients(theta, &a, &b);
  const Eigen::Matrix3d w = Skew(omega);
  const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + a * w + b * w * w;
  return Pose(ExpSO3(omega), v * rho);
}

Vector6d Pose::Log() const {
  const Eigen::Vector3d omega = LogSO3(rotation_);
  const double theta = omega.norm();
  const Eigen::Matrix3d w = Skew(omega);
  double c = 0.0;
  if (theta < kSeriesAngle) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * w + c * w * w;
  Vector6d out;
  out.head<3>() = v_inv * translation_;
  out.tail<3>() = omega;
  return out;
}

double RotationAngle(const Eigen::Quaterniond& q) {
  const Eigen::Quaterniond n = Normalized(q);
  return 2.0 * std::atan2(n.vec().norm(), n.w());
}

double RelativeRotationAngle(const Pose& a, const Pose& b) {
  return RotationAngle(a.rotation().conjugate() * b.rotation());
}

Pose Interpolate(const Pose& a, const Pose& b, double s) {
  return Pose(a.rotation().slerp(s, b.rotation()),
              (1.0 - s) * a.translation() + s * b.translation());
}

void Intrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

std::optional<PixelObs> Project(const Point3& p, const Intrinsics& k) {
  if (!(p.z() > 1e-6)) return std::nullopt;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) return std::nullopt;
  return PixelObs{u, v, p.z()};
}

Eigen::Vector2d ProjectUnbounded(const Point3& p, const Intrinsics& k) {
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Point3 Backproject(double u, double v, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("backproject: depth must be positive, got " +
                                std::to_string(depth));
  }
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

Point3 Backproject(const PixelObs& px, const Intrinsics& k) {
  if (!px.depth) throw std::invalid_argument("backproject: pixel has no depth");
  return Backproject(px.u, px.v, *px.depth, k);
}

double ParallaxAngleDeg(const Point3& x, const Point3& c1, const Point3& c2) {
  const Eigen::Vector3d r1 = c1 - x;
  const Eigen::Vector3d r2 = c2 - x;
  const double n1 = r1.norm();
  const double n2 = r2.norm();
  if (n1 == 0.0 || n2 == 0.0) {
    throw std::invalid_argument("parallax: degenerate ray (point coincides with a camera center)");
  }
  // atan2 form is accurate for both tiny and near-180 degree angles.
  const double angle = std::atan2(r1.cross(r2).norm(), r1.dot(r2));
  return Rad2Deg(angle);
}

Eigen::Matrix<double, 2, 6> ProjectionJacobian(const Pose& world_to_camera,
                                               const Point3& point_world,
                                               const Intrinsics& k) {
  const Point3 p = world_to_camera * point_world;
  const double inv_z = 1.0 / p.z();
  const double inv_z2 = inv_z * inv_z;
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << k.fx * inv_z, 0.0, -k.fx * p.x() * inv_z2,
            0.0, k.fy * inv_z, -k.fy * p.y() * inv_z2;
  Eigen::Matrix<double, 3, 6> d_point;
  d_point.leftCols<3>() = Eigen::Matrix3d::Identity();
  d_point.rightCols<3>() = -Skew(p);
  return d_proj * d_point;
}

}  // namespace mvdyn
