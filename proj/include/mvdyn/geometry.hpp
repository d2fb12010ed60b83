#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mvdyn {

using Point3 = Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Rigid-body transform stored as a unit quaternion (w,x,y,z) and a translation.
///
/// Camera poses are always camera-to-world: applying a camera pose to a point
/// expressed in the camera frame yields the same point in the world frame.
/// Twists are ordered (rho, omega): translational part first, rotation second.
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose Identity() { return Pose(); }
  static Pose Exp(const Vector6d& twist);

  Vector6d Log() const;
  Pose Inverse() const;

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix3d RotationMatrix() const { return rotation_.toRotationMatrix(); }
  Eigen::Matrix4d Matrix() const;

  Point3 operator*(const Point3& p) const { return rotation_ * p + translation_; }
  Pose operator*(const Pose& other) const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

inline Pose Compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose Inverse(const Pose& p) { return p.Inverse(); }
inline Pose Exp(const Vector6d& twist) { return Pose::Exp(twist); }
inline Vector6d Log(const Pose& p) { return p.Log(); }

/// Rotation angle of a unit quaternion in [0, pi].
double RotationAngle(const Eigen::Quaterniond& q);

/// Angle of the relative rotation between two poses, radians.
double RelativeRotationAngle(const Pose& a, const Pose& b);

/// Spherical interpolation of rotation, linear interpolation of translation.
Pose Interpolate(const Pose& a, const Pose& b, double s);

Eigen::Matrix3d Skew(const Eigen::Vector3d& v);

/// SO(3) exponential (Rodrigues) with a Taylor branch near zero.
Eigen::Quaterniond ExpSO3(const Eigen::Vector3d& omega);
Eigen::Vector3d LogSO3(const Eigen::Quaterniond& q);

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument when the camera model is not usable.
  void Validate() const;
};

struct PixelObs {
  double u = 0.0;
  double v = 0.0;
  std::optional<double> depth;
};

/// Pinhole projection of a camera-frame point. Returns std::nullopt (out of
/// view) when z <= 1e-6 or the pixel falls outside [0,width) x [0,height).
std::optional<PixelObs> Project(const Point3& p_camera, const Intrinsics& k);

/// Pinhole projection without the image-bounds check; z must be positive.
Eigen::Vector2d ProjectUnbounded(const Point3& p_camera, const Intrinsics& k);

/// Camera-frame point for a pixel with depth. Throws on non-positive depth.
Point3 Backproject(double u, double v, double depth, const Intrinsics& k);
Point3 Backproject(const PixelObs& px, const Intrinsics& k);

/// Angle in degrees at `x` between the rays towards `c1` and `c2`.
/// Throws std::invalid_argument if either ray has zero length.
double ParallaxAngleDeg(const Point3& x, const Point3& c1, const Point3& c2);

/// Jacobian of the pixel projection of `world_to_camera * point` with respect
/// to a left twist perturbation exp(delta) * world_to_camera, evaluated at
/// delta = 0. Rows are (u, v), columns follow the twist order (rho, omega).
Eigen::Matrix<double, 2, 6> ProjectionJacobian(const Pose& world_to_camera,
                                               const Point3& point_world,
                                               const Intrinsics& k);

constexpr double kPi = 3.14159265358979323846;
constexpr double Deg2Rad(double deg) { return deg * kPi / 180.0; }
constexpr double Rad2Deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace mvdyn
