#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pointmap4d/grid.hpp"

namespace pm4d {

// Depth guard for the pinhole projection. Points with |z| at or below this
// are treated as lying on/behind the camera plane.
inline constexpr double kEpsDepth = 1e-9;

// Pinhole intrinsics, zero skew. Units are pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse() const;
  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

// Rigid transform stored as (R, t), by default world-to-camera.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  // Composition: (a * b).apply(p) == a.apply(b.apply(p)).
  Pose operator*(const Pose& other) const { return {R * other.R, R * other.t + t}; }

  Eigen::Matrix4d matrix() const;
  static Pose from_matrix(const Eigen::Matrix4d& m);

  // RᵀR = I and det(R) = 1 within tol.
  bool is_rigid(double tol = 1e-9) const;
};

// Identifies the (camera, time) coordinate frame a pointmap lives in.
struct FrameId {
  int camera = 0;
  int time = 0;
  bool operator==(const FrameId&) const = default;
};

struct DepthMap {
  Grid<double> values;
  Grid<uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h) : values(w, h, 0.0), valid(w, h, 0) {}
  int width() const { return values.width(); }
  int height() const { return values.height(); }
};

// Per-pixel 3D coordinates of a view expressed in the frame named by
// `frame` (a chosen camera at a chosen time).
struct Pointmap {
  Grid<Eigen::Vector3d> points;
  Grid<uint8_t> valid;
  FrameId frame;

  Pointmap() = default;
  Pointmap(int w, int h, FrameId f = {})
      : points(w, h, Eigen::Vector3d::Zero()), valid(w, h, 0), frame(f) {}
  int width() const { return points.width(); }
  int height() const { return points.height(); }
};

struct FlowField {
  Grid<Eigen::Vector2d> vectors;
  Grid<uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h) : vectors(w, h, Eigen::Vector2d::Zero()), valid(w, h, 0) {}
  int width() const { return vectors.width(); }
  int height() const { return vectors.height(); }
};

struct BinaryMask {
  Grid<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, uint8_t fill = 0) : bits(w, h, fill) {}
  int width() const { return bits.width(); }
  int height() const { return bits.height(); }
  size_t count() const;
};

struct ConfidenceMap {
  Grid<double> values;

  ConfidenceMap() = default;
  ConfidenceMap(int w, int h, double fill = 1.0) : values(w, h, fill) {}
  int width() const { return values.width(); }
  int height() const { return values.height(); }
};

// (x, y, z) -> (x, y, z, 1).
Eigen::Vector4d homogenize(const Eigen::Vector3d& p);

// (x, y, z) -> (x/z, y/z). Throws NearZeroDepth when |z| <= kEpsDepth.
Eigen::Vector2d project(const Eigen::Vector3d& v);

// Lift a depth map to 3D in the source camera's own frame:
// pixel (u, v) with depth d maps to d * K^-1 * (u, v, 1).
Pointmap unproject_depth(const DepthMap& depth, const Intrinsics& K, FrameId frame = {});

// Ground-truth pointmap of the source view expressed in the destination
// camera frame: P_dst * P_src^-1 applied to the unprojection. The frame
// tag names the destination camera at the source view's time.
Pointmap pointmap_in_frame(const DepthMap& depth, const Intrinsics& K, const Pose& P_src,
                           const Pose& P_dst, FrameId frame = {});

// Flow a static scene would induce under relative camera motion (R, T)
// from source to target: pi(D*K*R*K^-1*p + K*T) - p per pixel. Pixels
// whose transformed point lands at/behind the target camera plane are
// marked invalid rather than aborting the map.
FlowField camera_induced_flow(const DepthMap& depth, const Intrinsics& K,
                              const Eigen::Matrix3d& R, const Eigen::Vector3d& T);

// Apply a rigid transform to every valid point of a pointmap.
Pointmap transform_pointmap(const Pointmap& pm, const Pose& g, FrameId frame = {});

}  // namespace pm4d
