#include "pointmap4d/geom.hpp"

#include <cmath>

namespace pm4d {

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

Eigen::Matrix3d Intrinsics::inverse() const {
  Eigen::Matrix3d Ki;
  Ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return Ki;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = R;
  m.block<3, 1>(0, 3) = t;
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  return {m.block<3, 3>(0, 0), m.block<3, 1>(0, 3)};
}

bool Pose::is_rigid(double tol) const {
  const Eigen::Matrix3d gram = R.transpose() * R;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

size_t BinaryMask::count() const {
  size_t n = 0;
  for (uint8_t b : bits.raw()) n += (b != 0);
  return n;
}

Eigen::Vector4d homogenize(const Eigen::Vector3d& p) {
  return {p.x(), p.y(), p.z(), 1.0};
}

Eigen::Vector2d project(const Eigen::Vector3d& v) {
  if (std::abs(v.z()) <= kEpsDepth) {
    throw NearZeroDepth("project: point at or behind the camera plane (|z| <= 1e-9)");
  }
  return {v.x() / v.z(), v.y() / v.z()};
}

Pointmap unproject_depth(const DepthMap& depth, const Intrinsics& K, FrameId frame) {
  Pointmap out(depth.width(), depth.height(), frame);
  const Eigen::Matrix3d Ki = K.inverse();
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      const double d = depth.values(x, y);
      out.points(x, y) = d * (Ki * Eigen::Vector3d(x, y, 1.0));
      out.valid(x, y) = 1;
    }
  }
  return out;
}

Pointmap pointmap_in_frame(const DepthMap& depth, const Intrinsics& K, const Pose& P_src,
                           const Pose& P_dst, FrameId frame) {
  Pointmap out = unproject_depth(depth, K, frame);
  const Pose rel = P_dst * P_src.inverse();
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (out.valid(x, y)) out.points(x, y) = rel.apply(out.points(x, y));
    }
  }
  return out;
}

FlowField camera_induced_flow(const DepthMap& depth, const Intrinsics& K,
                              const Eigen::Matrix3d& R, const Eigen::Vector3d& T) {
  FlowField out(depth.width(), depth.height());
  const Eigen::Matrix3d Kmat = K.matrix();
  const Eigen::Matrix3d warp = Kmat * R * K.inverse();
  const Eigen::Vector3d offset = Kmat * T;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      const Eigen::Vector3d p(x, y, 1.0);
      const Eigen::Vector3d q = depth.values(x, y) * (warp * p) + offset;
      if (std::abs(q.z()) <= kEpsDepth) continue;  // stays invalid
      out.vectors(x, y) = Eigen::Vector2d(q.x() / q.z(), q.y() / q.z()) - Eigen::Vector2d(x, y);
      out.valid(x, y) = 1;
    }
  }
  return out;
}

Pointmap transform_pointmap(const Pointmap& pm, const Pose& g, FrameId frame) {
  Pointmap out = pm;
  out.frame = frame;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (out.valid(x, y)) out.points(x, y) = g.apply(out.points(x, y));
    }
  }
  return out;
}

}  // namespace pm4d
