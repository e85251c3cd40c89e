#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "pointmap4d/geom.hpp"
#include "pointmap4d/losses.hpp"

namespace pm4d {

// Rigid per-object motion between time 1 and time 2, in world
// coordinates: x2 = R * x1 + t.
struct RigidMotion {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  bool is_identity() const {
    return (R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0 &&
           t.cwiseAbs().maxCoeff() == 0.0;
  }
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
  Eigen::Vector3d apply_inverse(const Eigen::Vector3d& p) const {
    return R.transpose() * (p - t);
  }
};

// Bounded rectangle: point is the center, u_axis/v_axis the in-plane
// directions (unit, orthogonal to the unit normal), half_u/half_v the
// half-extents along them.
struct PlaneRect {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
  Eigen::Vector3d u_axis = Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d v_axis = Eigen::Vector3d(0, 1, 0);
  double half_u = 1.0;
  double half_v = 1.0;
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

struct ScenePrimitive {
  std::variant<PlaneRect, Sphere> shape;
  int object_id = 0;
  RigidMotion motion;
};

struct SceneConfig {
  Intrinsics K;
  Pose P1, P2;  // world-to-camera at times 1 and 2
  int width = 0;
  int height = 0;
  std::vector<ScenePrimitive> primitives;
  uint64_t seed = 0;
};

// Throws ParseError naming the offending field when a config violates its
// invariants (no primitives, tiny image, bad radius, non-unit normal...).
void validate(const SceneConfig& config);

struct RenderedPair {
  DepthMap D1, D2;
  Grid<int32_t> id1, id2;  // object id per pixel, -1 on miss
  FlowField f, b;          // exact analytic flows
  BinaryMask gtMocc1, gtMocc2;
  BinaryMask gtMdyn1, gtMdyn2;
  SupervisionBundle bundle;
};

// Nearest analytic ray-primitive intersection per pixel for the camera at
// the given time (1 or 2); misses stay invalid with id -1.
std::pair<DepthMap, Grid<int32_t>> raycast(const SceneConfig& config, const Pose& camera,
                                           int time);

struct FlowRender {
  FlowField f, b;
  BinaryMask occ1, occ2;
};

// Exact forward/backward flows plus ground-truth occlusion masks: a pixel
// is occluded when its advected point fails the other view's depth test
// or leaves the frame.
FlowRender exact_flow(const SceneConfig& config);

// Ground-truth 4D pointmap: src_view's hit points moved along their
// object motion to dst_view's time, expressed in dst_view's camera frame.
// For src_view == dst_view this is the view's own unprojection.
Pointmap gt_4d_pointmap(const SceneConfig& config, int src_view, int dst_view);

// Renders both views, computes flows, masks, the four GT pointmaps and a
// ready-to-use supervision bundle. Throws EmptyScene when nothing is
// visible in either view.
RenderedPair make_pair(const SceneConfig& config);

// --- scene presets (seeded, deterministic) ---

// Slanted ground plane plus one moving sphere; general-purpose dynamic
// scene with real occlusion.
SceneConfig demo_scene(uint64_t seed, int width, int height);

// Static backdrop card plus a fronto-parallel moving card under
// axis-aligned cameras. Flow endpoints interpolate exactly on this
// geometry, so losses vanish identically at the ground truth.
SceneConfig flat_mover_scene(uint64_t seed, int width, int height, bool camera_motion = true);

// Static-only variant of the demo scene (plane + spheres, no motion).
SceneConfig static_scene(uint64_t seed, int width, int height);

}  // namespace pm4d
