#include "pointmap4d/masks.hpp"

#include <cmath>

namespace pm4d {

namespace {

template <class T>
Sampled<T> sample_impl(const Grid<T>& values, const Grid<uint8_t>& valid,
                       const Eigen::Vector2d& q) {
  const int w = values.width();
  const int h = values.height();
  // NaN coordinates fail these comparisons and fall through to invalid.
  if (!(q.x() >= 0.0 && q.x() <= w - 1 && q.y() >= 0.0 && q.y() <= h - 1)) {
    return {T{}, false};
  }
  const int x0 = static_cast<int>(std::floor(q.x()));
  const int y0 = static_cast<int>(std::floor(q.y()));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double wx = q.x() - x0;
  const double wy = q.y() - y0;
  if (!valid(x0, y0) || !valid(x1, y0) || !valid(x0, y1) || !valid(x1, y1)) {
    return {T{}, false};
  }
  T v = (1.0 - wx) * (1.0 - wy) * values(x0, y0) + wx * (1.0 - wy) * values(x1, y0) +
        (1.0 - wx) * wy * values(x0, y1) + wx * wy * values(x1, y1);
  return {v, true};
}

}  // namespace

Sampled<Eigen::Vector2d> sample_bilinear(const FlowField& field, const Eigen::Vector2d& q) {
  return sample_impl(field.vectors, field.valid, q);
}

Sampled<Eigen::Vector3d> sample_bilinear(const Pointmap& pm, const Eigen::Vector2d& q) {
  return sample_impl(pm.points, pm.valid, q);
}

BinaryMask occlusion_mask(const FlowField& f, const FlowField& b, double t) {
  require_same_size(f.vectors, b.vectors, "occlusion_mask");
  BinaryMask mask(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid(x, y)) {
        mask.bits(x, y) = 1;  // no cycle evidence: treat as occluded
        continue;
      }
      const Eigen::Vector2d p1(x, y);
      const Eigen::Vector2d p2 = p1 + f.vectors(x, y);
      const auto back = sample_bilinear(b, p2);
      if (!back.valid) {
        mask.bits(x, y) = 1;
        continue;
      }
      const Eigen::Vector2d p1_cycled = p2 + back.value;
      mask.bits(x, y) = (p1_cycled - p1).norm() > t ? 1 : 0;
    }
  }
  return mask;
}

BinaryMask dynamic_mask(const FlowField& f, const FlowField& f_cam, double tau) {
  require_same_size(f.vectors, f_cam.vectors, "dynamic_mask");
  BinaryMask mask(f.width(), f.height());
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid(x, y) || !f_cam.valid(x, y)) continue;  // treated as static
      mask.bits(x, y) = (f_cam.vectors(x, y) - f.vectors(x, y)).norm() > tau ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace pm4d
