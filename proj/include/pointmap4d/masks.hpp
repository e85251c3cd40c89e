#pragma once

#include "pointmap4d/geom.hpp"

namespace pm4d {

template <class T>
struct Sampled {
  T value{};
  bool valid = false;
};

// Bilinear interpolation of a flow field at a continuous location q
// (pixel-center coordinates). Invalid when q falls outside
// [0, W-1] x [0, H-1] or any contributing neighbor is invalid.
Sampled<Eigen::Vector2d> sample_bilinear(const FlowField& field, const Eigen::Vector2d& q);

// Same interpolation over a pointmap; used to evaluate ground truth at
// flow endpoints.
Sampled<Eigen::Vector3d> sample_bilinear(const Pointmap& pm, const Eigen::Vector2d& q);

// Forward-backward cycle check: a source pixel is occluded when
// ||p + f(p) + b(p + f(p)) - p|| > t. Pixels with invalid forward flow or
// an invalid backward sample are marked occluded.
BinaryMask occlusion_mask(const FlowField& f, const FlowField& b, double t);

// Pixels whose observed flow deviates from the camera-induced flow by
// more than tau. Pixels invalid in either field are treated as static.
BinaryMask dynamic_mask(const FlowField& f, const FlowField& f_cam, double tau);

}  // namespace pm4d
