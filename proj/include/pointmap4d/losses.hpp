#pragma once

#include <utility>
#include <vector>

#include "pointmap4d/geom.hpp"

namespace pm4d {

// Scales at or below this are degenerate for normalization purposes.
inline constexpr double kEpsScale = 1e-12;

// Predicted pointmaps and confidences for both pass directions of an
// image pair: X11/X21 in camera 1's frame, X22/X12 in camera 2's.
struct PairPrediction {
  Pointmap X11, X21, X22, X12;
  ConfidenceMap C11, C21, C22, C12;
};

// Everything needed to evaluate the supervision of one image pair.
// Ground-truth pointmaps are the dynamically aligned targets (view 2's
// content carried back to time 1 for gtX21, and view 1's carried forward
// for gtX12). valid1/valid2 are the per-view sets where ground truth is
// defined.
struct SupervisionBundle {
  Pointmap gtX11, gtX21, gtX22, gtX12;
  FlowField f, b;
  BinaryMask Mocc1, Mocc2;
  BinaryMask Mdyn1, Mdyn2;
  BinaryMask valid1, valid2;
  double alpha = 0.2;  // weight of the -log C confidence regularizer
};

struct LossBreakdown {
  double static_total = 0.0;
  double dyn_total = 0.0;
  double total = 0.0;
  double z1 = 0.0, zbar1 = 0.0;  // prediction / GT scales, primary pair
  double z2 = 0.0, zbar2 = 0.0;  // swapped pair (0 when unused)
  // Per-pixel diagnostics. regr1/regr2 hold the masked regression
  // residuals, dyn2/dyn1 the dynamic alignment residuals of the first and
  // second loss terms. *_active marks the pixels that contributed.
  Grid<double> regr1, regr2, dyn2, dyn1;
  BinaryMask static1_active, static2_active, dyn2_active, dyn1_active;
};

struct LossGradients {
  Grid<Eigen::Vector3d> dX11, dX21, dX22, dX12;
  Grid<double> dC11, dC21, dC22, dC12;
};

struct FitResult {
  PairPrediction pred;
  std::vector<double> trace;  // loss value per step (before the update)
};

// Mean Euclidean norm over the valid pixels of both maps. Throws
// EmptyValidSet when neither map has a valid pixel.
double norm_scale(const Pointmap& a, const Pointmap& b);

// Per-pixel scale-normalized regression residuals, view 2 zeroed on
// dynamic pixels. Returned grids are NaN outside the supervised sets.
std::pair<Grid<double>, Grid<double>> regr_loss_masked(const PairPrediction& pred,
                                                       const SupervisionBundle& sup);

// Confidence-weighted static loss (residuals from regr_loss_masked plus
// the -alpha log C regularizer; view-2 dynamic pixels excluded entirely).
double static_loss(const PairPrediction& pred, const SupervisionBundle& sup, double alpha,
                   LossBreakdown* diag = nullptr);

// Flow-anchored alignment loss over dynamic, non-occluded pixels in both
// pass directions.
double dynamic_alignment_loss(const PairPrediction& pred, const SupervisionBundle& sup,
                              LossBreakdown* diag = nullptr);

LossBreakdown total_loss(const PairPrediction& pred, const SupervisionBundle& sup,
                         double alpha);

// Mean binary cross-entropy between sigmoid(logits) and a ground-truth
// mask over all pixels; probabilities clamped to [1e-12, 1 - 1e-12].
// Kept separate from the total loss.
double mask_bce_loss(const Grid<double>& logits, const BinaryMask& gt);

// Analytic gradient of the total loss with respect to every predicted
// pointmap coordinate and confidence value, including the dependence of
// the normalization scales on the prediction.
LossGradients loss_gradients(const PairPrediction& pred, const SupervisionBundle& sup,
                             double alpha);

// Fixed-step gradient descent on the total loss over pointmaps and
// confidences. Confidences are optimized through c = 1 + exp(w) so C >= 1
// is maintained. Throws NonFiniteLoss (with the partial trace attached to
// the exception message) when the loss stops being finite.
FitResult fit_pointmaps(const SupervisionBundle& sup, const PairPrediction& init, int steps,
                        double step_size);

// Supervision target built from files rather than an oracle: dynamic
// non-occluded pixels take the flow-warped sample of gt_src, static
// pixels the rigid map, and dynamic pixels without a usable sample
// become invalid.
Pointmap flow_aligned_pointmap(const Pointmap& gt_src, const FlowField& flow_to_src,
                               const Pointmap& rigid, const BinaryMask& mdyn,
                               const BinaryMask& mocc);

}  // namespace pm4d
