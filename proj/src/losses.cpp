#include "pointmap4d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pointmap4d/masks.hpp"

namespace pm4d {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Pixel sets the loss terms run over. Residual domains intersect the
// bundle's valid sets with the GT maps' own validity. Normalization
// domains additionally drop occluded-dynamic pixels, which receive no
// residual term in either view direction and must stay out of the loss
// entirely.
struct Domains {
  Grid<uint8_t> d11, d21, d22, d12;  // residual domains per map
  Grid<uint8_t> n11, n21, n22, n12;  // normalization domains per map
  size_t n1 = 0;                     // |n11| + |n21|
  size_t n2 = 0;                     // |n22| + |n12|
};

Grid<uint8_t> intersect(const Grid<uint8_t>& a, const Grid<uint8_t>& b) {
  require_same_size(a, b, "losses");
  Grid<uint8_t> out(a.width(), a.height());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

Grid<uint8_t> subtract_occluded_dynamic(const Grid<uint8_t>& domain, const BinaryMask& mdyn,
                                        const BinaryMask& mocc) {
  Grid<uint8_t> out = domain;
  for (size_t i = 0; i < out.size(); ++i) {
    if (mdyn.bits[i] && mocc.bits[i]) out[i] = 0;
  }
  return out;
}

size_t count_set(const Grid<uint8_t>& g) {
  size_t n = 0;
  for (uint8_t b : g.raw()) n += (b != 0);
  return n;
}

Domains make_domains(const SupervisionBundle& sup) {
  Domains dom;
  dom.d11 = intersect(sup.valid1.bits, sup.gtX11.valid);
  dom.d21 = intersect(sup.valid2.bits, sup.gtX21.valid);
  dom.d22 = intersect(sup.valid2.bits, sup.gtX22.valid);
  dom.d12 = intersect(sup.valid1.bits, sup.gtX12.valid);
  dom.n11 = dom.d11;  // view-1 regression is ungated
  dom.n21 = subtract_occluded_dynamic(dom.d21, sup.Mdyn2, sup.Mocc2);
  dom.n22 = subtract_occluded_dynamic(dom.d22, sup.Mdyn2, sup.Mocc2);
  dom.n12 = subtract_occluded_dynamic(dom.d12, sup.Mdyn1, sup.Mocc1);
  dom.n1 = count_set(dom.n11) + count_set(dom.n21);
  dom.n2 = count_set(dom.n22) + count_set(dom.n12);
  return dom;
}

double masked_norm_mean(const Pointmap& a, const Grid<uint8_t>& ma, const Pointmap& b,
                        const Grid<uint8_t>& mb, size_t count) {
  double sum = 0.0;
  for (size_t i = 0; i < ma.points.size(); ++i) {
    if (ma[i]) sum += a.points[i].norm();
  }
  for (size_t i = 0; i < mb.points.size(); ++i) {
    if (mb[i]) sum += b.points[i].norm();
  }
  return sum / static_cast<double>(count);
}

struct Scales {
  double z1 = 0.0, zbar1 = 0.0;
  double z2 = 0.0, zbar2 = 0.0;  // zero until computed
  bool swapped_ready = false;
};

Scales primary_scales(const PairPrediction& pred, const SupervisionBundle& sup,
                      const Domains& dom) {
  if (dom.n1 == 0) throw EmptyValidSet("losses: no valid pixel in the primary pair");
  Scales s;
  s.z1 = masked_norm_mean(pred.X11, dom.n11, pred.X21, dom.n21, dom.n1);
  s.zbar1 = masked_norm_mean(sup.gtX11, dom.n11, sup.gtX21, dom.n21, dom.n1);
  if (s.z1 <= kEpsScale || s.zbar1 <= kEpsScale) {
    throw DegenerateScale("losses: primary normalization scale is degenerate (z=" +
                          std::to_string(s.z1) + ", zbar=" + std::to_string(s.zbar1) + ")");
  }
  return s;
}

void require_swapped_scales(Scales& s, const PairPrediction& pred,
                            const SupervisionBundle& sup, const Domains& dom) {
  if (s.swapped_ready) return;
  if (dom.n2 == 0) throw EmptyValidSet("losses: no valid pixel in the swapped pair");
  s.z2 = masked_norm_mean(pred.X22, dom.n22, pred.X12, dom.n12, dom.n2);
  s.zbar2 = masked_norm_mean(sup.gtX22, dom.n22, sup.gtX12, dom.n12, dom.n2);
  if (s.z2 <= kEpsScale || s.zbar2 <= kEpsScale) {
    throw DegenerateScale("losses: swapped normalization scale is degenerate (z=" +
                          std::to_string(s.z2) + ", zbar=" + std::to_string(s.zbar2) + ")");
  }
  s.swapped_ready = true;
}

// One dynamic-alignment site: prediction pixel i compared against GT
// sampled at i + flow(i).
struct DynSite {
  int x, y;
  Eigen::Vector3d gt_sample;
};

// Collects the active sites of one dynamic term. `mdyn`/`mocc` are the
// masks of the grid the prediction lives on.
std::vector<DynSite> dyn_sites(const Grid<uint8_t>& domain, const BinaryMask& mdyn,
                               const BinaryMask& mocc, const FlowField& flow,
                               const Pointmap& gt_sampled_map) {
  std::vector<DynSite> sites;
  for (int y = 0; y < domain.height(); ++y) {
    for (int x = 0; x < domain.width(); ++x) {
      if (!domain(x, y) || !mdyn.bits(x, y) || mocc.bits(x, y)) continue;
      if (!flow.valid(x, y)) continue;
      const Eigen::Vector2d q = Eigen::Vector2d(x, y) + flow.vectors(x, y);
      const auto s = sample_bilinear(gt_sampled_map, q);
      if (!s.valid) continue;  // unsampleable GT: pixel dropped
      sites.push_back({x, y, s.value});
    }
  }
  return sites;
}

void check_pair_shapes(const PairPrediction& pred, const SupervisionBundle& sup) {
  require_same_size(pred.X11.points, sup.gtX11.points, "losses: X11 vs gtX11");
  require_same_size(pred.X21.points, sup.gtX21.points, "losses: X21 vs gtX21");
  require_same_size(pred.X22.points, sup.gtX22.points, "losses: X22 vs gtX22");
  require_same_size(pred.X12.points, sup.gtX12.points, "losses: X12 vs gtX12");
  require_same_size(pred.X11.points, pred.C11.values, "losses: X11 vs C11");
  require_same_size(pred.X21.points, pred.C21.values, "losses: X21 vs C21");
  require_same_size(pred.X22.points, pred.C22.values, "losses: X22 vs C22");
  require_same_size(pred.X12.points, pred.C12.values, "losses: X12 vs C12");
  require_same_size(sup.gtX21.points, sup.Mdyn2.bits, "losses: gtX21 vs Mdyn2");
  require_same_size(sup.gtX21.points, sup.Mocc2.bits, "losses: gtX21 vs Mocc2");
  require_same_size(sup.gtX12.points, sup.Mdyn1.bits, "losses: gtX12 vs Mdyn1");
  require_same_size(sup.gtX12.points, sup.Mocc1.bits, "losses: gtX12 vs Mocc1");
}

}  // namespace

double norm_scale(const Pointmap& a, const Pointmap& b) {
  size_t n = 0;
  double sum = 0.0;
  for (const Pointmap* pm : {&a, &b}) {
    for (size_t i = 0; i < pm->points.size(); ++i) {
      if (pm->valid[i]) {
        sum += pm->points[i].norm();
        ++n;
      }
    }
  }
  if (n == 0) throw EmptyValidSet("norm_scale: no valid pixels in either map");
  return sum / static_cast<double>(n);
}

std::pair<Grid<double>, Grid<double>> regr_loss_masked(const PairPrediction& pred,
                                                       const SupervisionBundle& sup) {
  check_pair_shapes(pred, sup);
  const Domains dom = make_domains(sup);
  const Scales sc = primary_scales(pred, sup, dom);

  Grid<double> r1(pred.X11.width(), pred.X11.height(), kNaN);
  Grid<double> r2(pred.X21.width(), pred.X21.height(), kNaN);
  for (size_t i = 0; i < r1.size(); ++i) {
    if (!dom.d11[i]) continue;
    r1[i] = (pred.X11.points[i] / sc.z1 - sup.gtX11.points[i] / sc.zbar1).norm();
  }
  for (size_t i = 0; i < r2.size(); ++i) {
    if (!dom.d21[i]) continue;
    r2[i] = sup.Mdyn2.bits[i]
                ? 0.0
                : (pred.X21.points[i] / sc.z1 - sup.gtX21.points[i] / sc.zbar1).norm();
  }
  return {std::move(r1), std::move(r2)};
}

double static_loss(const PairPrediction& pred, const SupervisionBundle& sup, double alpha,
                   LossBreakdown* diag) {
  check_pair_shapes(pred, sup);
  const Domains dom = make_domains(sup);
  const Scales sc = primary_scales(pred, sup, dom);
  const int w = pred.X11.width();
  const int h = pred.X11.height();

  if (diag) {
    diag->z1 = sc.z1;
    diag->zbar1 = sc.zbar1;
    diag->regr1 = Grid<double>(w, h, kNaN);
    diag->regr2 = Grid<double>(w, h, kNaN);
    diag->static1_active = BinaryMask(w, h);
    diag->static2_active = BinaryMask(w, h);
  }

  double total = 0.0;
  for (size_t i = 0; i < pred.X11.points.size(); ++i) {
    if (!dom.d11[i]) continue;
    const double r = (pred.X11.points[i] / sc.z1 - sup.gtX11.points[i] / sc.zbar1).norm();
    const double c = pred.C11.values[i];
    total += c * r - alpha * std::log(c);
    if (diag) {
      diag->regr1[i] = r;
      diag->static1_active.bits[i] = 1;
    }
  }
  for (size_t i = 0; i < pred.X21.points.size(); ++i) {
    if (!dom.d21[i]) continue;
    if (sup.Mdyn2.bits[i]) {
      if (diag) diag->regr2[i] = 0.0;
      continue;  // dynamic view-2 pixels: residual and regularizer excluded
    }
    const double r = (pred.X21.points[i] / sc.z1 - sup.gtX21.points[i] / sc.zbar1).norm();
    const double c = pred.C21.values[i];
    total += c * r - alpha * std::log(c);
    if (diag) {
      diag->regr2[i] = r;
      diag->static2_active.bits[i] = 1;
    }
  }
  return total;
}

double dynamic_alignment_loss(const PairPrediction& pred, const SupervisionBundle& sup,
                              LossBreakdown* diag) {
  check_pair_shapes(pred, sup);
  const Domains dom = make_domains(sup);
  Scales sc = primary_scales(pred, sup, dom);
  const int w = pred.X11.width();
  const int h = pred.X11.height();

  if (diag) {
    diag->dyn2 = Grid<double>(w, h, kNaN);
    diag->dyn1 = Grid<double>(w, h, kNaN);
    diag->dyn2_active = BinaryMask(w, h);
    diag->dyn1_active = BinaryMask(w, h);
  }

  double total = 0.0;
  // First term: view-2 dynamic pixels against gtX11 sampled at i + b(i).
  const auto sites2 = dyn_sites(dom.d21, sup.Mdyn2, sup.Mocc2, sup.b, sup.gtX11);
  for (const DynSite& s : sites2) {
    const double r =
        (s.gt_sample / sc.zbar1 - pred.X21.points(s.x, s.y) / sc.z1).norm();
    total += pred.C21.values(s.x, s.y) * r;
    if (diag) {
      diag->dyn2(s.x, s.y) = r;
      diag->dyn2_active.bits(s.x, s.y) = 1;
    }
  }
  // Second term: view-1 dynamic pixels of the swapped pass against gtX22
  // sampled at i + f(i).
  const auto sites1 = dyn_sites(dom.d12, sup.Mdyn1, sup.Mocc1, sup.f, sup.gtX22);
  if (!sites1.empty()) {
    require_swapped_scales(sc, pred, sup, dom);
    for (const DynSite& s : sites1) {
      const double r =
          (s.gt_sample / sc.zbar2 - pred.X12.points(s.x, s.y) / sc.z2).norm();
      total += pred.C12.values(s.x, s.y) * r;
      if (diag) {
        diag->dyn1(s.x, s.y) = r;
        diag->dyn1_active.bits(s.x, s.y) = 1;
      }
    }
  }
  if (diag) {
    diag->z2 = sc.z2;
    diag->zbar2 = sc.zbar2;
  }
  return total;
}

LossBreakdown total_loss(const PairPrediction& pred, const SupervisionBundle& sup,
                         double alpha) {
  LossBreakdown out;
  out.static_total = static_loss(pred, sup, alpha, &out);
  out.dyn_total = dynamic_alignment_loss(pred, sup, &out);
  out.total = out.static_total + out.dyn_total;
  return out;
}

double mask_bce_loss(const Grid<double>& logits, const BinaryMask& gt) {
  require_same_size(logits, gt.bits, "mask_bce_loss");
  constexpr double lo = 1e-12;
  constexpr double hi = 1.0 - 1e-12;
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double p = std::clamp(1.0 / (1.0 + std::exp(-logits[i])), lo, hi);
    sum += gt.bits[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(logits.size());
}

LossGradients loss_gradients(const PairPrediction& pred, const SupervisionBundle& sup,
                             double alpha) {
  check_pair_shapes(pred, sup);
  const Domains dom = make_domains(sup);
  Scales sc = primary_scales(pred, sup, dom);
  const int w = pred.X11.width();
  const int h = pred.X11.height();

  LossGradients g;
  g.dX11 = Grid<Eigen::Vector3d>(w, h, Eigen::Vector3d::Zero());
  g.dX21 = g.dX11;
  g.dX22 = g.dX11;
  g.dX12 = g.dX11;
  g.dC11 = Grid<double>(w, h, 0.0);
  g.dC21 = g.dC11;
  g.dC22 = g.dC11;
  g.dC12 = g.dC11;

  double dL_dz1 = 0.0;  // accumulated coupling through the primary scale
  double dL_dz2 = 0.0;

  // Static, view 1.
  for (size_t i = 0; i < pred.X11.points.size(); ++i) {
    if (!dom.d11[i]) continue;
    const Eigen::Vector3d e = pred.X11.points[i] / sc.z1 - sup.gtX11.points[i] / sc.zbar1;
    const double r = e.norm();
    const double c = pred.C11.values[i];
    if (r > 0.0) {
      const Eigen::Vector3d u = e / r;
      g.dX11[i] += (c / sc.z1) * u;
      dL_dz1 += c * u.dot(-pred.X11.points[i]) / (sc.z1 * sc.z1);
    }
    g.dC11[i] += r - alpha / c;
  }
  // Static, view 2 (non-dynamic pixels only).
  for (size_t i = 0; i < pred.X21.points.size(); ++i) {
    if (!dom.d21[i] || sup.Mdyn2.bits[i]) continue;
    const Eigen::Vector3d e = pred.X21.points[i] / sc.z1 - sup.gtX21.points[i] / sc.zbar1;
    const double r = e.norm();
    const double c = pred.C21.values[i];
    if (r > 0.0) {
      const Eigen::Vector3d u = e / r;
      g.dX21[i] += (c / sc.z1) * u;
      dL_dz1 += c * u.dot(-pred.X21.points[i]) / (sc.z1 * sc.z1);
    }
    g.dC21[i] += r - alpha / c;
  }
  // Dynamic, first term.
  for (const DynSite& s : dyn_sites(dom.d21, sup.Mdyn2, sup.Mocc2, sup.b, sup.gtX11)) {
    const size_t i = static_cast<size_t>(s.y) * w + s.x;
    const Eigen::Vector3d e = s.gt_sample / sc.zbar1 - pred.X21.points[i] / sc.z1;
    const double r = e.norm();
    const double c = pred.C21.values[i];
    if (r > 0.0) {
      const Eigen::Vector3d u = e / r;
      g.dX21[i] += (-c / sc.z1) * u;
      dL_dz1 += c * u.dot(pred.X21.points[i]) / (sc.z1 * sc.z1);
    }
    g.dC21[i] += r;
  }
  // Dynamic, second term (swapped pass).
  const auto sites1 = dyn_sites(dom.d12, sup.Mdyn1, sup.Mocc1, sup.f, sup.gtX22);
  if (!sites1.empty()) {
    require_swapped_scales(sc, pred, sup, dom);
    for (const DynSite& s : sites1) {
      const size_t i = static_cast<size_t>(s.y) * w + s.x;
      const Eigen::Vector3d e = s.gt_sample / sc.zbar2 - pred.X12.points[i] / sc.z2;
      const double r = e.norm();
      const double c = pred.C12.values[i];
      if (r > 0.0) {
        const Eigen::Vector3d u = e / r;
        g.dX12[i] += (-c / sc.z2) * u;
        dL_dz2 += c * u.dot(pred.X12.points[i]) / (sc.z2 * sc.z2);
      }
      g.dC12[i] += r;
    }
  }

  // Scale coupling: z is the mean point norm over its normalization
  // domain, so every domain pixel feels dL/dz spread through its norm.
  if (dL_dz1 != 0.0) {
    const double inv_n1 = 1.0 / static_cast<double>(dom.n1);
    for (size_t i = 0; i < g.dX11.size(); ++i) {
      if (dom.n11[i]) {
        const double nrm = pred.X11.points[i].norm();
        if (nrm > 0.0) g.dX11[i] += dL_dz1 * inv_n1 / nrm * pred.X11.points[i];
      }
    }
    for (size_t i = 0; i < g.dX21.size(); ++i) {
      if (dom.n21[i]) {
        const double nrm = pred.X21.points[i].norm();
        if (nrm > 0.0) g.dX21[i] += dL_dz1 * inv_n1 / nrm * pred.X21.points[i];
      }
    }
  }
  if (dL_dz2 != 0.0) {
    const double inv_n2 = 1.0 / static_cast<double>(dom.n2);
    for (size_t i = 0; i < g.dX22.size(); ++i) {
      if (dom.n22[i]) {
        const double nrm = pred.X22.points[i].norm();
        if (nrm > 0.0) g.dX22[i] += dL_dz2 * inv_n2 / nrm * pred.X22.points[i];
      }
    }
    for (size_t i = 0; i < g.dX12.size(); ++i) {
      if (dom.n12[i]) {
        const double nrm = pred.X12.points[i].norm();
        if (nrm > 0.0) g.dX12[i] += dL_dz2 * inv_n2 / nrm * pred.X12.points[i];
      }
    }
  }
  return g;
}

FitResult fit_pointmaps(const SupervisionBundle& sup, const PairPrediction& init, int steps,
                        double step_size) {
  if (steps < 1) throw Error("fit_pointmaps: steps must be >= 1");
  if (!(step_size > 0.0)) throw Error("fit_pointmaps: step_size must be > 0");

  FitResult res;
  res.pred = init;
  res.trace.reserve(static_cast<size_t>(steps) + 1);

  // Confidence reparameterization C = 1 + exp(cw), keeping C >= 1. Inputs
  // at exactly C = 1 are nudged onto the manifold.
  auto to_cw = [](const ConfidenceMap& c) {
    Grid<double> cw(c.width(), c.height(), 0.0);
    for (size_t i = 0; i < cw.size(); ++i) {
      cw[i] = std::log(std::max(c.values[i] - 1.0, 1e-8));
    }
    return cw;
  };
  Grid<double> cw11 = to_cw(init.C11), cw21 = to_cw(init.C21);
  Grid<double> cw22 = to_cw(init.C22), cw12 = to_cw(init.C12);
  auto write_conf = [](const Grid<double>& cw, ConfidenceMap& c) {
    for (size_t i = 0; i < cw.size(); ++i) c.values[i] = 1.0 + std::exp(cw[i]);
  };
  write_conf(cw11, res.pred.C11);
  write_conf(cw21, res.pred.C21);
  write_conf(cw22, res.pred.C22);
  write_conf(cw12, res.pred.C12);

  auto abort_non_finite = [&res](int step) {
    std::ostringstream msg;
    msg << "fit_pointmaps: non-finite loss at step " << step << "; trace tail:";
    const size_t n = res.trace.size();
    for (size_t i = (n > 5 ? n - 5 : 0); i < n; ++i) msg << " " << res.trace[i];
    throw NonFiniteLoss(msg.str());
  };

  for (int step = 0; step < steps; ++step) {
    const LossBreakdown lb = total_loss(res.pred, sup, sup.alpha);
    if (!std::isfinite(lb.total)) abort_non_finite(step);
    res.trace.push_back(lb.total);

    const LossGradients grad = loss_gradients(res.pred, sup, sup.alpha);
    auto step_points = [&](Pointmap& X, const Grid<Eigen::Vector3d>& dX) {
      for (size_t i = 0; i < X.points.size(); ++i) X.points[i] -= step_size * dX[i];
    };
    step_points(res.pred.X11, grad.dX11);
    step_points(res.pred.X21, grad.dX21);
    step_points(res.pred.X22, grad.dX22);
    step_points(res.pred.X12, grad.dX12);
    auto step_conf = [&](Grid<double>& cw, const Grid<double>& dC, ConfidenceMap& c) {
      for (size_t i = 0; i < cw.size(); ++i) {
        cw[i] -= step_size * dC[i] * std::exp(cw[i]);
        cw[i] = std::clamp(cw[i], -40.0, 40.0);
        c.values[i] = 1.0 + std::exp(cw[i]);
      }
    };
    step_conf(cw11, grad.dC11, res.pred.C11);
    step_conf(cw21, grad.dC21, res.pred.C21);
    step_conf(cw22, grad.dC22, res.pred.C22);
    step_conf(cw12, grad.dC12, res.pred.C12);
  }
  const LossBreakdown final_lb = total_loss(res.pred, sup, sup.alpha);
  if (!std::isfinite(final_lb.total)) abort_non_finite(steps);
  res.trace.push_back(final_lb.total);
  return res;
}

Pointmap flow_aligned_pointmap(const Pointmap& gt_src, const FlowField& flow_to_src,
                               const Pointmap& rigid, const BinaryMask& mdyn,
                               const BinaryMask& mocc) {
  require_same_size(rigid.points, flow_to_src.vectors, "flow_aligned_pointmap");
  require_same_size(rigid.points, mdyn.bits, "flow_aligned_pointmap");
  Pointmap out = rigid;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!mdyn.bits(x, y)) continue;  // static: keep the rigid target
      out.valid(x, y) = 0;
      out.points(x, y).setZero();
      if (mocc.bits(x, y) || !flow_to_src.valid(x, y)) continue;
      const Eigen::Vector2d q = Eigen::Vector2d(x, y) + flow_to_src.vectors(x, y);
      const auto s = sample_bilinear(gt_src, q);
      if (!s.valid) continue;
      out.points(x, y) = s.value;
      out.valid(x, y) = 1;
    }
  }
  return out;
}

}  // namespace pm4d
