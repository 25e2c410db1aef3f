#include "matchfree/box.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "matchfree/errors.hpp"

namespace matchfree {

void Box::validate() const {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) {
    throw ValidationError("box has non-finite coordinates");
  }
  if (w < 0.0 || h < 0.0) {
    throw ValidationError("box has negative extent (w=" + std::to_string(w) +
                          ", h=" + std::to_string(h) + ")");
  }
}

Corners to_corners(const Box& b) {
  b.validate();
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

Box from_corners(const Corners& c) {
  if (c.x2 < c.x1 || c.y2 < c.y1) throw ValidationError("corners are not ordered");
  return {0.5 * (c.x1 + c.x2), 0.5 * (c.y1 + c.y2), c.x2 - c.x1, c.y2 - c.y1};
}

double l1_cost(const Box& b, const Box& g) {
  return std::abs(b.cx - g.cx) + std::abs(b.cy - g.cy) + std::abs(b.w - g.w) + std::abs(b.h - g.h);
}

std::array<double, 4> l1_cost_grad(const Box& b, const Box& g) {
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  return {sgn(b.cx - g.cx), sgn(b.cy - g.cy), sgn(b.w - g.w), sgn(b.h - g.h)};
}

namespace {

struct Overlap {
  double inter = 0.0;
  double uni = 0.0;
  double enclosing = 0.0;
};

Overlap overlap(const Box& a, const Box& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
  const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
  const double ew = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  const double eh = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  Overlap o;
  o.inter = iw * ih;
  o.uni = a.area() + b.area() - o.inter;
  o.enclosing = ew * eh;
  return o;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const Overlap o = overlap(a, b);
  return o.uni > 0.0 ? o.inter / o.uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  const Overlap o = overlap(a, b);
  const double i = o.uni > 0.0 ? o.inter / o.uni : 0.0;
  if (o.enclosing <= 0.0) return i;
  return i - (o.enclosing - o.uni) / o.enclosing;
}

std::array<double, 4> giou_loss_grad(const Box& b, const Box& g) {
  const Corners cb = to_corners(b);
  const Corners cg = to_corners(g);

  // Partial derivatives of the 1-D overlap / enclosure extents w.r.t. b's
  // lower and upper edges.
  struct Axis {
    double inter = 0.0, d_inter_lo = 0.0, d_inter_hi = 0.0;
    double encl = 0.0, d_encl_lo = 0.0, d_encl_hi = 0.0;
  };
  auto axis = [](double lo, double hi, double glo, double ghi) {
    Axis a;
    const double raw = std::min(hi, ghi) - std::max(lo, glo);
    if (raw > 0.0) {
      a.inter = raw;
      a.d_inter_lo = lo >= glo ? -1.0 : 0.0;
      a.d_inter_hi = hi <= ghi ? 1.0 : 0.0;
    }
    a.encl = std::max(hi, ghi) - std::min(lo, glo);
    a.d_encl_lo = lo <= glo ? -1.0 : 0.0;
    a.d_encl_hi = hi >= ghi ? 1.0 : 0.0;
    return a;
  };
  const Axis ax = axis(cb.x1, cb.x2, cg.x1, cg.x2);
  const Axis ay = axis(cb.y1, cb.y2, cg.y1, cg.y2);

  const double inter = ax.inter * ay.inter;
  const double uni = b.area() + g.area() - inter;
  const double encl = ax.encl * ay.encl;
  if (uni <= 0.0 || encl <= 0.0) return {0.0, 0.0, 0.0, 0.0};

  // Map edge derivatives onto (center, size): d/dc = d/dlo + d/dhi,
  // d/dsize = (d/dhi - d/dlo) / 2.
  const double di_dcx = ay.inter * (ax.d_inter_lo + ax.d_inter_hi);
  const double di_dw = ay.inter * 0.5 * (ax.d_inter_hi - ax.d_inter_lo);
  const double di_dcy = ax.inter * (ay.d_inter_lo + ay.d_inter_hi);
  const double di_dh = ax.inter * 0.5 * (ay.d_inter_hi - ay.d_inter_lo);

  const double de_dcx = ay.encl * (ax.d_encl_lo + ax.d_encl_hi);
  const double de_dw = ay.encl * 0.5 * (ax.d_encl_hi - ax.d_encl_lo);
  const double de_dcy = ax.encl * (ay.d_encl_lo + ay.d_encl_hi);
  const double de_dh = ax.encl * 0.5 * (ay.d_encl_hi - ay.d_encl_lo);

  const std::array<double, 4> d_inter{di_dcx, di_dcy, di_dw, di_dh};
  const std::array<double, 4> d_area{0.0, 0.0, b.h, b.w};
  const std::array<double, 4> d_encl{de_dcx, de_dcy, de_dw, de_dh};

  std::array<double, 4> grad{};
  for (int k = 0; k < 4; ++k) {
    const double d_uni = d_area[k] - d_inter[k];
    const double d_giou = d_inter[k] / uni - inter * d_uni / (uni * uni) + d_uni / encl -
                          uni * d_encl[k] / (encl * encl);
    grad[k] = -d_giou;
  }
  return grad;
}

}  // namespace matchfree
