#pragma once

#include <array>

namespace matchfree {

// Axis-aligned box in normalized center format.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  // Throws ValidationError on negative or non-finite extents.
  void validate() const;
  double area() const { return w * h; }
  std::array<double, 4> as_array() const { return {cx, cy, w, h}; }
  static Box from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

Corners to_corners(const Box& b);
Box from_corners(const Corners& c);

// Sum of absolute center-format coordinate differences.
double l1_cost(const Box& b, const Box& g);
// Subgradient of l1_cost with respect to b (sign(b - g), 0 at ties).
std::array<double, 4> l1_cost_grad(const Box& b, const Box& g);

double iou(const Box& a, const Box& b);

// Generalized IoU in [-1, 1]. Two zero-area boxes with zero union give 0; if
// the enclosing box also has zero area the penalty term is dropped.
double giou(const Box& a, const Box& b);
inline double giou_loss(const Box& a, const Box& b) { return 1.0 - giou(a, b); }

// d(giou_loss(b, g)) / d(cx, cy, w, h) of b. At max/min ties the branch
// belonging to b is taken, which yields a one-sided subgradient.
std::array<double, 4> giou_loss_grad(const Box& b, const Box& g);

}  // namespace matchfree
