// Copyright 2026 The ULM-DETR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>

namespace ulm {

// Continuous pixel coordinates: pixel (row i, col j) covers [j, j+1) x [i, i+1).
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Top-left corner convention, pixels.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  Point center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool contains(Point p) const { return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Centre-size convention, usually normalized to [0,1].
struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  friend bool operator==(const CenterBox&, const CenterBox&) = default;
};

inline Box to_corner(const CenterBox& b) { return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.w, b.h}; }
inline CenterBox to_center(const Box& b) { return {b.x + 0.5 * b.w, b.y + 0.5 * b.h, b.w, b.h}; }

// Intersection with [x0,x1) x [y0,y1); zero-area results have w or h <= 0.
inline Box clip_box(const Box& b, double x0, double y0, double x1, double y1) {
  const double l = std::max(b.x, x0), t = std::max(b.y, y0);
  const double r = std::min(b.right(), x1), btm = std::min(b.bottom(), y1);
  return {l, t, r - l, btm - t};
}

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace ulm
