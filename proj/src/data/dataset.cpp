#include "flowleak/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"

namespace flowleak::data {

namespace {

struct Canvas {
  int size;
  double fg;
  std::vector<double>* px;

  void set(int y, int x, double v) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    (*px)[static_cast<std::size_t>(y) * size + x] = v;
  }
  void dot(int y, int x) { set(y, x, fg); }
};

int pick_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

void draw_rect(Canvas& c, Rng& rng, bool filled) {
  const int s = c.size;
  const int hw = pick_int(rng, s / 6, s / 3);
  const int hh = pick_int(rng, s / 6, s / 3);
  const int cx = pick_int(rng, hw, s - 1 - hw);
  const int cy = pick_int(rng, hh, s - 1 - hh);
  for (int y = cy - hh; y <= cy + hh; ++y)
    for (int x = cx - hw; x <= cx + hw; ++x) {
      const bool border = y == cy - hh || y == cy + hh || x == cx - hw || x == cx + hw;
      if (filled || border) c.dot(y, x);
    }
}

void draw_disk(Canvas& c, Rng& rng, bool filled) {
  const int s = c.size;
  const int r = pick_int(rng, s / 4, s / 3 + 1);
  const int cx = pick_int(rng, r, s - 1 - r);
  const int cy = pick_int(rng, r, s - 1 - r);
  // Ring thickness close to half the radius keeps the hole visible at size 8.
  const double inner = filled ? -1.0 : r - std::max(1, r / 2) + 0.25;
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x) {
      const double d2 = double(y - cy) * (y - cy) + double(x - cx) * (x - cx);
      if (d2 <= double(r) * r + 0.25 && d2 >= inner * inner) c.dot(y, x);
    }
}

void draw_plus(Canvas& c, Rng& rng) {
  const int s = c.size;
  const int arm = pick_int(rng, s / 3, s / 2 - 1);
  const int t = pick_int(rng, 0, std::max(0, s / 8 - 1));  // half thickness
  const int cx = pick_int(rng, arm, s - 1 - arm);
  const int cy = pick_int(rng, arm, s - 1 - arm);
  for (int d = -arm; d <= arm; ++d)
    for (int w = -t; w <= t; ++w) {
      c.dot(cy + d, cx + w);
      c.dot(cy + w, cx + d);
    }
}

void draw_diag_cross(Canvas& c, Rng& rng) {
  const int s = c.size;
  const int arm = pick_int(rng, s / 3, s / 2 - 1);
  const int t = pick_int(rng, 0, std::max(0, s / 8 - 1));
  const int cx = pick_int(rng, arm, s - 1 - arm);
  const int cy = pick_int(rng, arm, s - 1 - arm);
  for (int d = -arm; d <= arm; ++d)
    for (int w = -t; w <= t; ++w) {
      c.dot(cy + d + w, cx + d);
      c.dot(cy - d + w, cx + d);
    }
}

enum class StripeAxis { rows, cols, diag };

void draw_stripes(Canvas& c, Rng& rng, StripeAxis axis) {
  const int s = c.size;
  const int period = pick_int(rng, 2, std::max(3, s / 2));
  const int duty = std::max(1, period / 2);
  const int phase = pick_int(rng, 0, period - 1);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      int k = 0;
      switch (axis) {
        case StripeAxis::rows: k = y; break;
        case StripeAxis::cols: k = x; break;
        case StripeAxis::diag: k = x + y; break;
      }
      if ((k + phase) % period < duty) c.dot(y, x);
    }
}

void draw_checker(Canvas& c, Rng& rng) {
  const int s = c.size;
  const int cell = pick_int(rng, 1, std::max(1, s / 4));
  const int py = pick_int(rng, 0, cell - 1);
  const int px = pick_int(rng, 0, cell - 1);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      if (((y + py) / cell + (x + px) / cell) % 2 == 0) c.dot(y, x);
}

}  // namespace

std::string shape_class_name(int cls) {
  // Ordered so small class counts pick maximally dissimilar shapes; the
  // confusable pairs (filled/hollow, disk/ring) only join from 5 classes up.
  static const char* names[] = {"filled_rectangle", "h_stripes",      "plus_cross",
                                "checkerboard",     "filled_disk",    "diag_stripes",
                                "hollow_rectangle", "diagonal_cross", "v_stripes",
                                "ring"};
  if (cls < 0 || cls >= 10) throw ValueError("shape class out of range: " + std::to_string(cls));
  return names[cls];
}

fl::ClientDataset gen_shapes_dataset(std::size_t n, int size, int classes, std::uint64_t seed) {
  if (n == 0) throw ValueError("shapes dataset: n must be positive");
  if (size < 8) throw ValueError("shapes dataset: size must be >= 8");
  if (classes < 2 || classes > 10)
    throw ValueError("shapes dataset: classes must lie in [2, 10]");

  fl::ClientDataset out;
  out.images.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
    Rng rng(mix_seed(seed, i));
    const double bg = rng.uniform(0.0, 0.12);
    const double fg = rng.uniform(0.75, 1.0);
    std::vector<double> px(static_cast<std::size_t>(size) * size, bg);
    Canvas canvas{size, fg, &px};
    switch (cls) {  // order mirrors shape_class_name
      case 0: draw_rect(canvas, rng, true); break;
      case 1: draw_stripes(canvas, rng, StripeAxis::rows); break;
      case 2: draw_plus(canvas, rng); break;
      case 3: draw_checker(canvas, rng); break;
      case 4: draw_disk(canvas, rng, true); break;
      case 5: draw_stripes(canvas, rng, StripeAxis::diag); break;
      case 6: draw_rect(canvas, rng, false); break;
      case 7: draw_diag_cross(canvas, rng); break;
      case 8: draw_stripes(canvas, rng, StripeAxis::cols); break;
      case 9: draw_disk(canvas, rng, false); break;
    }
    out.images.push_back(ad::Tensor::from_data({1, size, size}, std::move(px)));
    out.labels.push_back(cls);
  }
  return out;
}

}  // namespace flowleak::data
