#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "densematch/errors.hpp"
#include "densematch/rng.hpp"

namespace densematch {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned crop of the unit image square, with an optional horizontal
/// flip applied before the crop's affine map. Coordinates are normalized
/// image coordinates in [0, 1].
struct ViewTransform {
  double crop_x0 = 0.0;
  double crop_y0 = 0.0;
  double crop_w = 1.0;
  double crop_h = 1.0;
  bool hflip = false;

  void validate() const {
    if (!(crop_w > 0.0 && crop_w <= 1.0) || !(crop_h > 0.0 && crop_h <= 1.0) ||
        !(crop_x0 >= 0.0) || !(crop_y0 >= 0.0) ||
        crop_x0 + crop_w > 1.0 + 1e-12 || crop_y0 + crop_h > 1.0 + 1e-12) {
      throw std::invalid_argument("ViewTransform: crop outside unit image");
    }
  }

  static ViewTransform identity() { return {}; }
};

struct GroundTruthEntry {
  int key = 0;            // flat index of the matched view-2 cell
  double displacement = 0.0;  // distance to that cell's center, view-2 cell units
};

/// Per-query oracle correspondence between two views of the same image.
/// Absent entries mean the query's warped center falls outside view 2.
class GroundTruthMap {
 public:
  GroundTruthMap(int s_h, int s_w)
      : s_h_(s_h), s_w_(s_w),
        entries_(static_cast<std::size_t>(s_h) * s_w) {
    if (s_h < 1 || s_w < 1) {
      throw std::invalid_argument("GroundTruthMap: grid dims must be positive");
    }
  }

  int s_h() const { return s_h_; }
  int s_w() const { return s_w_; }
  int cells() const { return s_h_ * s_w_; }

  const std::optional<GroundTruthEntry>& entry(int query) const {
    return entries_.at(static_cast<std::size_t>(query));
  }
  std::optional<GroundTruthEntry>& entry(int query) {
    return entries_.at(static_cast<std::size_t>(query));
  }

  int present_count() const {
    int n = 0;
    for (const auto& e : entries_) n += e.has_value() ? 1 : 0;
    return n;
  }

 private:
  int s_h_;
  int s_w_;
  std::vector<std::optional<GroundTruthEntry>> entries_;
};

/// Image coordinates of the center of grid cell `cell` (row-major flat index)
/// under transform t. Cell (i, j) has view-local center ((j+0.5)/s_w,
/// (i+0.5)/s_h); hflip mirrors the local x before the crop's affine map.
inline Point cell_center_in_image(const ViewTransform& t, int s_h, int s_w,
                                  int cell) {
  if (cell < 0 || cell >= s_h * s_w) {
    throw std::invalid_argument("cell_center_in_image: cell index out of range");
  }
  const int row = cell / s_w;
  const int col = cell % s_w;
  double u = (col + 0.5) / s_w;
  const double v = (row + 0.5) / s_h;
  if (t.hflip) u = 1.0 - u;
  return {t.crop_x0 + u * t.crop_w, t.crop_y0 + v * t.crop_h};
}

/// Inverse of t's affine map (including flip): image point -> view-local
/// coordinates. The result may fall outside [0, 1)^2.
inline Point image_to_view_local(const ViewTransform& t, Point p) {
  double u = (p.x - t.crop_x0) / t.crop_w;
  const double v = (p.y - t.crop_y0) / t.crop_h;
  if (t.hflip) u = 1.0 - u;
  return {u, v};
}

/// Oracle matching: each view-1 cell center is mapped through t1 into the
/// image and back through t2; if the local point lies in [0,1)^2 the match is
/// the nearest view-2 cell (floor of local * s), with the displacement to
/// that cell's center recorded in view-2 cell units.
inline GroundTruthMap ground_truth_match(const ViewTransform& t1,
                                         const ViewTransform& t2, int s_h,
                                         int s_w) {
  t1.validate();
  t2.validate();
  GroundTruthMap gt(s_h, s_w);
  for (int q = 0; q < s_h * s_w; ++q) {
    const Point img = cell_center_in_image(t1, s_h, s_w, q);
    const Point local = image_to_view_local(t2, img);
    if (local.x < 0.0 || local.x >= 1.0 || local.y < 0.0 || local.y >= 1.0) {
      continue;
    }
    const double cx = local.x * s_w;  // view-2 cell units
    const double cy = local.y * s_h;
    const int col = static_cast<int>(std::floor(cx));
    const int row = static_cast<int>(std::floor(cy));
    const double dx = cx - (col + 0.5);
    const double dy = cy - (row + 0.5);
    gt.entry(q) = GroundTruthEntry{row * s_w + col, std::hypot(dx, dy)};
  }
  return gt;
}

/// Intersection-over-union of two crop rectangles in image space.
inline double crop_iou(const ViewTransform& a, const ViewTransform& b) {
  const double ix = std::max(
      0.0, std::min(a.crop_x0 + a.crop_w, b.crop_x0 + b.crop_w) -
               std::max(a.crop_x0, b.crop_x0));
  const double iy = std::max(
      0.0, std::min(a.crop_y0 + a.crop_h, b.crop_y0 + b.crop_h) -
               std::max(a.crop_y0, b.crop_y0));
  const double inter = ix * iy;
  const double uni = a.crop_w * a.crop_h + b.crop_w * b.crop_h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Draws a pair of random crops with side lengths uniform in scale_range and
/// positions uniform over the valid range, with independent horizontal flips.
/// Rejects until the crop rectangles' IoU reaches min_overlap. Deterministic
/// for a fixed seed; throws GenerationError after 10000 rejected draws.
inline std::pair<ViewTransform, ViewTransform> sample_view_pair(
    std::uint64_t rng_seed, double min_overlap,
    std::pair<double, double> scale_range, double flip_prob) {
  const auto [lo, hi] = scale_range;
  if (!(lo > 0.0 && hi <= 1.0 && lo <= hi)) {
    throw std::invalid_argument("sample_view_pair: bad scale_range");
  }
  if (!(min_overlap > 0.0 && min_overlap <= 1.0)) {
    throw std::invalid_argument("sample_view_pair: min_overlap must be in (0,1]");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw std::invalid_argument("sample_view_pair: flip_prob must be in [0,1]");
  }

  auto rng = make_engine(rng_seed);
  auto uniform = [&rng](double a, double b) {
    if (b <= a) return a;
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  auto draw = [&]() {
    ViewTransform t;
    t.crop_w = uniform(lo, hi);
    t.crop_h = uniform(lo, hi);
    t.crop_x0 = uniform(0.0, 1.0 - t.crop_w);
    t.crop_y0 = uniform(0.0, 1.0 - t.crop_h);
    t.hflip = uniform(0.0, 1.0) < flip_prob;
    return t;
  };

  constexpr int kMaxAttempts = 10000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    ViewTransform t1 = draw();
    ViewTransform t2 = draw();
    if (crop_iou(t1, t2) >= min_overlap) return {t1, t2};
  }
  throw GenerationError("sample_view_pair: min_overlap unsatisfied after 10000 draws");
}

}  // namespace densematch
