#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "densematch/feature_grid.hpp"
#include "densematch/view_geometry.hpp"

namespace densematch {

struct Match {
  int key = 0;
  double score = 0.0;
};

/// Per-query match assignment. Entries may be absent (no geometric overlap,
/// or no candidate inside the warped-distance radius).
class CorrespondenceMap {
 public:
  CorrespondenceMap(int n_query, int n_key)
      : n_query_(n_query), n_key_(n_key),
        entries_(static_cast<std::size_t>(n_query)) {
    if (n_query < 1 || n_key < 1) {
      throw std::invalid_argument("CorrespondenceMap: sizes must be positive");
    }
  }

  int n_query() const { return n_query_; }
  int n_key() const { return n_key_; }

  const std::optional<Match>& entry(int query) const {
    return entries_.at(static_cast<std::size_t>(query));
  }

  void set(int query, Match m) {
    if (m.key < 0 || m.key >= n_key_) {
      throw std::invalid_argument("CorrespondenceMap: key index out of range");
    }
    entries_.at(static_cast<std::size_t>(query)) = m;
  }

  int matched_count() const {
    int n = 0;
    for (const auto& e : entries_) n += e.has_value() ? 1 : 0;
    return n;
  }

  bool operator==(const CorrespondenceMap& o) const {
    if (n_query_ != o.n_query_ || n_key_ != o.n_key_) return false;
    for (int i = 0; i < n_query_; ++i) {
      const auto& a = entries_[static_cast<std::size_t>(i)];
      const auto& b = o.entries_[static_cast<std::size_t>(i)];
      if (a.has_value() != b.has_value()) return false;
      if (a && (a->key != b->key || a->score != b->score)) return false;
    }
    return true;
  }

 private:
  int n_query_;
  int n_key_;
  std::vector<std::optional<Match>> entries_;
};

/// Knobs of the Hough-consensus matcher. Defaults give the unpruned
/// reference semantics: every candidate pair votes.
struct HoughConfig {
  double bin_width = 1.0;      // grid-cell units
  double vote_exponent = 2.0;  // p in max(0, sim)^p
  int smoothing_radius = 0;    // bins; 0 = no smoothing
  int top_k = kAllKeys;        // per-query candidate cap
  double min_similarity = -1.0;

  static constexpr int kAllKeys = std::numeric_limits<int>::max();

  void validate() const {
    if (!(bin_width > 0.0)) {
      throw std::invalid_argument("HoughConfig: bin_width must be positive");
    }
    if (!(vote_exponent >= 1.0)) {
      throw std::invalid_argument("HoughConfig: vote_exponent must be >= 1");
    }
    if (smoothing_radius < 0) {
      throw std::invalid_argument("HoughConfig: smoothing_radius must be >= 0");
    }
    if (top_k < 1) {
      throw std::invalid_argument("HoughConfig: top_k must be >= 1");
    }
    if (!(min_similarity >= -1.0 && min_similarity <= 1.0)) {
      throw std::invalid_argument("HoughConfig: min_similarity outside [-1,1]");
    }
  }
};

/// Binned vote accumulator over 2-D cell-coordinate offsets. The bin grid
/// covers every offset representable between two grids of the given shapes:
/// each axis spans [-(max_dim-1), +(max_dim-1)] cells.
class HoughAccumulator {
 public:
  HoughAccumulator(int s_h, int s_w, double bin_width)
      : bin_width_(bin_width), extent_(std::max(s_h, s_w) - 1) {
    if (s_h < 1 || s_w < 1) {
      throw std::invalid_argument("HoughAccumulator: grid dims must be positive");
    }
    if (!(bin_width > 0.0)) {
      throw std::invalid_argument("HoughAccumulator: bin_width must be positive");
    }
    bins_per_axis_ =
        static_cast<int>(std::floor(2.0 * extent_ / bin_width_)) + 1;
    counts_.assign(
        static_cast<std::size_t>(bins_per_axis_) * bins_per_axis_, 0.0);
  }

  double bin_width() const { return bin_width_; }
  int extent() const { return extent_; }
  int bins_per_axis() const { return bins_per_axis_; }

  /// Bin index along one axis for an offset component in cell units.
  int bin_index(double offset) const {
    const int k = static_cast<int>(std::floor((offset + extent_) / bin_width_));
    if (k < 0 || k >= bins_per_axis_) {
      throw std::invalid_argument("HoughAccumulator: offset outside bin range");
    }
    return k;
  }

  double at(int bx, int by) const { return counts_[offset(bx, by)]; }
  double& at(int bx, int by) { return counts_[offset(bx, by)]; }

  double count_for_offset(double dx, double dy) const {
    return at(bin_index(dx), bin_index(dy));
  }

  /// Adds `weight` at offset (dx, dy). With smoothing_radius r > 0 the vote
  /// is spread over in-range bins within Chebyshev radius r using triangular
  /// weights (1 - d/(r+1)), renormalized so the deposited mass is exactly
  /// `weight` even at the accumulator border.
  void deposit(double dx, double dy, double weight, int smoothing_radius) {
    const int bx = bin_index(dx);
    const int by = bin_index(dy);
    if (smoothing_radius <= 0) {
      at(bx, by) += weight;
      return;
    }
    const int r = smoothing_radius;
    double total = 0.0;
    for (int oy = -r; oy <= r; ++oy) {
      for (int ox = -r; ox <= r; ++ox) {
        if (!in_range(bx + ox, by + oy)) continue;
        const int d = std::max(std::abs(ox), std::abs(oy));
        total += 1.0 - static_cast<double>(d) / (r + 1);
      }
    }
    for (int oy = -r; oy <= r; ++oy) {
      for (int ox = -r; ox <= r; ++ox) {
        if (!in_range(bx + ox, by + oy)) continue;
        const int d = std::max(std::abs(ox), std::abs(oy));
        const double frac = (1.0 - static_cast<double>(d) / (r + 1)) / total;
        at(bx + ox, by + oy) += weight * frac;
      }
    }
  }

  double max_count() const {
    return *std::max_element(counts_.begin(), counts_.end());
  }

  double total_mass() const {
    return std::accumulate(counts_.begin(), counts_.end(), 0.0);
  }

  void scale(double factor) {
    for (auto& c : counts_) c *= factor;
  }

  const std::vector<double>& counts() const { return counts_; }

 private:
  bool in_range(int bx, int by) const {
    return bx >= 0 && bx < bins_per_axis_ && by >= 0 && by < bins_per_axis_;
  }
  std::size_t offset(int bx, int by) const {
    if (!in_range(bx, by)) {
      throw std::invalid_argument("HoughAccumulator: bin index out of range");
    }
    return static_cast<std::size_t>(by) * bins_per_axis_ + bx;
  }

  double bin_width_;
  int extent_;
  int bins_per_axis_;
  std::vector<double> counts_;
};

/// Winner-takes-all matching: each query takes the key with the highest
/// similarity, ties broken toward the lowest key index. Every query is
/// matched.
inline CorrespondenceMap argmax_match(const SimilarityMatrix& delta) {
  CorrespondenceMap out(delta.n_query(), delta.n_key());
  for (int i = 0; i < delta.n_query(); ++i) {
    int best = 0;
    double best_val = delta.at(i, 0);
    for (int j = 1; j < delta.n_key(); ++j) {
      const double v = delta.at(i, j);
      if (v > best_val) {
        best = j;
        best_val = v;
      }
    }
    out.set(i, Match{best, best_val});
  }
  return out;
}

/// Geometry-gated matching: each query's center is warped into view-2 cell
/// coordinates through the known transforms; candidate keys are those whose
/// centers lie within `radius` (Euclidean, view-2 cell units) of the warped
/// point, and the highest-similarity candidate wins. Absent when the warped
/// point leaves view 2 or no key center is in range.
inline CorrespondenceMap warped_threshold_match(const ViewTransform& t1,
                                                const ViewTransform& t2,
                                                int s_h, int s_w,
                                                const SimilarityMatrix& delta,
                                                double radius) {
  if (delta.n_query() != s_h * s_w || delta.n_key() != s_h * s_w) {
    throw std::invalid_argument("warped_threshold_match: delta shape mismatch");
  }
  if (!(radius >= 0.0)) {
    throw std::invalid_argument("warped_threshold_match: radius must be >= 0");
  }
  t1.validate();
  t2.validate();
  CorrespondenceMap out(delta.n_query(), delta.n_key());
  for (int q = 0; q < s_h * s_w; ++q) {
    const Point img = cell_center_in_image(t1, s_h, s_w, q);
    const Point local = image_to_view_local(t2, img);
    if (local.x < 0.0 || local.x >= 1.0 || local.y < 0.0 || local.y >= 1.0) {
      continue;
    }
    const double px = local.x * s_w;
    const double py = local.y * s_h;
    int best = -1;
    double best_val = 0.0;
    for (int j = 0; j < s_h * s_w; ++j) {
      const double cx = (j % s_w) + 0.5;
      const double cy = (j / s_w) + 0.5;
      if (std::hypot(cx - px, cy - py) > radius) continue;
      const double v = delta.at(q, j);
      if (best < 0 || v > best_val) {
        best = j;
        best_val = v;
      }
    }
    if (best >= 0) out.set(q, Match{best, best_val});
  }
  return out;
}

/// Accumulates geometric-consensus votes. For each query, the top_k keys by
/// similarity with delta >= min_similarity are admitted; each admitted pair
/// votes max(0, delta)^p for its grid offset pos(key) - pos(query).
inline HoughAccumulator hough_vote(const SimilarityMatrix& delta, int s_h,
                                   int s_w, const HoughConfig& cfg) {
  if (delta.n_query() != s_h * s_w || delta.n_key() != s_h * s_w) {
    throw std::invalid_argument("hough_vote: delta shape mismatch");
  }
  cfg.validate();
  HoughAccumulator acc(s_h, s_w, cfg.bin_width);
  const int n = s_h * s_w;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.top_k < n) {
      std::partial_sort(order.begin(), order.begin() + cfg.top_k, order.end(),
                        [&](int a, int b) {
                          const double va = delta.at(i, a);
                          const double vb = delta.at(i, b);
                          if (va != vb) return va > vb;
                          return a < b;
                        });
      order.resize(static_cast<std::size_t>(cfg.top_k));
    }
    for (int j : order) {
      const double sim = delta.at(i, j);
      if (sim < cfg.min_similarity) continue;
      const double w = std::pow(std::max(0.0, sim), cfg.vote_exponent);
      if (w == 0.0) continue;
      const double dx = static_cast<double>(j % s_w) - (i % s_w);
      const double dy = static_cast<double>(j / s_w) - (i / s_w);
      acc.deposit(dx, dy, w, cfg.smoothing_radius);
    }
    order.resize(static_cast<std::size_t>(n));
  }
  return acc;
}

/// Consensus rescoring: each similarity is multiplied by its offset bin's
/// vote count normalized by the peak bin. An empty accumulator (peak 0)
/// leaves delta unchanged.
inline SimilarityMatrix hough_rescore(const SimilarityMatrix& delta,
                                      const HoughAccumulator& acc, int s_h,
                                      int s_w) {
  if (delta.n_query() != s_h * s_w || delta.n_key() != s_h * s_w) {
    throw std::invalid_argument("hough_rescore: delta shape mismatch");
  }
  const double peak = acc.max_count();
  if (peak == 0.0) return delta;
  SimilarityMatrix m(delta.n_query(), delta.n_key());
  for (int i = 0; i < delta.n_query(); ++i) {
    for (int j = 0; j < delta.n_key(); ++j) {
      const double dx = static_cast<double>(j % s_w) - (i % s_w);
      const double dy = static_cast<double>(j / s_w) - (i / s_w);
      m.at(i, j) = delta.at(i, j) * (acc.count_for_offset(dx, dy) / peak);
    }
  }
  return m;
}

/// Full Hough pipeline: vote, rescore, then winner-takes-all on the rescored
/// matrix. Scores carry the rescored values.
inline CorrespondenceMap hough_match(const SimilarityMatrix& delta, int s_h,
                                     int s_w, const HoughConfig& cfg) {
  const HoughAccumulator acc = hough_vote(delta, s_h, s_w, cfg);
  const SimilarityMatrix rescored = hough_rescore(delta, acc, s_h, s_w);
  return argmax_match(rescored);
}

}  // namespace densematch
