#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace densematch {

// Norms below this are treated as zero vectors when normalizing or taking
// cosine similarity.
inline constexpr double kZeroNormThreshold = 1e-12;

namespace detail {

inline void check_positive_dims(int height, int width, int dim,
                                const char* what) {
  if (height < 1 || width < 1 || dim < 1) {
    throw std::invalid_argument(std::string(what) +
                                ": dimensions must be positive");
  }
}

}  // namespace detail

/// Backbone feature map: a height x width grid of dim-component vectors.
/// Cells are stored row-major; flat index = row * width + col.
class BackboneMap {
 public:
  BackboneMap(int height, int width, int dim)
      : height_(height), width_(width), dim_(dim) {
    detail::check_positive_dims(height, width, dim, "BackboneMap");
    data_.assign(static_cast<std::size_t>(height) * width * dim, 0.0);
  }

  static BackboneMap from_data(int height, int width, int dim,
                               std::vector<double> data) {
    BackboneMap m(height, width, dim);
    if (data.size() != m.data_.size()) {
      throw std::invalid_argument("BackboneMap: data size mismatch");
    }
    m.data_ = std::move(data);
    return m;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  int cells() const { return height_ * width_; }

  std::span<double> cell(int row, int col) {
    return {data_.data() + flat_offset(row, col), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> cell(int row, int col) const {
    return {data_.data() + flat_offset(row, col), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> cell(int flat_index) const {
    return cell(flat_index / width_, flat_index % width_);
  }

  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

 private:
  std::size_t flat_offset(int row, int col) const {
    if (row < 0 || row >= height_ || col < 0 || col >= width_) {
      throw std::invalid_argument("BackboneMap: cell index out of range");
    }
    return (static_cast<std::size_t>(row) * width_ + col) * dim_;
  }

  int height_;
  int width_;
  int dim_;
  std::vector<double> data_;
};

/// Dense embedding grid: height x width cells of dim components, row-major.
/// The `normalized` flag records that every nonzero cell has unit L2 norm.
class FeatureGrid {
 public:
  FeatureGrid(int height, int width, int dim)
      : height_(height), width_(width), dim_(dim) {
    detail::check_positive_dims(height, width, dim, "FeatureGrid");
    data_.assign(static_cast<std::size_t>(height) * width * dim, 0.0);
  }

  static FeatureGrid from_data(int height, int width, int dim,
                               std::vector<double> data) {
    FeatureGrid g(height, width, dim);
    if (data.size() != g.data_.size()) {
      throw std::invalid_argument("FeatureGrid: data size mismatch");
    }
    g.data_ = std::move(data);
    return g;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  int cells() const { return height_ * width_; }

  std::span<double> cell(int row, int col) {
    return {data_.data() + flat_offset(row, col), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> cell(int row, int col) const {
    return {data_.data() + flat_offset(row, col), static_cast<std::size_t>(dim_)};
  }
  std::span<double> cell(int flat_index) {
    return cell(flat_index / width_, flat_index % width_);
  }
  std::span<const double> cell(int flat_index) const {
    return cell(flat_index / width_, flat_index % width_);
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool normalized() const { return normalized_; }

  /// Scales every nonzero cell to unit L2 norm; zero cells stay zero.
  void l2_normalize() {
    for (int i = 0; i < cells(); ++i) {
      auto v = cell(i);
      double norm_sq = 0.0;
      for (double x : v) norm_sq += x * x;
      const double norm = std::sqrt(norm_sq);
      if (norm > kZeroNormThreshold) {
        for (auto& x : v) x /= norm;
      }
    }
    normalized_ = true;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

 private:
  std::size_t flat_offset(int row, int col) const {
    if (row < 0 || row >= height_ || col < 0 || col >= width_) {
      throw std::invalid_argument("FeatureGrid: cell index out of range");
    }
    return (static_cast<std::size_t>(row) * width_ + col) * dim_;
  }

  int height_;
  int width_;
  int dim_;
  bool normalized_ = false;
  std::vector<double> data_;
};

/// Dense cosine-similarity matrix between two flattened grids.
/// Entries lie in [-1, 1].
class SimilarityMatrix {
 public:
  SimilarityMatrix(int n_query, int n_key)
      : n_query_(n_query), n_key_(n_key) {
    if (n_query < 1 || n_key < 1) {
      throw std::invalid_argument("SimilarityMatrix: dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(n_query) * n_key, 0.0);
  }

  int n_query() const { return n_query_; }
  int n_key() const { return n_key_; }

  double at(int i, int j) const { return values_[offset(i, j)]; }
  double& at(int i, int j) { return values_[offset(i, j)]; }

  std::span<const double> row(int i) const {
    return {values_.data() + offset(i, 0), static_cast<std::size_t>(n_key_)};
  }

  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t offset(int i, int j) const {
    if (i < 0 || i >= n_query_ || j < 0 || j >= n_key_) {
      throw std::invalid_argument("SimilarityMatrix: index out of range");
    }
    return static_cast<std::size_t>(i) * n_key_ + j;
  }

  int n_query_;
  int n_key_;
  std::vector<double> values_;
};

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
/// Returns 0 when either norm falls below kZeroNormThreshold, so degenerate
/// cells lose every argmax.
inline double cosine_similarity(std::span<const double> u,
                                std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kZeroNormThreshold || nv < kZeroNormThreshold) return 0.0;
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

/// Downsamples to out_h x out_w by averaging over adaptive bins. Output cell
/// (i, j) averages input rows floor(i*H/out_h) .. ceil((i+1)*H/out_h)-1 and
/// the analogous column range.
inline BackboneMap adaptive_avg_pool(const BackboneMap& src, int out_h,
                                     int out_w) {
  if (out_h < 1 || out_h > src.height() || out_w < 1 || out_w > src.width()) {
    throw std::invalid_argument("adaptive_avg_pool: output shape out of range");
  }
  const int h = src.height(), w = src.width(), k = src.dim();
  BackboneMap out(out_h, out_w, k);
  std::vector<double> acc(static_cast<std::size_t>(k));
  for (int i = 0; i < out_h; ++i) {
    const int r0 = (i * h) / out_h;
    const int r1 = ((i + 1) * h + out_h - 1) / out_h;  // exclusive
    for (int j = 0; j < out_w; ++j) {
      const int c0 = (j * w) / out_w;
      const int c1 = ((j + 1) * w + out_w - 1) / out_w;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          auto v = src.cell(r, c);
          for (int d = 0; d < k; ++d) acc[static_cast<std::size_t>(d)] += v[d];
        }
      }
      const double inv = 1.0 / ((r1 - r0) * (c1 - c0));
      auto dst = out.cell(i, j);
      for (int d = 0; d < k; ++d) dst[d] = acc[static_cast<std::size_t>(d)] * inv;
    }
  }
  return out;
}

/// Pairwise cosine similarity between the row-major flattenings of two grids.
inline SimilarityMatrix similarity_matrix(const FeatureGrid& a,
                                          const FeatureGrid& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("similarity_matrix: feature dim mismatch");
  }
  SimilarityMatrix m(a.cells(), b.cells());
  for (int i = 0; i < a.cells(); ++i) {
    for (int j = 0; j < b.cells(); ++j) {
      m.at(i, j) = cosine_similarity(a.cell(i), b.cell(j));
    }
  }
  return m;
}

/// Per-component arithmetic mean over all cells.
inline std::vector<double> global_pool(const FeatureGrid& g) {
  std::vector<double> pooled(static_cast<std::size_t>(g.dim()), 0.0);
  for (int i = 0; i < g.cells(); ++i) {
    auto v = g.cell(i);
    for (int d = 0; d < g.dim(); ++d) pooled[static_cast<std::size_t>(d)] += v[d];
  }
  const double inv = 1.0 / g.cells();
  for (auto& x : pooled) x *= inv;
  return pooled;
}

}  // namespace densematch
