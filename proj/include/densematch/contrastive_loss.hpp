#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "densematch/errors.hpp"
#include "densematch/feature_grid.hpp"
#include "densematch/matchers.hpp"

namespace densematch {

/// Dense InfoNCE over matched grid locations. `per_location` holds one loss
/// value per matched query, in query order, so its mean equals `mean`.
struct DenseLossResult {
  double mean = 0.0;
  std::vector<double> per_location;
  int matched_count = 0;
};

/// The two loss terms and their blend: total = (1 - lambda) * l_q +
/// lambda * l_r, with l_r the mean of per_location.
struct LossTerms {
  double l_q = 0.0;
  double l_r = 0.0;
  double lambda = 0.5;
  double tau = 0.2;
  double total = 0.0;
  std::vector<double> per_location;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// -log softmax probability of the positive among {positive, negatives},
/// computed with max subtraction. Exact zero when the positive dominates by
/// a wide margin, never negative.
inline double stable_nce(double z_pos, const std::vector<double>& z_neg) {
  double m = z_pos;
  for (double z : z_neg) m = std::max(m, z);
  double denom = std::exp(z_pos - m);
  for (double z : z_neg) denom += std::exp(z - m);
  return (m - z_pos) + std::log(denom);
}

// An empty list is legal: the softmax then has only the positive and every
// per-location term is exactly 0.
inline void check_negatives(const std::vector<std::vector<double>>& negatives,
                            int dim) {
  for (const auto& n : negatives) {
    if (static_cast<int>(n.size()) != dim) {
      throw std::invalid_argument(
          "contrastive loss: negative dimension mismatch");
    }
    for (double v : n) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("contrastive loss: non-finite negative");
      }
    }
  }
}

}  // namespace detail

/// Dense contrastive loss. Queries and keys are pooled grids of the same
/// shape and dimension; `corr` assigns each query its positive key and the
/// negative vectors are shared across locations. Unmatched queries are
/// excluded; the mean divides by the matched count.
inline DenseLossResult dense_contrastive_loss(
    const FeatureGrid& queries, const FeatureGrid& keys,
    const CorrespondenceMap& corr,
    const std::vector<std::vector<double>>& negatives, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("dense_contrastive_loss: tau must be positive");
  }
  if (queries.dim() != keys.dim()) {
    throw std::invalid_argument("dense_contrastive_loss: dimension mismatch");
  }
  if (corr.n_query() != queries.cells() || corr.n_key() != keys.cells()) {
    throw std::invalid_argument(
        "dense_contrastive_loss: correspondence shape mismatch");
  }
  detail::check_negatives(negatives, queries.dim());

  DenseLossResult out;
  std::vector<double> z_neg(negatives.size());
  for (int q = 0; q < queries.cells(); ++q) {
    const auto& entry = corr.entry(q);
    if (!entry) continue;
    const auto r = queries.cell(q);
    const double z_pos = detail::dot(r, keys.cell(entry->key)) / tau;
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      z_neg[k] = detail::dot(r, negatives[k]) / tau;
    }
    out.per_location.push_back(detail::stable_nce(z_pos, z_neg));
  }
  out.matched_count = static_cast<int>(out.per_location.size());
  if (out.matched_count == 0) {
    throw DegenerateInputError(
        "dense_contrastive_loss: no matched locations");
  }
  double sum = 0.0;
  for (double v : out.per_location) sum += v;
  out.mean = sum / out.matched_count;
  return out;
}

/// Single-vector InfoNCE for the global term.
inline double global_contrastive_loss(
    const std::vector<double>& query, const std::vector<double>& key_pos,
    const std::vector<std::vector<double>>& negatives, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("global_contrastive_loss: tau must be positive");
  }
  if (query.size() != key_pos.size()) {
    throw std::invalid_argument("global_contrastive_loss: dimension mismatch");
  }
  detail::check_negatives(negatives, static_cast<int>(query.size()));
  const double z_pos = detail::dot(query, key_pos) / tau;
  std::vector<double> z_neg(negatives.size());
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    z_neg[k] = detail::dot(query, negatives[k]) / tau;
  }
  return detail::stable_nce(z_pos, z_neg);
}

/// Blend of the global and dense terms: (1 - lambda) * global + lambda * dense.
inline double total_loss(double loss_global, double loss_dense, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("total_loss: lambda outside [0, 1]");
  }
  return (1.0 - lambda) * loss_global + lambda * loss_dense;
}

inline LossTerms make_loss_terms(double l_q, const DenseLossResult& dense,
                                 double lambda, double tau) {
  LossTerms t;
  t.l_q = l_q;
  t.l_r = dense.mean;
  t.lambda = lambda;
  t.tau = tau;
  t.total = total_loss(l_q, dense.mean, lambda);
  t.per_location = dense.per_location;
  return t;
}

/// Gradient of the dense loss mean with respect to each query vector.
/// Unmatched queries get zero rows. For a matched query with softmax weights
/// p over {positive, negatives}:
///   d/dr = (sum_k p_k * t_k - t_pos) / (matched_count * tau).
inline std::vector<std::vector<double>> dense_loss_grad(
    const FeatureGrid& queries, const FeatureGrid& keys,
    const CorrespondenceMap& corr,
    const std::vector<std::vector<double>>& negatives, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("dense_loss_grad: tau must be positive");
  }
  if (queries.dim() != keys.dim()) {
    throw std::invalid_argument("dense_loss_grad: dimension mismatch");
  }
  if (corr.n_query() != queries.cells() || corr.n_key() != keys.cells()) {
    throw std::invalid_argument(
        "dense_loss_grad: correspondence shape mismatch");
  }
  detail::check_negatives(negatives, queries.dim());
  const int matched = corr.matched_count();
  if (matched == 0) {
    throw DegenerateInputError("dense_loss_grad: no matched locations");
  }

  const int dim = queries.dim();
  std::vector<std::vector<double>> grads(
      static_cast<std::size_t>(queries.cells()),
      std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  std::vector<double> z(negatives.size() + 1);
  for (int q = 0; q < queries.cells(); ++q) {
    const auto& entry = corr.entry(q);
    if (!entry) continue;
    const auto r = queries.cell(q);
    const auto t_pos = keys.cell(entry->key);
    z[0] = detail::dot(r, t_pos) / tau;
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      z[k + 1] = detail::dot(r, negatives[k]) / tau;
    }
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - m);

    auto& g = grads[static_cast<std::size_t>(q)];
    const double scale = 1.0 / (static_cast<double>(matched) * tau);
    const double p_pos = std::exp(z[0] - m) / denom;
    for (int d = 0; d < dim; ++d) g[static_cast<std::size_t>(d)] =
        scale * (p_pos - 1.0) * t_pos[static_cast<std::size_t>(d)];
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      const double p = std::exp(z[k + 1] - m) / denom;
      for (int d = 0; d < dim; ++d) {
        g[static_cast<std::size_t>(d)] +=
            scale * p * negatives[k][static_cast<std::size_t>(d)];
      }
    }
  }
  return grads;
}

/// Central-difference check of an analytic gradient. Returns the largest
/// relative error max_i |fd_i - g_i| / max(1, |g_i|). Throws on non-finite
/// probe evaluations.
inline double finite_diff_check(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> point, const std::vector<double>& analytic_grad,
    double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("finite_diff_check: eps must be positive");
  }
  if (point.size() != analytic_grad.size()) {
    throw std::invalid_argument("finite_diff_check: size mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite probe value");
    }
    const double fd = (up - down) / (2.0 * eps);
    const double g = analytic_grad[i];
    const double rel = std::abs(fd - g) / std::max(1.0, std::abs(g));
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Checks dense_loss_grad against central differences over the flattened
/// query data. Returns the worst relative error.
inline double dense_loss_grad_check(
    const FeatureGrid& queries, const FeatureGrid& keys,
    const CorrespondenceMap& corr,
    const std::vector<std::vector<double>>& negatives, double tau,
    double eps) {
  const auto grads = dense_loss_grad(queries, keys, corr, negatives, tau);
  std::vector<double> flat_grad;
  flat_grad.reserve(static_cast<std::size_t>(queries.cells()) *
                    queries.dim());
  for (const auto& g : grads) {
    flat_grad.insert(flat_grad.end(), g.begin(), g.end());
  }
  std::vector<double> point(queries.data().begin(), queries.data().end());
  const int h = queries.height();
  const int w = queries.width();
  const int dim = queries.dim();
  auto f = [&](const std::vector<double>& x) {
    const FeatureGrid probe = FeatureGrid::from_data(h, w, dim, x);
    return dense_contrastive_loss(probe, keys, corr, negatives, tau).mean;
  };
  return finite_diff_check(f, point, flat_grad, eps);
}

}  // namespace densematch
