#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "densematch/contrastive_loss.hpp"
#include "densematch/errors.hpp"
#include "densematch/feature_grid.hpp"
#include "densematch/matchers.hpp"
#include "densematch/rng.hpp"

namespace dm = densematch;

namespace {

dm::FeatureGrid unit_grid(std::mt19937_64& rng, int h, int w, int dim) {
  dm::FeatureGrid g(h, w, dim);
  for (int i = 0; i < g.cells(); ++i) {
    const auto v = dm::random_unit_vector(rng, dim);
    std::copy(v.begin(), v.end(), g.cell(i).begin());
  }
  g.l2_normalize();
  return g;
}

std::vector<std::vector<double>> unit_negatives(std::mt19937_64& rng, int n,
                                                int dim) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n; ++i) out.push_back(dm::random_unit_vector(rng, dim));
  return out;
}

dm::CorrespondenceMap identity_corr(int n) {
  dm::CorrespondenceMap corr(n, n);
  for (int i = 0; i < n; ++i) corr.set(i, dm::Match{i, 1.0});
  return corr;
}

// Direct enumeration of the loss without stabilization.
double naive_dense_loss(const dm::FeatureGrid& q, const dm::FeatureGrid& k,
                        const dm::CorrespondenceMap& corr,
                        const std::vector<std::vector<double>>& negatives,
                        double tau) {
  double sum = 0.0;
  int matched = 0;
  for (int i = 0; i < q.cells(); ++i) {
    if (!corr.entry(i)) continue;
    ++matched;
    const auto r = q.cell(i);
    const auto t = k.cell(corr.entry(i)->key);
    double zp = 0.0;
    for (int d = 0; d < q.dim(); ++d) zp += r[d] * t[d];
    double denom = std::exp(zp / tau);
    for (const auto& n : negatives) {
      double zn = 0.0;
      for (int d = 0; d < q.dim(); ++d) zn += r[d] * n[static_cast<std::size_t>(d)];
      denom += std::exp(zn / tau);
    }
    sum += -std::log(std::exp(zp / tau) / denom);
  }
  return sum / matched;
}

// 1x1 grids whose dot products realize chosen positive/negative logits
// (at tau = 1).
struct LogitFixture {
  dm::FeatureGrid q{1, 1, 2};
  dm::FeatureGrid k{1, 1, 2};
  std::vector<std::vector<double>> negs;
  dm::CorrespondenceMap corr{1, 1};

  LogitFixture(double z_pos, std::vector<double> z_negs) {
    q.cell(0)[0] = 1.0;
    k.cell(0)[0] = z_pos;
    for (double z : z_negs) negs.push_back({z, 0.0});
    corr.set(0, dm::Match{0, 1.0});
  }
};

}  // namespace

TEST(DenseLoss, SinglePairFixture) {
  const LogitFixture fx(1.0, {0.0});
  const auto res =
      dm::dense_contrastive_loss(fx.q, fx.k, fx.corr, fx.negs, 1.0);
  EXPECT_NEAR(res.mean, std::log(1.0 + std::exp(-1.0)), 1e-12);
  ASSERT_EQ(res.per_location.size(), 1u);
  EXPECT_EQ(res.matched_count, 1);
}

TEST(DenseLoss, NoNegativesGivesZero) {
  auto rng = dm::make_engine(127);
  const auto q = unit_grid(rng, 2, 2, 8);
  const auto k = unit_grid(rng, 2, 2, 8);
  const auto res =
      dm::dense_contrastive_loss(q, k, identity_corr(4), {}, 0.2);
  EXPECT_EQ(res.mean, 0.0);
  for (double v : res.per_location) EXPECT_EQ(v, 0.0);
}

TEST(DenseLoss, MatchesNaiveEnumeration) {
  auto rng = dm::make_engine(131);
  for (double tau : {0.1, 0.2, 1.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto q = unit_grid(rng, 3, 3, 16);
      const auto k = unit_grid(rng, 3, 3, 16);
      const auto negs = unit_negatives(rng, 8, 16);
      const auto corr = dm::argmax_match(dm::similarity_matrix(q, k));
      const auto res = dm::dense_contrastive_loss(q, k, corr, negs, tau);
      EXPECT_NEAR(res.mean, naive_dense_loss(q, k, corr, negs, tau), 1e-10);
    }
  }
}

TEST(DenseLoss, UnmatchedQueriesExcludedFromDivisor) {
  auto rng = dm::make_engine(137);
  const auto q = unit_grid(rng, 2, 2, 8);
  const auto k = unit_grid(rng, 2, 2, 8);
  const auto negs = unit_negatives(rng, 4, 8);
  dm::CorrespondenceMap partial(4, 4);
  partial.set(0, dm::Match{1, 1.0});
  partial.set(3, dm::Match{2, 1.0});
  const auto res = dm::dense_contrastive_loss(q, k, partial, negs, 0.5);
  EXPECT_EQ(res.matched_count, 2);
  ASSERT_EQ(res.per_location.size(), 2u);
  EXPECT_NEAR(res.mean, (res.per_location[0] + res.per_location[1]) / 2.0,
              1e-15);
}

TEST(DenseLoss, EmptyMatchedSetThrows) {
  auto rng = dm::make_engine(139);
  const auto q = unit_grid(rng, 2, 2, 8);
  const auto k = unit_grid(rng, 2, 2, 8);
  const dm::CorrespondenceMap empty(4, 4);
  EXPECT_THROW(
      (void)dm::dense_contrastive_loss(q, k, empty, unit_negatives(rng, 2, 8),
                                       0.2),
      dm::DegenerateInputError);
}

TEST(DenseLoss, BadTauThrows) {
  const LogitFixture fx(1.0, {0.0});
  EXPECT_THROW(
      (void)dm::dense_contrastive_loss(fx.q, fx.k, fx.corr, fx.negs, 0.0),
      std::invalid_argument);
  EXPECT_THROW(
      (void)dm::dense_contrastive_loss(fx.q, fx.k, fx.corr, fx.negs, -1.0),
      std::invalid_argument);
}

TEST(DenseLoss, MismatchedNegativeDimThrows) {
  const LogitFixture fx(1.0, {0.0});
  const std::vector<std::vector<double>> bad{{1.0, 0.0, 0.0}};
  EXPECT_THROW(
      (void)dm::dense_contrastive_loss(fx.q, fx.k, fx.corr, bad, 1.0),
      std::invalid_argument);
}

TEST(DenseLoss, NegativePermutationInvariance) {
  auto rng = dm::make_engine(149);
  const auto q = unit_grid(rng, 3, 3, 12);
  const auto k = unit_grid(rng, 3, 3, 12);
  auto negs = unit_negatives(rng, 10, 12);
  const auto base =
      dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.2);
  std::shuffle(negs.begin(), negs.end(), rng);
  const auto shuffled =
      dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.2);
  EXPECT_NEAR(base.mean, shuffled.mean, 1e-12);
  for (std::size_t i = 0; i < base.per_location.size(); ++i) {
    EXPECT_NEAR(base.per_location[i], shuffled.per_location[i], 1e-12);
  }
}

TEST(DenseLoss, MonotoneInLogits) {
  const double base =
      dm::dense_contrastive_loss(LogitFixture(0.5, {0.2, -0.1}).q,
                                 LogitFixture(0.5, {0.2, -0.1}).k,
                                 identity_corr(1),
                                 LogitFixture(0.5, {0.2, -0.1}).negs, 1.0)
          .mean;
  const LogitFixture higher_pos(0.7, {0.2, -0.1});
  EXPECT_LT(dm::dense_contrastive_loss(higher_pos.q, higher_pos.k,
                                       higher_pos.corr, higher_pos.negs, 1.0)
                .mean,
            base);
  const LogitFixture higher_neg(0.5, {0.4, -0.1});
  EXPECT_GT(dm::dense_contrastive_loss(higher_neg.q, higher_neg.k,
                                       higher_neg.corr, higher_neg.negs, 1.0)
                .mean,
            base);
}

TEST(DenseLoss, PerLocationTermsNonNegative) {
  auto rng = dm::make_engine(151);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = unit_grid(rng, 3, 3, 8);
    const auto k = unit_grid(rng, 3, 3, 8);
    const auto negs = unit_negatives(rng, 6, 8);
    const auto res =
        dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.1);
    for (double v : res.per_location) EXPECT_GE(v, 0.0);
  }
}

TEST(DenseLoss, TauScalingConsistency) {
  auto rng = dm::make_engine(157);
  auto q = unit_grid(rng, 3, 3, 8);
  const auto k = unit_grid(rng, 3, 3, 8);
  const auto negs = unit_negatives(rng, 6, 8);
  const auto base =
      dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.2);
  const double c = 7.3;
  for (double& x : q.data()) x *= c;
  const auto scaled =
      dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.2 * c);
  for (std::size_t i = 0; i < base.per_location.size(); ++i) {
    EXPECT_NEAR(base.per_location[i], scaled.per_location[i], 1e-12);
  }
}

TEST(GlobalLoss, NoNegativesGivesZero) {
  EXPECT_EQ(dm::global_contrastive_loss({1.0, 0.0}, {0.5, 0.5}, {}, 0.2),
            0.0);
}

TEST(GlobalLoss, EqualLogitsGiveLogTwo) {
  const std::vector<double> q{1.0, 0.0};
  const std::vector<double> k{1.0, 0.0};
  const std::vector<std::vector<double>> negs{{1.0, 0.0}};
  EXPECT_NEAR(dm::global_contrastive_loss(q, k, negs, 1.0), std::log(2.0),
              1e-12);
}

TEST(GlobalLoss, MatchesNaiveEnumeration) {
  auto rng = dm::make_engine(163);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = dm::random_unit_vector(rng, 16);
    const auto k = dm::random_unit_vector(rng, 16);
    const auto negs = unit_negatives(rng, 7, 16);
    const double tau = 0.2;
    double zp = 0.0;
    for (int d = 0; d < 16; ++d) zp += q[static_cast<std::size_t>(d)] * k[static_cast<std::size_t>(d)];
    double denom = std::exp(zp / tau);
    for (const auto& n : negs) {
      double zn = 0.0;
      for (int d = 0; d < 16; ++d) zn += q[static_cast<std::size_t>(d)] * n[static_cast<std::size_t>(d)];
      denom += std::exp(zn / tau);
    }
    const double naive = -std::log(std::exp(zp / tau) / denom);
    EXPECT_NEAR(dm::global_contrastive_loss(q, k, negs, tau), naive, 1e-10);
  }
}

TEST(TotalLoss, BlendAndBoundaries) {
  EXPECT_EQ(dm::total_loss(2.0, 4.0, 0.5), 3.0);
  EXPECT_EQ(dm::total_loss(1.7, 9.9, 0.0), 1.7);
  EXPECT_EQ(dm::total_loss(1.7, 9.9, 1.0), 9.9);
  EXPECT_THROW((void)dm::total_loss(1.0, 1.0, -0.1), std::invalid_argument);
  EXPECT_THROW((void)dm::total_loss(1.0, 1.0, 1.5), std::invalid_argument);
}

TEST(LossTermsType, BlendAndMeanInvariants) {
  auto rng = dm::make_engine(167);
  const auto q = unit_grid(rng, 3, 3, 8);
  const auto k = unit_grid(rng, 3, 3, 8);
  const auto negs = unit_negatives(rng, 5, 8);
  const auto dense =
      dm::dense_contrastive_loss(q, k, identity_corr(9), negs, 0.2);
  const auto terms = dm::make_loss_terms(0.37, dense, 0.5, 0.2);
  EXPECT_NEAR(terms.total, (1.0 - terms.lambda) * terms.l_q +
                               terms.lambda * terms.l_r,
              1e-12);
  double mean = 0.0;
  for (double v : terms.per_location) mean += v;
  mean /= static_cast<double>(terms.per_location.size());
  EXPECT_NEAR(terms.l_r, mean, 1e-12);
}

TEST(DenseGrad, NoNegativesGivesZeroGradient) {
  auto rng = dm::make_engine(173);
  const auto q = unit_grid(rng, 2, 2, 6);
  const auto k = unit_grid(rng, 2, 2, 6);
  const auto grads = dm::dense_loss_grad(q, k, identity_corr(4), {}, 0.2);
  for (const auto& g : grads)
    for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(DenseGrad, PositiveEqualsNegativeCancels) {
  dm::FeatureGrid q(1, 1, 3);
  q.cell(0)[0] = 1.0;
  dm::FeatureGrid k(1, 1, 3);
  k.cell(0)[1] = 1.0;
  const std::vector<std::vector<double>> negs{{0.0, 1.0, 0.0}};
  const auto grads =
      dm::dense_loss_grad(q, k, identity_corr(1), negs, 0.7);
  for (double v : grads[0]) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(DenseGrad, UnmatchedQueriesGetZeroRows) {
  auto rng = dm::make_engine(179);
  const auto q = unit_grid(rng, 2, 2, 6);
  const auto k = unit_grid(rng, 2, 2, 6);
  dm::CorrespondenceMap partial(4, 4);
  partial.set(2, dm::Match{0, 1.0});
  const auto grads = dm::dense_loss_grad(q, k, partial,
                                         unit_negatives(rng, 3, 6), 0.2);
  for (int i : {0, 1, 3})
    for (double v : grads[static_cast<std::size_t>(i)]) EXPECT_EQ(v, 0.0);
  double norm = 0.0;
  for (double v : grads[2]) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(DenseGrad, FiniteDifferenceAgreement) {
  auto rng = dm::make_engine(181);
  for (double tau : {0.1, 0.2, 1.0}) {
    for (int trial = 0; trial < 4; ++trial) {
      const auto q = unit_grid(rng, 3, 3, 8);
      const auto k = unit_grid(rng, 3, 3, 8);
      const auto negs = unit_negatives(rng, 6, 8);
      const auto corr = dm::argmax_match(dm::similarity_matrix(q, k));
      const double err =
          dm::dense_loss_grad_check(q, k, corr, negs, tau, 1e-5);
      EXPECT_LT(err, 1e-6);
    }
  }
}

TEST(FiniteDiff, QuadraticCalibration) {
  const std::vector<double> point{0.3, -1.2, 2.0};
  const std::vector<double> coeff{1.0, 0.5, -2.0};
  auto f = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += coeff[i] * x[i] * x[i];
    return s;
  };
  std::vector<double> grad(3);
  for (std::size_t i = 0; i < 3; ++i) grad[i] = 2.0 * coeff[i] * point[i];
  EXPECT_LT(dm::finite_diff_check(f, point, grad, 1e-5), 1e-9);
}

TEST(FiniteDiff, LargeStepHasLargerError) {
  auto rng = dm::make_engine(191);
  const auto q = unit_grid(rng, 2, 2, 6);
  const auto k = unit_grid(rng, 2, 2, 6);
  const auto negs = unit_negatives(rng, 5, 6);
  const auto corr = identity_corr(4);
  const double fine = dm::dense_loss_grad_check(q, k, corr, negs, 0.2, 1e-5);
  const double coarse = dm::dense_loss_grad_check(q, k, corr, negs, 0.2, 1e-1);
  EXPECT_GT(coarse, fine);
}

TEST(FiniteDiff, NonFiniteProbeThrows) {
  auto f = [](const std::vector<double>& x) { return std::log(x[0]); };
  EXPECT_THROW((void)dm::finite_diff_check(f, {1e-7}, {1e7}, 1e-5),
               dm::NumericError);
}

TEST(FiniteDiff, RejectsBadArguments) {
  auto f = [](const std::vector<double>& x) { return x[0]; };
  EXPECT_THROW((void)dm::finite_diff_check(f, {1.0}, {1.0}, 0.0),
               std::invalid_argument);
  EXPECT_THROW((void)dm::finite_diff_check(f, {1.0}, {1.0, 2.0}, 1e-5),
               std::invalid_argument);
}
