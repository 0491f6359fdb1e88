#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bank/spectral_mixture.hpp"
#include "support.hpp"

using namespace bank;

namespace {

ComponentParams scalar_component(double mean, double var) {
  return ComponentParams(Vector::Constant(1, mean), Matrix::Constant(1, 1, var));
}

SpectralState two_frequency_state() {
  SpectralState s;
  Matrix w(2, 1);
  w << 0.0, 0.0;
  s.w = FrequencyMatrix(w);
  s.z = {0, 0};
  s.counts = {2};
  s.components = {scalar_component(0.0, 1.0)};
  s.alpha = 1.0;
  return s;
}

}  // namespace

TEST(CrpDistribution, HandComputedTwoCase) {
  const SpectralState s = two_frequency_state();
  const auto probs = crp_probabilities(0, s, scalar_component(10.0, 1.0));
  ASSERT_EQ(probs.size(), 2u);
  const double existing = 0.5 * std::exp(-0.5 * 0.0) / std::sqrt(2.0 * std::numbers::pi);
  const double fresh = 0.5 * std::exp(-50.0) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(existing, 0.19947, 1e-5);
  EXPECT_NEAR(probs[0], existing / (existing + fresh), 1e-15);
  EXPECT_NEAR(probs[1], fresh / (existing + fresh), 1e-30);
}

TEST(CrpDistribution, TinyAlphaSuppressesNewComponent) {
  SpectralState s = two_frequency_state();
  s.alpha = 1e-12;
  const auto probs = crp_probabilities(1, s, scalar_component(0.0, 1.0));
  EXPECT_LT(probs.back(), 1e-10);
}

TEST(CrpDistribution, SymmetricComponentsAreEquallyLikely) {
  SpectralState s;
  Matrix w(5, 1);
  w << 0.3, 1.0, -1.0, 2.0, -2.0;
  s.w = FrequencyMatrix(w);
  s.z = {0, 0, 0, 1, 1};
  s.counts = {3, 2};
  s.components = {scalar_component(0.0, 1.0), scalar_component(0.0, 1.0)};
  // Frequency 0 leaves component 0, so both have two other members.
  const auto probs = crp_probabilities(0, s, scalar_component(5.0, 1.0));
  EXPECT_NEAR(probs[0], probs[1], 1e-15);
  double total = 0.0;
  for (double p : probs) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(CrpDistribution, SumsToOneOnRandomStates) {
  Rng rng(3);
  const NiwPrior prior = NiwParams::defaults(2);
  for (int rep = 0; rep < 200; ++rep) {
    SpectralState s;
    s.w = FrequencyMatrix(bank::testing::random_matrix(rng, 8, 2, 2.0));
    s.alpha = 0.5 + rng.uniform();
    const int k = 1 + static_cast<int>(rng.below(3));
    for (int c = 0; c < k; ++c) s.components.push_back(sample_component_params(prior, rng));
    s.counts.assign(static_cast<std::size_t>(k), 0);
    for (Index j = 0; j < 8; ++j) {
      const int label = j < k ? static_cast<int>(j) : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      s.z.push_back(label);
      ++s.counts[static_cast<std::size_t>(label)];
    }
    const CrpDistribution d = crp_assignment_distribution(static_cast<Index>(rng.below(8)), s, prior, rng);
    double total = 0.0;
    for (double p : d.probabilities) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(GibbsAssignments, SingleFrequencyGetsFreshComponent) {
  Rng rng(1);
  SpectralState s;
  s.w = FrequencyMatrix(Matrix::Constant(1, 1, 0.7));
  s.z = {0};
  s.counts = {1};
  s.components = {scalar_component(0.0, 1.0)};
  gibbs_sample_assignments(s, NiwParams::defaults(1), rng);
  EXPECT_EQ(s.num_components(), 1);
  EXPECT_EQ(s.counts, std::vector<int>{1});
  s.validate();
}

TEST(GibbsAssignments, SeparatedClustersAreRecovered) {
  int correct = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Matrix w(100, 1);
    for (Index j = 0; j < 100; ++j) w(j, 0) = (j < 50 ? -20.0 : 20.0) + 0.1 * rng.normal();
    SpectralState s;
    s.w = FrequencyMatrix(w);
    s.z.assign(100, 0);
    s.counts = {100};
    s.alpha = 1.0;
    // Prior broad enough on the scale of the data for fresh components to land near either cluster.
    const NiwPrior prior{Vector::Zero(1), 0.01, Matrix::Constant(1, 1, 100.0), 3.0};
    s.components = {sample_component_params(niw_posterior(prior, w), rng)};
    for (int sweep = 0; sweep < 50; ++sweep) {
      gibbs_sample_assignments(s, prior, rng);
      resample_components(s, prior, rng);
    }
    bool ok = s.num_components() == 2;
    for (Index j = 0; ok && j < 100; ++j) {
      ok = s.z[static_cast<std::size_t>(j)] == s.z[j < 50 ? 0 : 50];
    }
    ok = ok && s.z[0] != s.z[50];
    correct += ok ? 1 : 0;
  }
  EXPECT_GE(correct, 18);
}

TEST(GibbsAssignments, InvariantsOnRandomStates) {
  Rng rng(17);
  for (int rep = 0; rep < 1000; ++rep) {
    const Index m = 1 + static_cast<Index>(rng.below(12));
    const Index d = 1 + static_cast<Index>(rng.below(2));
    const NiwPrior prior = NiwParams::defaults(d);
    SpectralState s;
    s.w = FrequencyMatrix(bank::testing::random_matrix(rng, m, d, 3.0));
    s.alpha = 0.1 + 2.0 * rng.uniform();
    s.z.assign(static_cast<std::size_t>(m), 0);
    s.counts = {static_cast<int>(m)};
    s.components = {sample_component_params(prior, rng)};
    gibbs_sample_assignments(s, prior, rng);
    ASSERT_NO_THROW(s.validate());
    int total = 0;
    for (int c : s.counts) total += c;
    EXPECT_EQ(total, m);
  }
}

TEST(NiwPosterior, ObservationAtPriorMean) {
  NiwPrior prior{Vector::Constant(2, 0.5), 2.0, Matrix::Identity(2, 2) * 3.0, 5.0};
  const NiwPosterior post = niw_posterior(prior, Vector::Constant(2, 0.5).transpose());
  EXPECT_NEAR((post.mean - prior.mean).norm(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(post.kappa, 3.0);
  EXPECT_DOUBLE_EQ(post.dof, 6.0);
  EXPECT_NEAR((post.scale - prior.scale).norm(), 0.0, 1e-15);
}

TEST(NiwPosterior, HandArithmetic) {
  const NiwPrior prior{Vector::Zero(1), 1.0, Matrix::Identity(1, 1), 3.0};
  Matrix obs(2, 1);
  obs << 1.0, 3.0;
  const NiwPosterior post = niw_posterior(prior, obs);
  EXPECT_NEAR(post.scale(0, 0), 17.0 / 3.0, 1e-14);
  EXPECT_NEAR(post.mean(0), 4.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(post.kappa, 3.0);
  EXPECT_DOUBLE_EQ(post.dof, 5.0);
}

TEST(NiwPosterior, TranslationEquivariance) {
  Rng rng(5);
  const Matrix obs = bank::testing::random_matrix(rng, 7, 3);
  const Vector c = bank::testing::random_vector(rng, 3, 4.0);
  NiwPrior prior = NiwParams::defaults(3);
  prior.mean = bank::testing::random_vector(rng, 3);
  NiwPrior shifted = prior;
  shifted.mean += c;
  const NiwPosterior a = niw_posterior(prior, obs);
  const NiwPosterior b = niw_posterior(shifted, obs.rowwise() + c.transpose());
  EXPECT_NEAR((b.mean - a.mean - c).norm(), 0.0, 1e-12);
  EXPECT_NEAR((b.scale - a.scale).norm(), 0.0, 1e-11);
}

TEST(NiwPosterior, SequentialBatchesMatchSingleBatch) {
  Rng rng(8);
  const Matrix obs = bank::testing::random_matrix(rng, 20, 2, 3.0);
  const NiwPrior prior = NiwParams::defaults(2);
  const NiwPosterior once = niw_posterior(prior, obs);
  const NiwPosterior twice = niw_posterior(niw_posterior(prior, obs.topRows(8)), obs.bottomRows(12));
  EXPECT_NEAR((once.mean - twice.mean).norm(), 0.0, 1e-9);
  EXPECT_NEAR((once.scale - twice.scale).norm(), 0.0, 1e-9);
  EXPECT_NEAR(once.kappa, twice.kappa, 1e-12);
  EXPECT_NEAR(once.dof, twice.dof, 1e-12);
}

TEST(SampleComponentParams, InverseWishartMean) {
  Rng rng(12);
  const NiwParams post{Vector::Zero(1), 1.0, Matrix::Constant(1, 1, 4.0), 7.0};
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) sum += sample_component_params(post, rng).cov()(0, 0);
  EXPECT_NEAR(sum / 100000.0, 0.8, 0.03 * 0.8);
}

TEST(SampleComponentParams, MeanDraws) {
  Rng rng(13);
  const NiwParams post{Vector::Constant(1, 2.0), 4.0, Matrix::Constant(1, 1, 4.0), 7.0};
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) sum += sample_component_params(post, rng).mean()(0);
  EXPECT_NEAR(sum / 100000.0, 2.0, 0.02 * std::sqrt(4.0 / 4.0));
}

TEST(SampleComponentParams, HugeKappaPinsMean) {
  Rng rng(14);
  const NiwParams post{Vector::Constant(2, -1.0), 1e12, Matrix::Identity(2, 2), 5.0};
  const ComponentParams c = sample_component_params(post, rng);
  EXPECT_LT((c.mean() - post.mean).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SampleComponentParams, DegenerateScaleThrows) {
  Rng rng(1);
  const NiwParams post{Vector::Zero(2), 1.0, Matrix::Zero(2, 2), 5.0};
  EXPECT_THROW(sample_component_params(post, rng), InvalidCovarianceError);
}

TEST(StateToMixtureSpec, WeightsAreOccupancies) {
  SpectralState s;
  s.w = FrequencyMatrix(Matrix::Zero(10, 1));
  s.z = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  s.counts = {3, 7};
  s.components = {scalar_component(0.0, 1.0), scalar_component(2.0, 0.5)};
  const GaussianMixtureSpec spec = state_to_mixture_spec(s);
  EXPECT_DOUBLE_EQ(spec.components[0].weight, 0.3);
  EXPECT_DOUBLE_EQ(spec.components[1].weight, 0.7);
  EXPECT_NO_THROW(spec.validate());

  SpectralState one;
  one.w = FrequencyMatrix(Matrix::Zero(10, 1));
  one.z.assign(10, 0);
  one.counts = {10};
  one.components = {scalar_component(0.0, 1.0)};
  EXPECT_DOUBLE_EQ(state_to_mixture_spec(one).components[0].weight, 1.0);
}

TEST(StateToMixtureSpec, RoundTripThroughSampling) {
  GaussianMixtureSpec truth;
  truth.components.push_back({0.35, Vector::Constant(1, -8.0), Matrix::Constant(1, 1, 1.0)});
  truth.components.push_back({0.65, Vector::Constant(1, 8.0), Matrix::Constant(1, 1, 1.0)});
  Rng rng(21);
  const FrequencyMatrix w = sample_frequencies(truth, 100000, rng);
  SpectralState s;
  s.w = w;
  s.counts = {0, 0};
  for (Index j = 0; j < w.count(); ++j) {
    const int label = std::abs(w.row(j)(0) + 8.0) < std::abs(w.row(j)(0) - 8.0) ? 0 : 1;
    s.z.push_back(label);
    ++s.counts[static_cast<std::size_t>(label)];
  }
  s.components = {scalar_component(-8.0, 1.0), scalar_component(8.0, 1.0)};
  const GaussianMixtureSpec spec = state_to_mixture_spec(s);
  EXPECT_NEAR(spec.components[0].weight, 0.35, 0.01);
  EXPECT_NEAR(spec.components[1].weight, 0.65, 0.01);
}

TEST(CrpPrior, ExchangeableOverInsertionOrders) {
  const std::vector<int> labels{0, 0, 1, 2};
  std::vector<int> order{0, 1, 2, 3};
  const double reference = crp_log_prior(labels, 1.3);
  do {
    std::vector<int> permuted;
    for (int i : order) permuted.push_back(labels[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(crp_log_prior(permuted, 1.3), reference, 1e-12);
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST(SpectralState, DetachCompactsLabels) {
  SpectralState s;
  s.w = FrequencyMatrix(Matrix::Zero(3, 1));
  s.z = {0, 1, 2};
  s.counts = {1, 1, 1};
  s.components = {scalar_component(0.0, 1.0), scalar_component(1.0, 1.0), scalar_component(2.0, 1.0)};
  s.detach(1);
  EXPECT_EQ(s.num_components(), 2);
  EXPECT_EQ(s.z, (std::vector<int>{0, -1, 1}));
  EXPECT_DOUBLE_EQ(s.components[1].mean()(0), 2.0);
  s.attach(1, 0);
  EXPECT_NO_THROW(s.validate());
}
