#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "spinlat/state_engineering.hpp"

using namespace spinlat;

namespace {

const SequenceContext& context() {
  static const SequenceContext ctx{LatticeSetup{}};
  return ctx;
}

SequenceState mixed_state(int levels) {
  SequenceState s;
  s.levels = levels;
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(3 * levels), b = a;
  a[0] = 0.6;
  a[levels + 2] = std::complex<double>(0.0, 0.5);
  b[3] = 0.4;
  b[2 * levels + 1] = 0.3;
  s.components = {a, b};
  return s;
}

Eigen::VectorXd populations(const SequenceState& s) {
  return s.density().rho.diagonal().real();
}

}  // namespace

TEST(StateEngineering, EffectiveEfficiency) {
  EXPECT_NEAR(effective_efficiency(0.7, 3), 0.973, 1e-12);
  for (double f : {0.1, 0.5, 0.9}) EXPECT_DOUBLE_EQ(effective_efficiency(f, 1), f);
  for (int n = 1; n < 6; ++n) {
    EXPECT_GT(effective_efficiency(0.6, n + 1), effective_efficiency(0.6, n));
    EXPECT_GT(effective_efficiency(0.6 + 0.05 * n, 3), effective_efficiency(0.55 + 0.05 * n, 3));
  }
  EXPECT_THROW(effective_efficiency(1.2, 3), config_error);
  EXPECT_THROW(effective_efficiency(0.5, 0), config_error);
}

TEST(StateEngineering, NoiselessReconstructionIsExact) {
  const PopulationDistribution d = thermal_distribution(11.6e-6, hz_to_rad(116e3), 40);
  std::vector<double> plateaus;
  for (int n = 0; n <= 8; ++n) plateaus.push_back(filter_survival(d, n, 0.7, 3));
  const Reconstruction r = reconstruct_distribution(plateaus, effective_efficiency(0.7, 3));
  ASSERT_EQ(r.distribution.p.size(), 8u);
  for (int m = 0; m < 8; ++m) EXPECT_NEAR(r.distribution.p[m], d.p[m], 1e-12) << m;
  EXPECT_TRUE(r.warnings.empty());
  for (int n = 0; n <= 8; ++n) EXPECT_NEAR(r.cumulative[n], d.cumulative(n), 1e-12);
}

TEST(StateEngineering, KnownLossCeilingIsDividedOut) {
  PopulationDistribution d;
  d.p = {0.5, 0.3, 0.2};
  const double loss = 0.02;
  std::vector<double> plateaus;
  for (int n = 0; n <= 3; ++n) plateaus.push_back(filter_survival(d, n, 0.8, 2, loss));
  const Reconstruction known = reconstruct_distribution(plateaus, effective_efficiency(0.8, 2), std::pow(1 - loss, 2));
  const Reconstruction fitted = reconstruct_distribution(plateaus, effective_efficiency(0.8, 2), std::nullopt);
  for (int m = 0; m < 3; ++m) {
    EXPECT_NEAR(known.distribution.p[m], d.p[m], 1e-12);
    EXPECT_NEAR(fitted.distribution.p[m], d.p[m], 1e-12);  // F_3 = 1 here, so the fit is exact
  }
  EXPECT_NEAR(fitted.distribution.normalization, std::pow(1 - loss, 2), 1e-12);
}

TEST(StateEngineering, ReconstructionGuardsMonotonicity) {
  const double fe = effective_efficiency(0.7, 3);
  const double miss = 1.0 - fe;
  // cumulative 0, 0.6, 0.58: a small dip is clipped with a warning
  std::vector<double> plateaus{miss, miss + fe * 0.6, miss + fe * 0.58};
  const Reconstruction r = reconstruct_distribution(plateaus, fe);
  EXPECT_EQ(r.distribution.p[1], 0.0);
  EXPECT_EQ(r.warnings.size(), 1u);
  plateaus[2] = miss + fe * 0.3;
  EXPECT_THROW(reconstruct_distribution(plateaus, fe), config_error);
  EXPECT_THROW(reconstruct_distribution({0.5}, fe), config_error);
}

TEST(StateEngineering, MonteCarloPlateausAreSeededAndUnbiased) {
  const PopulationDistribution d = thermal_distribution(11.6e-6, hz_to_rad(116e3), 40);
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(sample_plateaus(d, 6, 0.7, 3, 100, a), sample_plateaus(d, 6, 0.7, 3, 100, b));
  std::mt19937_64 rng(9);
  std::vector<double> mean(7, 0.0);
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_plateaus(d, 6, 0.7, 3, 100, rng);
    for (int n = 0; n <= 6; ++n) mean[n] += s[n] / trials;
  }
  for (int n = 0; n <= 6; ++n) {
    const double p = filter_survival(d, n, 0.7, 3);
    EXPECT_NEAR(mean[n], p, 5.0 * std::sqrt(p * (1 - p) / (100.0 * trials)) + 1e-12) << n;
  }
}

TEST(StateEngineering, ThermalAndPoissonDistributions) {
  const PopulationDistribution d = thermal_distribution(10e-6, hz_to_rad(116e3), 200);
  EXPECT_NEAR(std::accumulate(d.p.begin(), d.p.end(), 0.0), 1.0, 1e-12);
  const double q = std::exp(-constants::hbar * hz_to_rad(116e3) / (constants::k_boltzmann * 10e-6));
  EXPECT_NEAR(mean_occupation(d.p), q / (1 - q), 1e-10);
  const auto p = poisson_distribution(1.3, 60);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(mean_occupation(p), 1.69, 1e-10);
}

TEST(StateEngineering, InstantaneousShiftPreservesPopulations) {
  const SequenceState s = mixed_state(16);
  for (ShiftMode mode : {ShiftMode::instantaneous, ShiftMode::timed}) {
    const SequenceState out = run_sequence(context(), s, {LatticeShiftStep{0.2, mode}});
    EXPECT_EQ(out.shift, 0.2);
    EXPECT_EQ(populations(out), populations(s));
  }
  EXPECT_THROW(run_sequence(context(), s, {LatticeShiftStep{0.6}, WaitStep{1e-6}}), config_error);
}

TEST(StateEngineering, WaitDephasingKeepsPopulations) {
  const SequenceState s = mixed_state(16);
  const SequenceState coherent = run_sequence(context(), s, {WaitStep{10e-6, false}});
  const SequenceState dephased = run_sequence(context(), s, {WaitStep{10e-6, true}});
  EXPECT_LT((populations(coherent) - populations(s)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((populations(dephased) - populations(s)).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::MatrixXcd rho = dephased.density().rho;
  EXPECT_LT((rho - Eigen::MatrixXcd(rho.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(std::abs(coherent.density().rho(0, 16 + 2)), 0.29);
}

TEST(StateEngineering, PushOutRemovesUpAndAux) {
  const SequenceState s = mixed_state(16);
  const DensityMatrix before = s.density();
  const DensityMatrix full = run_sequence(context(), s, {PushOutStep{1.0}}).density();
  EXPECT_NEAR(full.trace(), before.spin_population(Spin::down), 1e-14);
  const DensityMatrix half = run_sequence(context(), s, {PushOutStep{0.5}}).density();
  EXPECT_NEAR(half.spin_population(Spin::up), 0.5 * before.spin_population(Spin::up), 1e-14);
  EXPECT_NEAR(half.spin_population(Spin::down), before.spin_population(Spin::down), 1e-14);
  EXPECT_THROW(run_sequence(context(), s, {PushOutStep{1.5}}), config_error);
}

TEST(StateEngineering, RepumpBranchesFollowBranchingRatios) {
  const int l = 16;
  const SequenceState s = sequence_state(SpinMotionState::basis(l, Spin::down, 0, 3), 0.03);
  const DensityMatrix all = run_sequence(context(), s, {RepumpStep{false}}).density();
  const BranchingRatios b;
  EXPECT_NEAR(all.spin_population(Spin::up), b.up, 1e-8);
  EXPECT_NEAR(all.spin_population(Spin::aux), b.aux, 1e-6);
  EXPECT_NEAR(all.spin_population(Spin::down), b.down, 1e-8);
  const DensityMatrix up = run_sequence(context(), s, {RepumpStep{true}}).density();
  EXPECT_NEAR(up.trace(), b.up, 1e-8);
}

TEST(StateEngineering, ShiftSearchHelpers) {
  const SequenceContext& ctx = context();
  const double best = coupling_maximizing_shift(ctx, 0, 2);
  const double v = std::abs(transition_overlap(ctx, best, 0, 2));
  EXPECT_GE(v, std::abs(transition_overlap(ctx, best - 2e-3, 0, 2)));
  EXPECT_GE(v, std::abs(transition_overlap(ctx, best + 2e-3, 0, 2)));
  const double zero = first_zero_shift(ctx, 2, 2);
  EXPECT_LT(std::abs(transition_overlap(ctx, zero, 2, 2)), 1e-6);
  EXPECT_GT(zero, 0.0);
  EXPECT_LT(zero, best);
}

TEST(StateEngineering, FockPreparationReachesTarget) {
  for (int m : {0, 3}) {
    const PreparationResult r = prepare_fock(context(), m);
    EXPECT_GE(r.fidelity, 0.98) << m;
    EXPECT_NEAR(r.rho.trace(), 1.0, 1e-9);
  }
}

TEST(StateEngineering, SuperpositionPopulationsFollowPulseArea) {
  for (double area : {0.3, 0.7}) {
    const SuperpositionResult r = prepare_superposition(context(), area);
    const double expected = std::pow(std::sin(0.5 * area * pi), 2);
    EXPECT_NEAR(r.p2, expected, 0.01) << area;
    EXPECT_NEAR(r.p0 + r.p2, 1.0, 2e-3) << area;  // only off-resonant leakage
  }
}

TEST(StateEngineering, CoherentStateMeanFollowsDisplacement) {
  const SequenceContext& ctx = context();
  for (double eta : {0.2, 0.35, 0.5}) {
    const CoherentResult r = prepare_coherent(ctx, 2.0 * ctx.oscillator_length() * eta);
    EXPECT_NEAR(r.alpha, eta, 1e-12);
    EXPECT_NEAR(mean_occupation(r.populations) / (eta * eta), 1.0, 0.1) << eta;
    EXPECT_NEAR(std::accumulate(r.populations.begin(), r.populations.end(), 0.0), 1.0, 1e-8);
    EXPECT_NEAR(r.up_fraction, BranchingRatios{}.up, 1e-8);
  }
}

TEST(StateEngineering, MicrowaveStepValidatesTarget) {
  MicrowaveStep mw;
  mw.n_down = 16;
  EXPECT_THROW(run_sequence(context(), mixed_state(16), {mw}), config_error);
  EXPECT_THROW(run_sequence(context(), mixed_state(8), {}), config_error);
}
