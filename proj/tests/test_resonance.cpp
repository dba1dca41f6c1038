#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "qdres/onebody.hpp"
#include "qdres/resonance.hpp"

namespace {

using namespace qdres;
constexpr double pi = std::numbers::pi;

StabilizationGrid synthetic_grid(const std::vector<double>& alphas, const std::function<double(double)>& E) {
  StabilizationGrid g;
  g.lambda = 2.0;
  g.alphas = alphas;
  for (double a : alphas) g.energies.push_back(Eigen::VectorXd::Constant(1, E(a)));
  return g;
}

std::vector<double> lorentz_samples(const LorentzianParams& p, const std::vector<double>& E) {
  std::vector<double> r;
  for (double e : E) r.push_back(p(e));
  return r;
}

TEST(Dos, LinearLevelGivesConstantDensity) {
  const auto g = synthetic_grid(linspace(2.0, 6.0, 40), [](double a) { return -0.9 + 0.05 * a; });
  const auto c = dos_from_levels(g, 1);
  ASSERT_EQ(c.samples.size(), 38u);
  for (const auto& s : c.samples) EXPECT_NEAR(s.rho, 20.0, 1e-9);
}

TEST(Dos, ArctanStepGivesLorentzian) {
  // alpha(E) = c + arctan((E - E_r) / g) / pi has dalpha/dE = Lorentzian
  const double Er = -0.8, g = 0.004, c0 = 4.0;
  const auto g1 = synthetic_grid(linspace(c0 - 0.45, c0 + 0.45, 901),
                                 [&](double a) { return Er + g * std::tan(pi * (a - c0)); });
  const auto c = dos_from_levels(g1, 1);
  for (const auto& s : c.samples) {
    const double exact = g / pi / ((s.E - Er) * (s.E - Er) + g * g);
    EXPECT_NEAR(s.rho, exact, 2e-3 * exact) << s.alpha;
    EXPECT_GE(s.rho, 0.0);
  }
}

TEST(Dos, FlatLevelSamplesDropped) {
  const auto g = synthetic_grid(linspace(2.0, 3.0, 6), [](double) { return -0.5; });
  const auto c = dos_from_levels(g, 1);
  EXPECT_TRUE(c.samples.empty());
  EXPECT_EQ(c.warnings.size(), 4u);
}

TEST(Dos, GridValidation) {
  EXPECT_THROW(dos_from_levels(synthetic_grid({2.0, 3.0}, [](double a) { return a; }), 1), Error);
  EXPECT_THROW(dos_from_levels(synthetic_grid({2.0, 3.0, 4.0}, [](double a) { return a; }), 2), Error);
  EXPECT_THROW(dos_from_levels(synthetic_grid({3.0, 2.0, 4.0}, [](double a) { return a; }), 1), Error);
}

TEST(Lorentzian, ExactRoundTrip) {
  const LorentzianParams truth{0.3, 0.05, -0.7452, 0.008};
  const auto E = linspace(-0.78, -0.71, 40);
  const auto fit = fit_lorentzian(E, lorentz_samples(truth, E));
  EXPECT_NEAR(fit.params.rho0, truth.rho0, 1e-8 * std::abs(truth.rho0));
  EXPECT_NEAR(fit.params.A, truth.A, 1e-8 * std::abs(truth.A));
  EXPECT_NEAR(fit.params.E_r, truth.E_r, 1e-8 * std::abs(truth.E_r));
  EXPECT_NEAR(fit.params.Gamma, truth.Gamma, 1e-8 * truth.Gamma);
}

TEST(Lorentzian, ChiSquaredStrictlyDecreases) {
  const LorentzianParams truth{1.0, 0.2, -0.6, 0.03};
  const auto E = linspace(-0.7, -0.5, 30);
  auto rho = lorentz_samples(truth, E);
  std::mt19937 gen(7);
  std::normal_distribution<double> n(0.0, 0.01);
  for (auto& r : rho) r *= 1.0 + n(gen);
  const auto fit = fit_lorentzian(E, rho);
  ASSERT_FALSE(fit.chi2_history.empty());
  for (std::size_t i = 1; i < fit.chi2_history.size(); ++i) EXPECT_LT(fit.chi2_history[i], fit.chi2_history[i - 1]);
  EXPECT_DOUBLE_EQ(fit.chi2_history.back(), fit.chi2);
}

TEST(Lorentzian, MonteCarloNoise) {
  const LorentzianParams truth{0.5, 0.04, -0.7452, 0.008};
  const auto E = linspace(-0.78, -0.71, 40);
  const auto clean = lorentz_samples(truth, E);
  std::normal_distribution<double> n(0.0, 0.01);
  for (unsigned seed = 0; seed < 100; ++seed) {
    std::mt19937 gen(seed);
    auto rho = clean;
    for (auto& r : rho) r *= 1.0 + n(gen);
    const auto fit = fit_lorentzian(E, rho);
    EXPECT_LT(std::abs(fit.params.E_r - truth.E_r) / std::abs(truth.E_r), 1e-3) << "seed " << seed;
  }
}

TEST(Lorentzian, Failures) {
  const auto E = linspace(-0.8, -0.7, 20);
  std::vector<double> rising;
  for (double e : E) rising.push_back(e + 1.0);
  try {
    fit_lorentzian(E, rising);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPeak);
  }
  EXPECT_THROW(fit_lorentzian({1, 2, 3}, {1, 2, 1}), Error);

  const LorentzianParams truth{0.3, 0.05, -0.75, 0.008};
  FitOptions one;
  one.max_iterations = 1;
  try {
    fit_lorentzian(E, lorentz_samples(truth, E), LorentzianParams{0.0, 0.01, -0.72, 0.05}, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FitDiverged);
  }
}

TEST(Lorentzian, EstimateFromCurve) {
  const LorentzianParams truth{0.1, 0.05, -0.75, 0.01};
  DosCurve c;
  c.level = 3;
  c.lambda = 2.2;
  const auto E = linspace(-0.8, -0.7, 25);
  for (std::size_t i = 0; i < E.size(); ++i) c.samples.push_back({2.0 + 0.1 * static_cast<double>(i), E[i], truth(E[i])});
  const auto est = lorentzian_fit(c);
  EXPECT_EQ(est.level, 3);
  EXPECT_EQ(est.method, ResonanceMethod::dos_fit);
  EXPECT_NEAR(est.E_r, -0.75, 1e-8);
  EXPECT_NEAR(est.alpha, 3.2, 1e-12);
}

TEST(BestFit, Selection) {
  ResonanceEstimate a, b, c;
  a.chi2 = 0.1, a.level = 2, a.E_r = -0.8;
  b.chi2 = 0.2, b.level = 3, b.E_r = -0.8;
  EXPECT_EQ(select_best_fit({a}).level, 2);
  EXPECT_EQ(select_best_fit({a, b}).level, 2);
  c = a;
  c.level = 4;
  EXPECT_EQ(select_best_fit({a, c}).level, 4);
  a.E_r = -1.5;
  EXPECT_EQ(select_best_fit({a, b}, -1.09).level, 3);
  try {
    select_best_fit({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllFitsFailed);
  }
  EXPECT_THROW(select_best_fit({a}, -1.09), Error);
}

TEST(Assignment, MatchesBruteForce) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 5, m = n + trial % 3;
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(m)));
    for (auto& row : cost)
      for (auto& v : row) v = u(gen);
    const auto asg = min_cost_assignment(cost);
    double got = 0.0;
    for (int i = 0; i < n; ++i) got += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(asg[static_cast<std::size_t>(i)])];
    std::vector<int> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);
    double best = 1e300;
    do {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols[static_cast<std::size_t>(i)])];
      best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    EXPECT_NEAR(got, best, 1e-12);
    std::vector<int> sorted = asg;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_TRUE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
  EXPECT_THROW(min_cost_assignment({{1.0, 2.0}, {1.0, 2.0}, {3.0, 4.0}}), Error);
}

TEST(Trajectory, SyntheticResonanceIsSelected) {
  // continuum states rotate by -2 theta about the thresholds; the resonance stays put
  const double eps = -1.09;
  const std::vector<double> th = {pi / 40, pi / 30, pi / 20, pi / 10, pi / 5};
  const std::complex<double> res(-0.8, -0.004);
  std::vector<Eigen::VectorXcd> spectra;
  for (double t : th) {
    Eigen::VectorXcd ev(7);
    ev(0) = res + std::complex<double>(1e-6 * t, 0.0);
    for (int k = 1; k <= 6; ++k) ev(k) = eps + 0.05 * k * std::polar(1.0, -2 * t);
    spectra.push_back(ev);
  }
  TrajectoryOptions o;
  o.epsilon = eps;
  const auto r = analyze_theta_trajectory(th, spectra, 2.0, o);
  EXPECT_NEAR(r.estimate.E_r, -0.8, 1e-5);
  EXPECT_NEAR(r.estimate.Gamma, 0.008, 1e-9);
  EXPECT_EQ(r.estimate.method, ResonanceMethod::complex_scaling);
  EXPECT_LT(r.families[r.selected].median_speed, 1e-3);
}

TEST(Trajectory, RotatingOnlyMeansNoStationaryPoint) {
  const double eps = -1.09;
  const std::vector<double> th = {pi / 40, pi / 20, pi / 10};
  std::vector<Eigen::VectorXcd> spectra;
  for (double t : th) {
    Eigen::VectorXcd ev(4);
    for (int k = 0; k < 4; ++k) ev(k) = eps + 0.1 * (k + 1) * std::polar(1.0, -2 * t);
    spectra.push_back(ev);
  }
  TrajectoryOptions o;
  o.epsilon = eps;
  try {
    analyze_theta_trajectory(th, spectra, 1.0, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoStationaryPoint);
  }
  EXPECT_THROW(analyze_theta_trajectory({0.1, 0.2}, {spectra[0], spectra[1]}, 1.0, o), Error);
}

class ProductionBasis : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { red_ = prepare_basis({14, 2.0}); }
  static TrajectoryOptions opts() {
    TrajectoryOptions o;
    o.epsilon = threshold_bessel(5.0).epsilon;
    return o;
  }
  static inline std::shared_ptr<const ReducedOperators> red_;
  const std::vector<double> thetas_ = {pi / 40, pi / 30, pi / 20, pi / 10, pi / 5};
};

TEST_F(ProductionBasis, ComplexScalingTableValues) {
  EXPECT_NEAR(theta_trajectory(red_, {5.0, 1.755, 0.0}, thetas_, opts()).estimate.E_r, -0.99098, 1e-3);
  EXPECT_NEAR(theta_trajectory(red_, {5.0, 2.61, 0.0}, thetas_, opts()).estimate.E_r, -0.59077, 2e-3);
}

TEST_F(ProductionBasis, BelowThresholdHasNoResonance) {
  try {
    theta_trajectory(red_, {5.0, 1.0, 0.0}, thetas_, opts());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoStationaryPoint);
  }
}

TEST_F(ProductionBasis, PlateauAcrossTheta) {
  // identified eigenvalue varies < 1e-3 over theta in [pi/20, pi/5] for lambda in [1.7, 2.3]
  for (double lam : {1.8, 2.0, 2.2}) {
    const auto r = theta_trajectory(red_, {5.0, lam, 0.0}, thetas_, opts());
    const auto& v = r.families[r.selected].values;
    double re_lo = 1e9, re_hi = -1e9, im_lo = 1e9, im_hi = -1e9;
    for (std::size_t k = 2; k < v.size(); ++k) {
      re_lo = std::min(re_lo, v[k].real()), re_hi = std::max(re_hi, v[k].real());
      im_lo = std::min(im_lo, v[k].imag()), im_hi = std::max(im_hi, v[k].imag());
    }
    EXPECT_LT(re_hi - re_lo, 1e-3) << lam;
    EXPECT_LT(im_hi - im_lo, 1e-3) << lam;
  }
}

TEST_F(ProductionBasis, DosAtTabulatedCoupling) {
  std::vector<std::shared_ptr<const ReducedOperators>> bases;
  for (double a : linspace(2.0, 6.0, 40)) bases.push_back(prepare_basis({14, a}));
  const auto grid = build_stabilization_grid(2.255, bases, 5.0);
  const double eps = threshold_bessel(5.0).epsilon;
  std::vector<ResonanceEstimate> fits;
  for (int n = 1; n <= 8; ++n) {
    const auto c = dos_from_levels(grid, n);
    for (const auto& s : c.samples) EXPECT_GE(s.rho, 0.0);
    try {
      fits.push_back(lorentzian_fit(c));
    } catch (const Error&) {
    }
  }
  const auto best = select_best_fit(fits, eps);
  EXPECT_NEAR(best.E_r, -0.7452, 1e-3);
  const double cs = theta_trajectory(red_, {5.0, 2.255, 0.0}, thetas_, opts()).estimate.E_r;
  EXPECT_LT(std::abs(best.E_r - cs) / std::abs(cs), 2.5e-3);
}

}  // namespace
