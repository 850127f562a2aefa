#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "twocomm/ratematrix.hpp"

using namespace twocomm;

namespace {

ModelParams fig5_params(std::int64_t n) {
  ModelParams p;
  p.n = n;
  p.c = 6;
  p.c_cross = 6;
  p.beta = 1.5;
  p.gamma = 3;
  p.rho_H = 1;
  p.rho0 = 1;
  p.alpha = 0.5;
  p.scaling_mode = true;
  p.rho_T = p.rho0 * std::pow(static_cast<double>(n), -p.alpha);
  return p;
}

Matrix16 rk4_expm_times(const Matrix16& a, double t, int steps) {
  // reference route: integrate V' = A V from the identity
  Matrix16 v = Matrix16::Identity();
  const double h = t / steps;
  for (int k = 0; k < steps; ++k) {
    const Matrix16 k1 = a * v;
    const Matrix16 k2 = a * (v + 0.5 * h * k1);
    const Matrix16 k3 = a * (v + 0.5 * h * k2);
    const Matrix16 k4 = a * (v + h * k3);
    v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return v;
}

}  // namespace

TEST(EdgeClass, FlatRoundTrip) {
  for (int f = 0; f < 16; ++f) {
    const auto idx = EdgeClassIndex::from_flat(f);
    EXPECT_EQ(idx.flat(), f);
    EXPECT_TRUE(idx.i == 1 || idx.i == 2);
    EXPECT_TRUE(idx.a == 0 || idx.a == 1);
  }
}

TEST(EdgeClass, ColocationIndicator) {
  // same type: co-located iff same travel state; different type: iff
  // different travel states
  EXPECT_EQ(colocated(1, 1, 0, 0), 1);
  EXPECT_EQ(colocated(1, 1, 0, 1), 0);
  EXPECT_EQ(colocated(1, 2, 0, 0), 0);
  EXPECT_EQ(colocated(1, 2, 0, 1), 1);
  EXPECT_EQ(colocated(2, 1, 1, 0), 1);
  EXPECT_EQ(colocated(2, 2, 1, 1), 1);
}

TEST(SocdistRates, ReducedRateOnCommunityTwoClasses) {
  const double b = 1.5, bp = 0.5;
  // community-2 co-location classes
  EXPECT_DOUBLE_EQ(socdist_edge_rate(2, 2, 0, 0, b, bp), bp);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(2, 1, 0, 1, b, bp), bp);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(1, 2, 1, 0, b, bp), bp);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(1, 1, 1, 1, b, bp), bp);
  // community-1 co-location classes keep beta
  EXPECT_DOUBLE_EQ(socdist_edge_rate(1, 1, 0, 0, b, bp), b);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(1, 2, 0, 1, b, bp), b);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(2, 1, 1, 0, b, bp), b);
  EXPECT_DOUBLE_EQ(socdist_edge_rate(2, 2, 1, 1, b, bp), b);
}

TEST(RateMatrix, MetzlerStructure) {
  const ModelParams p = fig5_params(1000);
  for (auto variant : {MatrixVariant::M, MatrixVariant::M0, MatrixVariant::Herd,
                       MatrixVariant::Herd0, MatrixVariant::TravelBan,
                       MatrixVariant::TravelBan0}) {
    MatrixKnobs knobs;
    if (variant == MatrixVariant::Herd || variant == MatrixVariant::Herd0)
      knobs.delta = 0.25;
    const auto m = build_rate_matrix(variant, p, knobs);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        if (r != c)
          EXPECT_GE(m.entries(r, c), 0.0)
              << "variant " << static_cast<int>(variant) << " at (" << r << ","
              << c << ")";
  }
}

TEST(RateMatrix, M0RestrictedToHomeClassesIsTheKnownBlock) {
  const ModelParams p = fig5_params(10000);
  const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
  const double lam = p.c * p.beta - p.beta - p.gamma;
  const int i11 = EdgeClassIndex{1, 1, 0, 0}.flat();
  const int i12 = EdgeClassIndex{1, 2, 0, 0}.flat();
  const int i22 = EdgeClassIndex{2, 2, 0, 0}.flat();
  const int i21 = EdgeClassIndex{2, 1, 0, 0}.flat();
  EXPECT_NEAR(m0.entries(i11, i11), lam, 1e-12);
  EXPECT_NEAR(m0.entries(i12, i11), p.c * p.beta, 1e-12);
  EXPECT_NEAR(m0.entries(i12, i12), -p.gamma, 1e-12);
  EXPECT_NEAR(m0.entries(i22, i22), lam, 1e-12);
  EXPECT_NEAR(m0.entries(i21, i22), p.c * p.beta, 1e-12);
  EXPECT_NEAR(m0.entries(i21, i21), -p.gamma, 1e-12);
  // no flow between the two seeding chains or back
  EXPECT_DOUBLE_EQ(m0.entries(i11, i12), 0.0);
  EXPECT_DOUBLE_EQ(m0.entries(i22, i21), 0.0);
  EXPECT_DOUBLE_EQ(m0.entries(i11, i22), 0.0);
}

TEST(RateMatrix, Spectrum) {
  for (std::int64_t n : {1000, 10000}) {
    const ModelParams p = fig5_params(n);
    const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
    const auto rep = spectral_analysis(m0);
    EXPECT_NEAR(rep.top_eigenvalue, 4.5, 1e-8);
    EXPECT_EQ(rep.top_multiplicity, 2);
    int below = 0;
    for (const auto& ev : rep.eigenvalues)
      if (ev.real() <= -p.gamma + 1e-8) ++below;
    EXPECT_EQ(below, 14);
    ASSERT_TRUE(rep.triangularizing_permutation.has_value());
    EXPECT_LE(rep.triangular_defect, 1e-14);
    EXPECT_LE(rep.projector_defect, 1e-8);
    EXPECT_FALSE(rep.degenerate_spectrum_warning);
  }
}

TEST(RateMatrix, DegenerateWarningNearCEqualsOne) {
  ModelParams p = fig5_params(1000);
  p.c = 1.0;
  p.c_cross = 1.0;
  const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
  EXPECT_TRUE(spectral_analysis(m0).degenerate_spectrum_warning);
}

TEST(RateMatrix, Herd0TopEigenvalue) {
  const ModelParams p = fig5_params(1000);
  MatrixKnobs knobs;
  knobs.delta = 0.2;  // s0 = 0.5 here
  const auto h0 = build_rate_matrix(MatrixVariant::Herd0, p, knobs);
  const auto rep = spectral_analysis(h0);
  EXPECT_NEAR(rep.top_eigenvalue, -p.beta * p.c * 0.2, 1e-8);
}

TEST(RateMatrix, TravelBan0TopEigenvalue) {
  const ModelParams p = fig5_params(1000);
  const auto tb0 = build_rate_matrix(MatrixVariant::TravelBan0, p);
  EXPECT_NEAR(spectral_analysis(tb0).top_eigenvalue, 4.5, 1e-8);
}

TEST(RateMatrix, SocDist0TopEigenvalue) {
  const ModelParams p = fig5_params(1000);
  MatrixKnobs knobs;
  knobs.beta_prime = 0.5;   // lambda' = 3 - 0.5 - 3 = -0.5
  knobs.delta_prime = 0.2;
  const auto sd0 = build_rate_matrix(MatrixVariant::SocDist0, p, knobs);
  const double expected = std::max(-p.c * 0.2 * p.beta, (p.c - 1.0) * 0.5 - p.gamma);
  EXPECT_NEAR(spectral_analysis(sd0).top_eigenvalue, expected, 1e-8);
  EXPECT_LT(spectral_analysis(sd0).top_eigenvalue, 0.0);
}

TEST(RateMatrix, KnobValidation) {
  const ModelParams p = fig5_params(1000);
  MatrixKnobs bad;
  bad.delta = 0.7;  // above s0 = 0.5
  EXPECT_THROW(build_rate_matrix(MatrixVariant::Herd0, p, bad),
               std::invalid_argument);
  MatrixKnobs sd;
  sd.beta_prime = 1.4;  // lambda' = 8.4 - 1.4 - 3 > 0
  sd.delta_prime = 0.2;
  EXPECT_THROW(build_rate_matrix(MatrixVariant::SocDist, p, sd),
               std::invalid_argument);
}

TEST(Expm, IdentityAtZero) {
  const auto m = build_rate_matrix(MatrixVariant::M, fig5_params(1000));
  EXPECT_LE(induced_one_norm(Matrix16(expm(m, 0.0) - Matrix16::Identity())),
            1e-14);
}

TEST(Expm, MatchesOdeIntegration) {
  const ModelParams p = fig5_params(1000);
  for (auto variant : {MatrixVariant::M, MatrixVariant::M0}) {
    const auto m = build_rate_matrix(variant, p);
    for (double t : {0.3, 1.0, 2.5}) {
      const Matrix16 via_expm = expm(m, t);
      const int steps = static_cast<int>(20000 * std::max(t, 1.0));
      const Matrix16 via_ode = rk4_expm_times(m.entries, t, steps);
      const double rel = induced_one_norm(Matrix16(via_expm - via_ode)) /
                         induced_one_norm(via_ode);
      // the RK4 reference, not expm, limits the achievable agreement
      EXPECT_LT(rel, 1e-7) << "t = " << t;
    }
  }
}

TEST(Expm, OverflowReportsTime) {
  const auto m0 = build_rate_matrix(MatrixVariant::M0, fig5_params(1000));
  EXPECT_THROW(expm(m0, 1e6), std::overflow_error);
}

TEST(WMatrix, NormScalesLikeNegativeAlpha) {
  // ||W|| is dominated by the c_T = c n^-alpha ln^3 n terms, so the
  // regression of ln(||W|| / ln^3 n) on ln n has slope about -alpha.
  std::vector<double> xs, ys;
  for (std::int64_t n : {1000, 10000, 100000, 1000000}) {
    const ModelParams p = fig5_params(n);
    const auto w = build_rate_matrix(MatrixVariant::W, p);
    const double ln_n = std::log(static_cast<double>(n));
    xs.push_back(ln_n);
    ys.push_back(std::log(induced_one_norm(w.entries) / (ln_n * ln_n * ln_n)));
  }
  double sxx = 0, sxy = 0;
  const double mx = (xs[0] + xs[1] + xs[2] + xs[3]) / 4;
  const double my = (ys[0] + ys[1] + ys[2] + ys[3]) / 4;
  for (std::size_t k = 0; k < 4; ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.1);
}

TEST(GrowthConstant, NormalMatrixGivesOne) {
  // for a normal matrix, e^{-lambda t}||e^{tA}||_2 = 1 for all t
  Matrix16 a = Matrix16::Zero();
  for (int k = 0; k < 16; ++k) a(k, k) = -0.1 * k + 0.5;
  const double c =
      growth_constant_for(a, 0.5, 10.0, MatrixNorm::SpectralTwo);
  EXPECT_NEAR(c, 1.0, 0.015);
}

TEST(GrowthConstant, BoundsTheEnvelope) {
  const ModelParams p = fig5_params(10000);
  const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
  const double c = growth_constant(m0, 4.5);
  EXPECT_GE(c, 1.0);  // the envelope equals 1 at t = 0
  for (double t : {0.1, 0.5, 1.0, 3.0, 8.0}) {
    const double env = std::exp(-4.5 * t) * induced_one_norm(expm(m0, t));
    EXPECT_LE(env, c + 1e-9) << "t = " << t;
  }
}

TEST(Perturbation, BoundHoldsForRandomMetzlerPerturbations) {
  const ModelParams p = fig5_params(10000);
  const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
  const double growth_c = growth_constant(m0, 4.5);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < 25; ++k) {
    Matrix16 w = Matrix16::Zero();
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        if (r != c) w(r, c) = unif(rng);
    w *= 1e-2 / induced_one_norm(w);
    for (double t : {0.5, 1.0, 5.0}) {
      const auto chk = perturbation_check(m0, w, 4.5, t, growth_c);
      EXPECT_TRUE(chk.ok) << "lhs " << chk.lhs << " rhs " << chk.rhs;
    }
  }
}

TEST(Perturbation, ActualWSatisfiesBoundAtLargeN) {
  const ModelParams p = fig5_params(1000000);
  const auto m0 = build_rate_matrix(MatrixVariant::M0, p);
  const auto w = build_rate_matrix(MatrixVariant::W, p);
  for (double t : {0.5, 1.0}) {
    const auto chk = perturbation_check(m0, w.entries, 4.5, t);
    EXPECT_TRUE(chk.ok) << "lhs " << chk.lhs << " rhs " << chk.rhs;
  }
}

TEST(BoundCurves, MatchesDirectOdeQuadrature) {
  const ModelParams p = fig5_params(10000);
  const std::vector<double> grid{0.0, 0.5, 1.0, 1.5};
  const BoundCurves bc = expected_bound_curves(p, grid);

  // independent route: RK4 on v' = Mv plus trapezoid accumulation
  const auto m = build_rate_matrix(MatrixVariant::M, p);
  const DerivedQuantities dq = derive(p);
  Vector16 v = Vector16::Zero();
  for (int f = 0; f < 16; ++f) {
    const auto idx = EdgeClassIndex::from_flat(f);
    if (idx.i == 1 && idx.a == 0) v(f) = idx.b == 0 ? p.c : dq.cT_bound;
  }
  auto active_into = [&](const Vector16& vv, int target) {
    double acc = 0;
    for (int f = 0; f < 16; ++f) {
      const auto idx = EdgeClassIndex::from_flat(f);
      if (idx.j == target && colocated(idx.i, idx.j, idx.a, idx.b))
        acc += vv(f);
    }
    return acc;
  };
  const double h = 1e-4;
  double t = 0, int1 = 0, int2 = 0;
  double prev1 = active_into(v, 1), prev2 = active_into(v, 2);
  std::size_t gi = 0;
  std::vector<double> ref1, ref2;
  while (gi < grid.size()) {
    if (t >= grid[gi] - 1e-12) {
      ref1.push_back(1.0 + int1);
      ref2.push_back(int2);
      ++gi;
      continue;
    }
    const Vector16 k1 = m.entries * v;
    const Vector16 k2 = m.entries * (v + 0.5 * h * k1);
    const Vector16 k3 = m.entries * (v + 0.5 * h * k2);
    const Vector16 k4 = m.entries * (v + h * k3);
    v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
    const double cur1 = active_into(v, 1), cur2 = active_into(v, 2);
    int1 += 0.5 * h * (prev1 + cur1);
    int2 += 0.5 * h * (prev2 + cur2);
    prev1 = cur1;
    prev2 = cur2;
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_NEAR(bc.b1[k], ref1[k], 1e-3 * std::abs(ref1[k]) + 1e-6);
    EXPECT_NEAR(bc.b2[k], ref2[k], 1e-3 * std::abs(ref2[k]) + 1e-6);
  }
}

TEST(BoundCurves, ShapeAndClosedForms) {
  const ModelParams p = fig5_params(10000);
  const DerivedQuantities dq = derive(p);
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(0.1 * k);
  const BoundCurves bc = expected_bound_curves(p, grid);
  EXPECT_NEAR(bc.b1.front(), 1.0, 1e-9);
  EXPECT_NEAR(bc.b2.front(), 0.0, 1e-9);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    EXPECT_GE(bc.b1[k], bc.b1[k - 1]);
    EXPECT_GE(bc.b2[k], bc.b2[k - 1]);
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_NEAR(bc.closed_form_b1[k],
                1.0 + p.c * (std::exp(dq.lambda * grid[k]) - 1.0) / dq.lambda,
                1e-9);
    EXPECT_NEAR(bc.envelope_b2[k], dq.cT_bound * std::exp(dq.lambda * grid[k]),
                1e-9);
  }
}

TEST(BoundCurves, RejectsBadGrids) {
  const ModelParams p = fig5_params(1000);
  EXPECT_THROW(expected_bound_curves(p, {}), std::invalid_argument);
  EXPECT_THROW(expected_bound_curves(p, {1.0, 0.5}), std::invalid_argument);
  EXPECT_THROW(expected_bound_curves(p, {-1.0}), std::invalid_argument);
  const double ln2 = std::log(1000.0) * std::log(1000.0);
  EXPECT_THROW(expected_bound_curves(p, {ln2 + 1.0}), std::invalid_argument);
}
