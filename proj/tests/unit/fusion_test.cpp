#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>
#include <algorithm>

#include <Eigen/Dense>

#include "arrayloc/errors.hpp"
#include "arrayloc/fusion.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace arrayloc;
using synth::as_concat;

namespace {

std::vector<Eigen::VectorXd> random_points(std::size_t k, std::size_t arrays, std::mt19937_64& rng) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(synth::random_concat(arrays, rng));
  return out;
}

// Affine combination (weights summing to one) of the calibration DOAs.
Eigen::VectorXd in_span(const std::vector<Eigen::VectorXd>& pts, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  std::vector<double> w(pts.size());
  double total = 0;
  for (auto& x : w) total += (x = u(rng));
  Eigen::VectorXd d = Eigen::VectorXd::Zero(pts[0].size());
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) d += w[i] * pts[i];
  d += (1.0 - (total - w.back())) * pts.back();
  return d;
}

// Noisy calibration set for least-squares comparisons: each point has
// several distinct DOA columns but a single location.
CalibrationSet noisy_set(std::size_t arrays, int room_dim, int points, int per_point, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  CalibrationBuilder builder(arrays, room_dim);
  for (int k = 0; k < points; ++k) {
    const Eigen::VectorXd base = synth::random_concat(arrays, rng);
    std::vector<ConcatenatedDoa> obs;
    for (int i = 0; i < per_point; ++i) {
      Eigen::VectorXd d = base;
      for (std::size_t m = 0; m < arrays; ++m) {
        Eigen::Vector3d v = d.segment<3>(3 * static_cast<Eigen::Index>(m)) + 0.05 * Eigen::Vector3d(n(rng), n(rng), n(rng));
        v.z() = std::abs(v.z());
        d.segment<3>(3 * static_cast<Eigen::Index>(m)) = v.normalized();
      }
      obs.push_back(as_concat(d, k * 100 + i));
    }
    builder.add_point(k + 1, Eigen::VectorXd::NullaryExpr(room_dim, [&] { return 3 * n(rng); }), obs);
  }
  return builder.build();
}

}  // namespace

TEST(ConcatDoas, AllPresent) {
  std::vector<std::optional<DoaVector>> per(5, DoaVector::from_unit(Vec3(0, 0, 1)));
  const auto d = concat_doas(per, 42);
  EXPECT_EQ(d.values.size(), 15);
  EXPECT_EQ(d.mask(), full_mask(5));
  EXPECT_EQ(d.timestamp_ms, 42);
  d.validate();
}

TEST(ConcatDoas, AbsentArrayIsZeroFilled) {
  std::vector<std::optional<DoaVector>> per(5, DoaVector::from_unit(Vec3(1, 0, 0)));
  per[2].reset();
  const auto d = concat_doas(per, 0);
  EXPECT_TRUE(d.values.segment<3>(6).isZero(0));
  EXPECT_FALSE(d.active[2]);
  EXPECT_EQ(d.active_count(), 4u);
  EXPECT_EQ(popcount(d.mask()), 4u);
}

TEST(ConcatDoas, AllAbsent) {
  std::vector<std::optional<DoaVector>> per(5);
  const auto d = concat_doas(per, 0);
  EXPECT_TRUE(d.values.isZero(0));
  EXPECT_EQ(d.mask(), 0u);
  d.validate();
}

TEST(ConcatDoas, ValidateRejectsBadSubvectors) {
  auto d = as_concat(Eigen::VectorXd::Constant(6, 0.5));
  EXPECT_THROW(d.validate(), DataError);
}

TEST(PseudoInverse, MoorePenroseConditions) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(6, 3, [&] { return n(rng); }) *
                            Eigen::MatrixXd::NullaryExpr(3, 8, [&] { return n(rng); });
  Eigen::Index rank = 0;
  const Eigen::MatrixXd p = pseudo_inverse(a, 1e-10, &rank);
  EXPECT_EQ(rank, 3);
  EXPECT_LT((a * p * a - a).norm(), 1e-10 * a.norm());
  EXPECT_LT((p * a * p - p).norm(), 1e-10 * p.norm());
  EXPECT_LT(((a * p).transpose() - a * p).norm(), 1e-10);
  EXPECT_LT(((p * a).transpose() - p * a).norm(), 1e-10);
}

TEST(FitAffine, ExactRecoveryOnHeldOutInSpanObservations) {
  std::mt19937_64 rng(10);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(4, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 100);
  const auto map = fit_affine(cal, full_mask(5));
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd d = in_span(pts, rng);
    EXPECT_LT((map_affine(map, as_concat(d)) - truth.map(d)).norm(), 1e-8);
  }
}

TEST(FitAffine, GradientConditionsVanish) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cal = noisy_set(5, 2 + trial % 2, 6, 20, rng);
    const auto map = fit_affine(cal, full_mask(5));
    const Eigen::MatrixXd e =
        cal.locations - map.offset.replicate(1, cal.columns()) - map.coeffs * cal.doas;
    const double scale = cal.locations.norm();
    EXPECT_LT(e.rowwise().sum().norm() / scale, 1e-6);
    EXPECT_LT((e * cal.doas.transpose()).norm() / scale, 1e-6);
  }
}

TEST(FitAffine, FittedValuesMatchQrOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const int room_dim = 2 + trial % 2;
    const auto cal = noisy_set(3, room_dim, 3 + trial % 4, 2 + trial % 5, rng);
    ASSERT_LE(cal.columns(), 30);
    const auto map = fit_affine(cal, full_mask(3));
    Eigen::MatrixXd design(cal.columns(), 10);
    design.col(0).setOnes();
    design.rightCols(9) = cal.doas.transpose();
    const Eigen::MatrixXd expected = oracle::qr_fitted_values(design, cal.locations.transpose());
    for (Eigen::Index c = 0; c < cal.columns(); ++c) {
      const Eigen::VectorXd got = map.offset + map.coeffs * cal.doas.col(c);
      EXPECT_LT((got - expected.row(c).transpose()).norm(), 1e-6) << "trial " << trial;
    }
  }
}

TEST(FitAffine, TwoPointsMapToTheirLine) {
  std::mt19937_64 rng(13);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(2, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 50);
  const auto map = fit_affine(cal, full_mask(5));
  EXPECT_TRUE(map.report.line_degenerate);
  EXPECT_EQ(map.report.location_span, 1);
  EXPECT_FALSE(map.report.warnings.empty());
  const Eigen::Vector2d r1 = truth.map(pts[0]), r2 = truth.map(pts[1]);
  const Eigen::Vector2d dir = (r2 - r1).normalized();
  for (int t = 0; t < 100; ++t) {
    const Eigen::Vector2d r = map_affine(map, as_concat(synth::random_concat(5, rng)));
    const Eigen::Vector2d off = r - r1;
    EXPECT_LT(std::abs(off.x() * dir.y() - off.y() * dir.x()), 1e-8);
  }
}

TEST(FitAffine, ThreePointsStayInTheirPlane) {
  std::mt19937_64 rng(14);
  const auto truth = synth::random_truth(3, 5, rng);
  const auto pts = random_points(3, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 10);
  const auto map = fit_affine(cal, full_mask(5));
  const Eigen::Vector3d r1 = truth.map(pts[0]), r2 = truth.map(pts[1]), r3 = truth.map(pts[2]);
  const Eigen::Vector3d normal = (r2 - r1).cross(r3 - r1).normalized();
  for (int t = 0; t < 100; ++t) {
    const Eigen::Vector3d r = map_affine(map, as_concat(synth::random_concat(5, rng)));
    EXPECT_LT(std::abs((r - r1).dot(normal)), 1e-8);
  }
}

TEST(FitAffine, OnePointIsAnError) {
  std::mt19937_64 rng(15);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto cal = synth::exact_affine_set(truth, random_points(1, 5, rng), 10);
  EXPECT_THROW(fit_affine(cal, full_mask(5)), InvalidArgument);
}

TEST(FitAffine, InterpolatesAlongCalibrationSegments) {
  std::mt19937_64 rng(16);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(5, 5, rng);
  const auto map = fit_affine(synth::exact_affine_set(truth, pts, 5), full_mask(5));
  for (std::size_t k = 0; k < pts.size(); ++k)
    for (std::size_t j = k + 1; j < pts.size(); ++j) {
      const Eigen::Vector2d rk = truth.map(pts[k]), rj = truth.map(pts[j]);
      for (double t : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        const Eigen::Vector2d r = map_affine(map, as_concat((1 - t) * pts[k] + t * pts[j]));
        EXPECT_LT((r - ((1 - t) * rk + t * rj)).norm(), 1e-8);
      }
    }
}

TEST(MapAffine, CalibrationMeanMapsToMeanLocation) {
  std::mt19937_64 rng(17);
  const auto cal = noisy_set(5, 2, 6, 15, rng);
  const auto map = fit_affine(cal, full_mask(5));
  const Eigen::VectorXd r = map_affine(map, as_concat(cal.doas.rowwise().mean()));
  EXPECT_LT((r - cal.locations.rowwise().mean()).norm(), 1e-10);
}

TEST(MapAffine, CalibrationColumnsReproduceLocations) {
  std::mt19937_64 rng(18);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(6, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 3);
  const auto map = fit_affine(cal, full_mask(5));
  for (Eigen::Index c = 0; c < cal.columns(); ++c)
    EXPECT_LT((map_affine(map, as_concat(cal.doas.col(c))) - cal.locations.col(c)).norm(), 1e-9);
}

TEST(MapAffine, MissingArrayIsAMismatch) {
  std::mt19937_64 rng(19);
  const auto cal = noisy_set(5, 2, 6, 4, rng);
  const auto map = fit_affine(cal, full_mask(5));
  auto d = as_concat(synth::random_concat(5, rng));
  d.active[3] = false;
  d.values.segment<3>(9).setZero();
  EXPECT_THROW(map_affine(map, d), ActiveSetMismatch);
}

TEST(MapWithMissing, FullSetEqualsMapAffine) {
  std::mt19937_64 rng(20);
  const auto cal = noisy_set(5, 2, 6, 4, rng);
  AffineMapCache cache;
  const auto map = fit_affine(cal, full_mask(5));
  const auto d = as_concat(synth::random_concat(5, rng));
  EXPECT_EQ(map_with_missing(cal, d, cache), map_affine(map, d));
}

TEST(MapWithMissing, DroppingAnArrayOnExactDataChangesNothing) {
  std::mt19937_64 rng(21);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(6, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 4);
  AffineMapCache cache;
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd full = in_span(pts, rng);
    const Eigen::VectorXd r = map_with_missing(cal, as_concat(full), cache);
    for (std::size_t drop = 0; drop < 5; ++drop) {
      auto d = as_concat(full);
      d.active[drop] = false;
      d.values.segment<3>(3 * static_cast<Eigen::Index>(drop)).setZero();
      EXPECT_LT((map_with_missing(cal, d, cache) - r).norm(), 1e-8);
    }
  }
  EXPECT_EQ(cache.size(), 6u);
}

TEST(MapWithMissing, EmptyActiveSetThrows) {
  std::mt19937_64 rng(22);
  const auto cal = noisy_set(5, 2, 6, 4, rng);
  AffineMapCache cache;
  auto d = as_concat(Eigen::VectorXd::Zero(15));
  std::fill(d.active.begin(), d.active.end(), false);
  EXPECT_THROW(map_with_missing(cal, d, cache), NoObservation);
}

TEST(MapWithMissing, CacheIsTransparent) {
  std::mt19937_64 rng(23);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  AffineMapCache cache;
  for (ActiveMask mask = 1; mask < 32; ++mask) {
    const auto cached = cache.get(cal, mask);
    const auto again = cache.get(cal, mask);
    EXPECT_EQ(cached.get(), again.get());
    const auto fresh = fit_affine(cal, mask);
    EXPECT_EQ(cached->offset, fresh.offset);
    EXPECT_EQ(cached->coeffs, fresh.coeffs);
  }
  EXPECT_EQ(cache.size(), 31u);
}

TEST(MapWithMissing, ConcurrentLookupsAgree) {
  std::mt19937_64 rng(24);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  AffineMapCache cache;
  std::vector<std::vector<std::shared_ptr<const AffineMap>>> seen(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (ActiveMask mask = 31; mask >= 1; --mask) seen[static_cast<std::size_t>(t)].push_back(cache.get(cal, mask));
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(cache.size(), 31u);
  for (std::size_t i = 0; i < seen[0].size(); ++i) {
    const auto& ref = *cache.get(cal, seen[0][i]->active);
    for (const auto& s : seen) {
      EXPECT_EQ(s[i]->coeffs, ref.coeffs);
      EXPECT_EQ(s[i]->offset, ref.offset);
    }
  }
}

TEST(MapWithMissing, ReuseFullOffsetSwitch) {
  std::mt19937_64 rng(25);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  AffineMapCache refit, reuse(true);
  const ActiveMask partial = 0b10111;
  EXPECT_EQ(reuse.get(cal, partial)->offset, reuse.get(cal, full_mask(5))->offset);
  EXPECT_NE(refit.get(cal, partial)->offset, refit.get(cal, full_mask(5))->offset);
  EXPECT_EQ(reuse.get(cal, partial)->coeffs, refit.get(cal, partial)->coeffs);
}

TEST(FitPca, RankOneRejectsTwoComponents) {
  std::mt19937_64 rng(30);
  const Eigen::VectorXd col = synth::random_concat(5, rng);
  const Eigen::MatrixXd d = col.replicate(1, 20);
  EXPECT_THROW(fit_pca(d, 2), InvalidArgument);
  const auto model = fit_pca(d, 1);
  EXPECT_NEAR(std::abs(model.basis.col(0).dot(col.normalized())), 1.0, 1e-12);
  EXPECT_LT(model.singular_values(1), 1e-12 * model.singular_values(0));
}

TEST(FitPca, SingularValuesMatchJacobiOracle) {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  Eigen::MatrixXd u;
  const Eigen::VectorXd oracle_sv = oracle::jacobi_singular_values(d, &u);
  ASSERT_EQ(model.singular_values.size(), oracle_sv.size());
  EXPECT_LT((model.singular_values - oracle_sv).norm(), 1e-10 * oracle_sv(0));
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(std::abs(model.basis.col(j).dot(u.col(j))), 1.0, 1e-9);
  for (Eigen::Index i = 1; i < model.singular_values.size(); ++i)
    EXPECT_LE(model.singular_values(i), model.singular_values(i - 1));
}

TEST(FitPca, OrthonormalAndSignFixed) {
  std::mt19937_64 rng(32);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 3);
  EXPECT_LT((model.basis.transpose() * model.basis - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-9);
  for (int j = 0; j < 3; ++j) {
    Eigen::Index i;
    model.basis.col(j).cwiseAbs().maxCoeff(&i);
    EXPECT_GT(model.basis(i, j), 0.0);
  }
}

TEST(FitPca, EckartYoungSpotCheck) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n;
  Eigen::MatrixXd d(15, 30);
  for (int c = 0; c < 30; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  const double best = (d - model.basis * model.basis.transpose() * d).norm();
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXd left = Eigen::MatrixXd::NullaryExpr(15, 2, [&] { return n(rng); });
    const Eigen::MatrixXd q = left.householderQr().householderQ() * Eigen::MatrixXd::Identity(15, 2);
    // Best rank-2 fit within a random subspace, plus a random rank-2 matrix.
    EXPECT_LE(best, (d - q * q.transpose() * d).norm());
    const Eigen::MatrixXd alt = left * Eigen::MatrixXd::NullaryExpr(2, 30, [&] { return n(rng); });
    EXPECT_LE(best, (d - alt).norm());
  }
}

TEST(ProjectPca, BasisVectorsAndOrthogonalComplement) {
  std::mt19937_64 rng(34);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  const auto a = project_pca(model, as_concat(model.basis.col(0)));
  EXPECT_NEAR(a.coefficients(0), 1.0, 1e-12);
  EXPECT_NEAR(a.coefficients(1), 0.0, 1e-12);

  Eigen::VectorXd x = synth::random_concat(5, rng);
  x -= model.basis * (model.basis.transpose() * x);
  EXPECT_LT(project_pca(model, as_concat(x)).coefficients.norm(), 1e-12);

  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd v = synth::random_concat(5, rng);
    const Eigen::VectorXd recon = model.basis * project_pca(model, as_concat(v)).coefficients;
    EXPECT_LE((recon - v).norm(), v.norm() + 1e-12);
  }
}

TEST(ProjectPca, LinearInTheObservation) {
  std::mt19937_64 rng(35);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  const Eigen::VectorXd d1 = synth::random_concat(5, rng), d2 = synth::random_concat(5, rng);
  const double alpha = 0.3, beta = -1.7;
  const Eigen::VectorXd lhs = project_pca(model, as_concat(alpha * d1 + beta * d2)).coefficients;
  const Eigen::VectorXd rhs =
      alpha * project_pca(model, as_concat(d1)).coefficients + beta * project_pca(model, as_concat(d2)).coefficients;
  EXPECT_LT((lhs - rhs).norm(), 1e-14);
}

TEST(ProjectPca, PartialObservationIsFlagged) {
  std::mt19937_64 rng(36);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  auto obs = as_concat(synth::random_concat(5, rng));
  EXPECT_FALSE(project_pca(model, obs).partial);
  obs.active[1] = false;
  obs.values.segment<3>(3).setZero();
  const auto p = project_pca(model, obs);
  EXPECT_TRUE(p.partial);
  EXPECT_LT((p.coefficients - model.basis.transpose() * obs.values).norm(), 1e-15);
}

TEST(ReferencePair, StoresProjectedCoefficients) {
  std::mt19937_64 rng(37);
  Eigen::MatrixXd d(15, 40);
  for (int c = 0; c < 40; ++c) d.col(c) = synth::random_concat(5, rng);
  const auto model = fit_pca(d, 2);
  const auto ref = ReferencePair::make(as_concat(d.col(3)), Eigen::Vector2d(1, 2), &model);
  ASSERT_TRUE(ref.coefficients);
  EXPECT_LT((*ref.coefficients - model.basis.transpose() * d.col(3)).norm(), 1e-9);
}

TEST(MapFromReference, Identities) {
  std::mt19937_64 rng(40);
  const auto truth = synth::random_truth(2, 5, rng);
  const auto pts = random_points(6, 5, rng);
  const auto cal = synth::exact_affine_set(truth, pts, 3);
  const auto map = fit_affine(cal, full_mask(5));

  const auto ref = ReferencePair::make(as_concat(pts[0]), truth.map(pts[0]));
  EXPECT_LT((map_from_reference(map, ref, ref.doa) - ref.location).norm(), 1e-12);
  EXPECT_LT((map_from_reference(map, ref, as_concat(pts[2])) - truth.map(pts[2])).norm(), 1e-8);

  // A reference lying exactly on the map reproduces map_affine everywhere.
  const auto d_ref = as_concat(synth::random_concat(5, rng));
  const auto on_map = ReferencePair::make(d_ref, map_affine(map, d_ref));
  for (int t = 0; t < 20; ++t) {
    const auto d = as_concat(synth::random_concat(5, rng));
    EXPECT_LT((map_from_reference(map, on_map, d) - map_affine(map, d)).norm(), 1e-10);
  }
}

TEST(PcaToRoom, MatchesReferenceMappingOnRankTwoData) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n;
  const Eigen::MatrixXd q = Eigen::MatrixXd::NullaryExpr(15, 2, [&] { return n(rng); }).householderQr().householderQ() *
                            Eigen::MatrixXd::Identity(15, 2);
  CalibrationBuilder builder(5, 2);
  std::vector<Eigen::VectorXd> cols;
  for (int k = 0; k < 8; ++k) {
    cols.push_back(q * Eigen::Vector2d(n(rng), n(rng)));
    builder.add_point(k + 1, Eigen::Vector2d(n(rng), n(rng)), std::vector<ConcatenatedDoa>{as_concat(cols.back())});
  }
  const auto cal = builder.build();
  const auto map = fit_affine(cal, full_mask(5));
  const auto model = fit_pca(cal.doas, 2);
  const auto ref = ReferencePair::make(as_concat(cols[0]), Eigen::Vector2d(0.5, 0.5), &model);

  EXPECT_LT((pca_to_room(map, model, ref, *ref.coefficients) - ref.location).norm(), 1e-12);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd d = q * Eigen::Vector2d(n(rng), n(rng));
    const auto a = project_pca(model, as_concat(d)).coefficients;
    EXPECT_LT((pca_to_room(map, model, ref, a) - map_from_reference(map, ref, as_concat(d))).norm(), 1e-8);
  }
  const Eigen::Vector2d a1(0.3, -0.2), a2(-1.0, 0.8);
  const Eigen::VectorXd mid = pca_to_room(map, model, ref, 0.5 * (a1 + a2));
  EXPECT_LT((mid - 0.5 * (pca_to_room(map, model, ref, a1) + pca_to_room(map, model, ref, a2))).norm(), 1e-12);
}

TEST(PcaToRoom, RejectsDimensionMismatch) {
  std::mt19937_64 rng(42);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  const auto map = fit_affine(cal, full_mask(5));
  const auto model = fit_pca(cal, 2);
  const auto ref = ReferencePair::make(as_concat(cal.doas.col(0)), cal.locations.col(0), &model);
  EXPECT_THROW(pca_to_room(map, model, ref, Eigen::Vector3d(1, 2, 3)), InvalidArgument);
  const auto no_coeffs = ReferencePair::make(as_concat(cal.doas.col(0)), cal.locations.col(0));
  EXPECT_THROW(pca_to_room(map, model, no_coeffs, Eigen::Vector2d(1, 2)), InvalidArgument);
}

TEST(PcaProximity, NearestCalibrationPoint) {
  std::mt19937_64 rng(43);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  const auto model = fit_pca(cal, 2);
  const auto a = project_pca(model, as_concat(cal.doas.col(cal.segments[4].begin))).coefficients;
  const auto dist = pca_proximity(model, cal, a);
  ASSERT_EQ(dist.size(), 6u);
  for (double x : dist) EXPECT_GE(x, 0.0);
  EXPECT_EQ(std::min_element(dist.begin(), dist.end()) - dist.begin(), 4);
}

TEST(CalibrationSet, SubsetAndValidate) {
  std::mt19937_64 rng(44);
  const auto cal = noisy_set(5, 2, 6, 10, rng);
  const std::vector<int> ids{2, 5};
  const auto sub = cal.subset(ids);
  EXPECT_EQ(sub.point_ids(), ids);
  EXPECT_EQ(sub.columns(), 20);
  sub.validate();
  auto broken = cal;
  broken.locations(0, 3) += 1.0;
  EXPECT_THROW(broken.validate(), DataError);
}
