#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gwb/localization.hpp"
#include "gwb/roe_ops.hpp"

using namespace gwb;

TEST(Moments, GridDeltaIsOne) {
  auto g = make_grid(2, 2.0, 0.1);
  const Point c = g->point(g->nearest_index(Point{0.3, 0.3}));
  auto delta = normalized_delta(g, c);
  EXPECT_NEAR(localization_moment(delta, c, 2.0), 1.0, 1e-12);
  EXPECT_NEAR(exponential_moment(delta, c, 3.0), 1.0, 1e-12);
}

TEST(Moments, UnitIntervalIndicator) {
  auto g = make_grid(1, 1.5, 1e-4);
  auto chi = normalized_ball_indicator(g, Point{}, 0.5);
  EXPECT_NEAR(localization_moment(chi, Point{}, 1.0), 13.0 / 12.0, 1e-3);
  EXPECT_NEAR(localization_moment(chi, Point{1.0}, 1.0), 25.0 / 12.0, 1e-3);
  EXPECT_NEAR(exponential_moment(chi, Point{}, 1.0), std::numbers::e - 1.0, 1e-3);
}

TEST(Moments, MonotoneInSAndAtLeastNorm) {
  auto g = make_grid(1, 6.0, 0.05);
  auto f = GridFunction::sample(g, [](const Point& x) { return std::exp(-x[0] * x[0]); });
  f *= 1.0 / f.norm();
  double prev = 1.0 - 1e-12;
  for (double s : {0.1, 0.5, 1.0, 2.0, 3.0}) {
    const double m = localization_moment(f, Point{0.2}, s);
    EXPECT_GE(m, prev);
    prev = m;
  }
  EXPECT_THROW(localization_moment(f, Point{}, 0.0), Error);
}

TEST(Moments, TranslationCovariance) {
  auto g = make_grid(2, 4.0, 0.1);
  const Point c{-0.5, 0.3};
  const Point v{0.7, -0.4};  // multiple of h
  auto f = GridFunction::sample(g, [&](const Point& x) { return std::exp(-4.0 * distance_squared(x, c)); });
  auto shifted = GridFunction::sample(g, [&](const Point& x) { return std::exp(-4.0 * distance_squared(x - v, c)); });
  EXPECT_NEAR(localization_moment(shifted, c + v, 1.5), localization_moment(f, c, 1.5), 1e-6);
}

TEST(Moments, GuardRefusesTruncatedIntegral) {
  auto g = make_grid(1, 2.0, 0.05);
  auto edge = normalized_ball_indicator(g, Point{1.9}, 0.3);
  EXPECT_THROW(localization_moment(edge, Point{1.9}, 1.0), Error);
}

TEST(ExtremelyLocalized, DisjointSupportsExactOrthogonality) {
  auto g = make_grid(1, 8.0, 0.05);
  std::vector<Point> c;
  for (int n = -5; n <= 5; ++n) c.push_back(Point{double(n)});
  auto fam = build_extremely_localized_family(UniformlyDiscreteSet(1, c, 0.4), g);
  EXPECT_EQ(fam.size(), 11u);
  for (std::size_t i = 0; i < fam.size(); ++i) {
    EXPECT_NEAR(fam.member(i).norm(), 1.0, 1e-12);
    for (std::size_t j = i + 1; j < fam.size(); ++j) EXPECT_EQ(inner_product(fam.member(i), fam.member(j)), Complex{});
    for (std::size_t k = 0; k < g->size(); ++k) {
      if (fam.member(i)[k] != Complex{}) EXPECT_LT(distance(g->point(k), fam.center(i)), 0.4);
    }
  }
  EXPECT_LE(fam.orthonormality_residual(), 1e-14);
}

TEST(ExtremelyLocalized, MomentBoundAndTranslationInvariance) {
  auto g = make_grid(2, 5.0, 0.1);
  auto set = integer_lattice(2, {-2, 2});
  auto fam = build_extremely_localized_family(set, g);
  const double r = set.radius();
  EXPECT_LE(certify_s_localized(fam, 5.0), std::pow(1 + r * r, 5.0));
  const double m = certify_s_localized(fam, 1.0);
  for (double v : fam.moment_records().back().per_center) EXPECT_NEAR(v, m, 1e-12);
}

TEST(ExtremelyLocalized, FarApartCentersGiveIdentityGram) {
  auto g = make_grid(1, 8.0, 0.1);
  auto fam = build_extremely_localized_family(UniformlyDiscreteSet(1, {Point{-2.5}, Point{2.5}}, 0.5), g);
  EXPECT_LE(fam.orthonormality_residual(), 1e-14);
}

TEST(ExtremelyLocalized, UnresolvedBallThrows) {
  auto g = make_grid(1, 4.0, 0.3);
  EXPECT_THROW(build_extremely_localized_family(integer_lattice(1, {-2, 2}), g), Error);
}

TEST(PowerLaw, SingleCenterIsNormalizedProfile) {
  auto g = make_grid(1, 32.0, 0.25);
  auto fam = build_power_law_family(UniformlyDiscreteSet(1, {Point{}}, 0.5), g, 2.0);
  auto raw = GridFunction::sample(g, [](const Point& x) { return 1.0 / (1.0 + x[0] * x[0]); });
  raw *= 1.0 / raw.norm();
  EXPECT_LT((fam.member(0) - raw).norm(), 1e-12);
}

TEST(PowerLaw, FarApartCorrectionBoundedByOverlap) {
  auto g = make_grid(1, 64.0, 0.25);
  const Point a{-20.0}, b{20.0};
  auto fam = build_power_law_family(UniformlyDiscreteSet(1, {a, b}, 0.5), g, 2.0);
  auto profile = [&](const Point& c) {
    auto f = GridFunction::sample(g, [&](const Point& x) { return 1.0 / (1.0 + distance_squared(x, c)); });
    f *= 1.0 / f.norm();
    return f;
  };
  const auto pa = profile(a), pb = profile(b);
  const double overlap = std::abs(inner_product(pa, pb));
  ASSERT_LT(overlap, 0.5);
  EXPECT_LE((fam.member(0) - pa).norm(), overlap);
  EXPECT_LE((fam.member(1) - pb).norm(), overlap);
  EXPECT_LE(fam.orthonormality_residual(), 1e-8);
}

TEST(PowerLaw, CertifiedBelowLimit) {
  auto g = make_grid(1, 128.0, 0.25);
  auto fam = build_power_law_family(integer_lattice(1, {-8, 8}), g, 2.0);
  EXPECT_LE(fam.orthonormality_residual(), 1e-8);
  EXPECT_DOUBLE_EQ(fam.s_limit(), 1.5);
  const TruncationGuard guard{-1.0, 1e-3};
  const double m = certify_s_localized(fam, 1.2, guard);
  EXPECT_TRUE(std::isfinite(m));
  EXPECT_GT(m, 1.0);
  EXPECT_EQ(fam.moment_bound(1.2), m);
  EXPECT_THROW(certify_s_localized(fam, 2.0, guard), Error);
}

TEST(PowerLaw, LowdinPreservesSpan) {
  auto g = make_grid(1, 16.0, 0.25);
  auto set = integer_lattice(1, {-3, 3});
  auto fam = build_power_law_family(set, g, 2.0);
  const auto p = projection(fam);
  for (const auto& c : set.centers()) {
    auto raw = GridFunction::sample(g, [&](const Point& x) { return 1.0 / (1.0 + distance_squared(x, c)); });
    EXPECT_LT((p.apply(raw) - raw).norm(), 1e-8 * raw.norm());
  }
}

TEST(PowerLaw, DegenerateFrameAndBadExponent) {
  auto g = make_grid(1, 8.0, 0.25);
  auto raw = GridFunction::sample(g, [](const Point& x) { return std::exp(-x[0] * x[0]); });
  std::vector<GridFunction> frame{raw, raw};
  EXPECT_THROW(lowdin_orthonormalize(frame), Error);
  EXPECT_THROW(build_power_law_family(integer_lattice(1, {-1, 1}), g, 0.4), Error);
}

TEST(Exponential, ImpliesAlgebraic) {
  auto g = make_grid(1, 16.0, 0.0625);
  auto fam = build_exponential_family(integer_lattice(1, {-3, 3}), g, 3.0);
  const double alpha = 1.0;
  const double me = certify_exponential(fam, alpha);
  for (double s : {0.5, 1.0, 2.0, 4.0}) {
    double sup = 0.0;
    for (double t = 0.0; t < 60.0; t += 1e-3) sup = std::max(sup, std::pow(1 + t * t, s) * std::exp(-2 * alpha * t));
    EXPECT_LE(certify_s_localized(fam, s), me * sup * (1 + 1e-9));
  }
}

TEST(Manifest, ListsCentersAndMoments) {
  auto g = make_grid(1, 8.0, 0.1);
  auto fam = build_extremely_localized_family(integer_lattice(1, {-2, 2}), g);
  certify_s_localized(fam, 1.0);
  const auto j = family_manifest(fam);
  EXPECT_EQ(j["centers"].size(), 5u);
  EXPECT_TRUE(j.contains("orthonormality_residual"));
}
