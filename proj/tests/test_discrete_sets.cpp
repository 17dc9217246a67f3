#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "gwb/discrete_sets.hpp"
#include "gwb/models.hpp"

using namespace gwb;

namespace {

double brute_min_distance(std::span<const Point> pts) {
  double best = INFINITY;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::min(best, distance(pts[i], pts[j]));
  }
  return best;
}

}  // namespace

TEST(Discreteness, SquareLattice) {
  auto z2 = lattice_points(2, {-3, 3});
  std::vector<Point> pts;
  for (const auto& n : z2) pts.push_back(to_point(n));
  EXPECT_TRUE(verify_uniform_discreteness(pts, 0.49));
  EXPECT_TRUE(verify_uniform_discreteness(pts, 0.5));
  EXPECT_FALSE(verify_uniform_discreteness(pts, 0.6));
}

TEST(Discreteness, PerturbedLattice) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point> pts;
  for (const auto& n : lattice_points(2, {-5, 5})) {
    Point v{u(rng), u(rng)};
    const double len = euclidean_norm(v);
    if (len > 0.0) v = (0.2 * std::abs(u(rng)) / len) * v;
    pts.push_back(to_point(n) + v);
  }
  EXPECT_GE(brute_min_distance(pts), 0.6);
  EXPECT_TRUE(verify_uniform_discreteness(pts, 0.3));
}

TEST(Discreteness, EdgeCases) {
  EXPECT_TRUE(verify_uniform_discreteness(std::vector<Point>{}, 1.0));
  EXPECT_FALSE(verify_uniform_discreteness(std::vector<Point>{Point{1.0}, Point{1.0}}, 0.1));
  EXPECT_THROW(max_discreteness_radius(std::vector<Point>{Point{}}), Error);
}

TEST(MaxRadius, Examples) {
  std::vector<Point> z;
  for (int n = -5; n <= 5; ++n) z.push_back(Point{double(n)});
  EXPECT_DOUBLE_EQ(max_discreteness_radius(z), 0.5);
  EXPECT_DOUBLE_EQ(max_discreteness_radius(std::vector<Point>{Point{0.0}, Point{3.0}}), 1.5);
}

TEST(MaxRadius, ConsistentWithVerifyAndTranslationInvariant) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<Point> pts(30);
    for (auto& p : pts) p = Point{u(rng), u(rng)};
    const double r = max_discreteness_radius(pts);
    EXPECT_TRUE(verify_uniform_discreteness(pts, r));
    EXPECT_FALSE(verify_uniform_discreteness(pts, r * (1 + 1e-9)));
    EXPECT_DOUBLE_EQ(r, brute_min_distance(pts) / 2.0);
    const Point shift{u(rng), u(rng)};
    for (auto& p : pts) p = p + shift;
    EXPECT_NEAR(max_discreteness_radius(pts), r, 1e-12);
  }
}

TEST(DeformedLattice, IdentityAndScaling) {
  auto id = deformed_lattice([](const Point& x) { return x; }, 2, {-3, 3});
  EXPECT_EQ(id.size(), 49u);
  EXPECT_DOUBLE_EQ(id.radius(), 0.5);
  ASSERT_TRUE(id.has_labels());
  for (std::size_t i = 0; i < id.size(); ++i) EXPECT_EQ(id[i], to_point(id.labels()[i]));
  auto half = deformed_lattice([](const Point& x) { return 0.5 * x; }, 1, {-4, 4});
  EXPECT_DOUBLE_EQ(half.radius(), 0.25);
}

TEST(DeformedLattice, GubanovInverseRadius) {
  auto grid = make_grid(2, 8.0, 0.125);
  for (double xi : {0.05, 0.1}) {
    GubanovMap map(sine_deformation(2, xi), grid);
    auto set = deformed_lattice([&](const Point& n) { return map.inverse(n); }, 2, {-5, 5});
    EXPECT_GE(2.0 * set.radius(), 1.0 / (1.0 + 2.0 * xi));
    EXPECT_GE(set.radius(), (1.0 - 2.0 * xi) / 2.0);
    EXPECT_NEAR(set.radius(), brute_min_distance(set.centers()) / 2.0, 1e-15);
  }
}

TEST(DeformedLattice, MapFailureThrows) {
  EXPECT_THROW(deformed_lattice([](const Point&) { return Point{NAN}; }, 1, {0, 2}), Error);
}

TEST(UniformlyDiscreteSet, ConstructorValidates) {
  EXPECT_THROW(UniformlyDiscreteSet(1, {Point{0.0}, Point{0.5}}, 0.5), Error);
  EXPECT_NO_THROW(UniformlyDiscreteSet(1, {Point{0.0}, Point{1.0}}, 0.5));
}

TEST(CentersCsv, RoundTrip) {
  auto set = integer_lattice(2, {-2, 2}, 1.5);
  const auto path = std::filesystem::temp_directory_path() / "gwb_centers.csv";
  write_centers_csv(set, path);
  auto back = read_centers_csv(path);
  ASSERT_EQ(back.size(), set.size());
  EXPECT_EQ(back.dim(), 2);
  EXPECT_DOUBLE_EQ(back.radius(), 0.75);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(back[i], set[i]);
    EXPECT_EQ(back.labels()[i], set.labels()[i]);
  }
}
