#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "reg_fixtures.hpp"
#include "pflo/registration.hpp"

using namespace pflo;

namespace {

LocalFeatureMap map_with_edges(const std::vector<Point3>& positions) {
  FilterParams params;
  params.edge_voxel = 1e-6;  // keep every point
  LocalFeatureMap map(params);
  std::vector<MatchedFeature> features(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) features[i].position = positions[i];
  map.pfilter_update(features, {}, Pose::identity(), 0);
  return map;
}

}  // namespace

TEST_CASE("find_correspondence returns all points of a tiny map") {
  const LocalFeatureMap map = map_with_edges(
      {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(0, 0, 1), Point3(1, 1, 0)});
  const auto ids = map.find_correspondence(Point3(0.4, 0.4, 0.1), FeatureKind::edge, 5, 1.0);
  CHECK(ids.size() == 5);
}

TEST_CASE("find_correspondence gates on the nearest distance") {
  const LocalFeatureMap map = map_with_edges({Point3(0, 0, 0), Point3(1, 0, 0)});
  CHECK(map.find_correspondence(Point3(10, 0, 0), FeatureKind::edge, 5, 1.0).empty());
  CHECK(map.find_correspondence(Point3(0, 0, 0), FeatureKind::surface, 5, 1.0).empty());
}

TEST_CASE("find_correspondence matches the brute-force 5-NN oracle") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<Point3> positions;
  for (int i = 0; i < 1000; ++i) positions.push_back(Point3(u(rng), u(rng), u(rng)));
  const LocalFeatureMap map = map_with_edges(positions);

  std::vector<Eigen::Vector3d> live;
  std::vector<std::uint64_t> live_ids;
  for (const auto& p : map.points(FeatureKind::edge)) {
    live.push_back(p.position);
    live_ids.push_back(p.id);
  }
  for (int q = 0; q < 100; ++q) {
    const Point3 query(u(rng), u(rng), u(rng));
    const auto got = map.find_correspondence(query, FeatureKind::edge, 5, 1e9);
    const auto want = oracles::brute_force_knn(live, live_ids, query, 5);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i].id);
  }
}

TEST_CASE("fit_line accepts collinear sets and rejects planar or degenerate ones") {
  std::vector<Point3> collinear;
  const Eigen::Vector3d dir = Eigen::Vector3d(2, -1, 0.5).normalized();
  for (int i = 0; i < 5; ++i) collinear.push_back(Point3(1, 2, 3) + 0.3 * i * dir);
  const auto line = fit_line(collinear, 3.0);
  REQUIRE(line.has_value());
  CHECK(std::abs(std::abs(line->direction.dot(dir)) - 1.0) < 1e-9);

  std::vector<Point3> circle;
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * M_PI * i / 5.0;
    circle.push_back(Point3(std::cos(a), std::sin(a), 0.0));
  }
  CHECK(!fit_line(circle, 3.0).has_value());  // lambda1 == lambda2 on a regular pentagon

  const std::vector<Point3> identical(5, Point3(1, 1, 1));
  CHECK(!fit_line(identical, 3.0).has_value());
}

TEST_CASE("fit_plane accepts coplanar sets and applies the inlier gate") {
  std::vector<Point3> coplanar = {Point3(0, 0, 1), Point3(1, 0, 1), Point3(0, 1, 1),
                                  Point3(1, 1, 1), Point3(0.5, 0.5, 1)};
  const auto plane = fit_plane(coplanar, 0.2);
  REQUIRE(plane.has_value());
  CHECK(std::abs(std::abs(plane->normal.dot(Eigen::Vector3d::UnitZ())) - 1.0) < 1e-9);

  auto with_outlier = coplanar;
  with_outlier[4] = Point3(0.5, 0.5, 1.5);  // 0.5 m off the plane, gate 0.2
  CHECK(!fit_plane(with_outlier, 0.2).has_value());

  std::vector<Point3> collinear;
  for (int i = 0; i < 5; ++i) collinear.push_back(Point3(0.2 * i, 0.4 * i, 0));
  CHECK(!fit_plane(collinear, 0.2).has_value());
}

TEST_CASE("models are invariant under neighbor relabeling") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point3> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(Point3(u(rng), u(rng), 0.01 * u(rng)));
  const auto base = fit_plane(pts, 10.0);
  REQUIRE(base.has_value());
  std::vector<Point3> shuffled = {pts[3], pts[0], pts[4], pts[2], pts[1]};
  const auto again = fit_plane(shuffled, 10.0);
  REQUIRE(again.has_value());
  CHECK((base->center - again->center).norm() < 1e-12);
  CHECK((base->normal - again->normal).norm() < 1e-9);
}

TEST_CASE("edge residual equals point-to-line distance") {
  LineModel z_axis;
  z_axis.center = Point3(0, 0, 0);
  z_axis.direction = Eigen::Vector3d::UnitZ();
  CHECK(edge_residual(Point3(0, 0, 5), z_axis, Pose::identity()) < 1e-15);
  CHECK(edge_residual(Point3(3, 4, 0), z_axis, Pose::identity()) == Catch::Approx(5.0));

  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 300; ++i) {
    LineModel line;
    line.center = Point3(u(rng), u(rng), u(rng));
    line.direction = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
    const Point3 p(u(rng), u(rng), u(rng));
    const Pose t = oracles::random_pose(rng);
    const double got = edge_residual(p, line, t);
    const double want =
        oracles::point_line_distance(transform_point(t, p), line.center, line.direction);
    CHECK(got == Catch::Approx(want).margin(1e-10));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("surface residual is the signed plane distance") {
  PlaneModel ground;
  ground.center = Point3(0, 0, 0);
  ground.normal = Eigen::Vector3d::UnitZ();
  CHECK(surf_residual(Point3(7, -2, 0), ground, Pose::identity()) == 0.0);
  CHECK(surf_residual(Point3(0, 0, 2), ground, Pose::identity()) == Catch::Approx(2.0));

  std::mt19937_64 rng(93);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 300; ++i) {
    PlaneModel plane;
    plane.center = Point3(u(rng), u(rng), u(rng));
    plane.normal = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
    const Point3 p(u(rng), u(rng), u(rng));
    const Pose t = oracles::random_pose(rng);
    const double got = surf_residual(p, plane, t);
    const Point3 q = transform_point(t, p);
    const double want = (q - plane.center).dot(plane.normal);
    CHECK(got == Catch::Approx(want).margin(1e-10));

    // reflecting the world point across the plane negates the residual
    const Point3 reflected = q - 2.0 * want * plane.normal;
    const Point3 p_reflected = transform_point(inverse(t), reflected);
    CHECK(surf_residual(p_reflected, plane, t) == Catch::Approx(-want).margin(1e-9));
  }
}

TEST_CASE("plane jacobian translation block matches the geometry") {
  PlaneModel ground;
  ground.center = Point3(0, 0, 0);
  ground.normal = Eigen::Vector3d::UnitZ();
  const auto row = surf_jacobian(Point3(1, 2, 3), ground, Pose::identity());
  CHECK(row[3] == 0.0);
  CHECK(row[4] == 0.0);
  CHECK(row[5] == 1.0);
}

TEST_CASE("analytic jacobians match central finite differences") {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  int checked = 0;
  while (checked < 1000) {
    const Pose t = oracles::random_pose(rng, 1.5, 5.0);
    const Point3 p(u(rng), u(rng), u(rng));
    Eigen::Matrix<double, 1, 6> got, want;
    if (checked % 2 == 0) {
      LineModel line;
      line.center = Point3(u(rng), u(rng), u(rng));
      line.direction = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
      if (edge_residual(p, line, t) < 1e-3) continue;  // avoid the non-smooth zero
      got = edge_jacobian(p, line, t);
      want = oracles::finite_difference_jacobian(
          [&](const Pose& q) { return edge_residual(p, line, q); }, t);
    } else {
      PlaneModel plane;
      plane.center = Point3(u(rng), u(rng), u(rng));
      plane.normal = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
      got = surf_jacobian(p, plane, t);
      want = oracles::finite_difference_jacobian(
          [&](const Pose& q) { return surf_residual(p, plane, q); }, t);
    }
    CHECK((got - want).norm() <= 1e-4 * std::max(1.0, want.norm()));
    ++checked;
  }
}

TEST_CASE("squared-cost gradient vanishes at a zero residual") {
  // point exactly on the plane: d * J = 0 regardless of J
  PlaneModel plane;
  plane.center = Point3(1, 1, 1);
  plane.normal = Eigen::Vector3d(1, 2, 2).normalized();
  const Point3 p = plane.center + plane.normal.unitOrthogonal() * 2.0;
  const double r = surf_residual(p, plane, Pose::identity());
  const auto j = surf_jacobian(p, plane, Pose::identity());
  CHECK((r * j).norm() < 1e-9);
}

TEST_CASE("solve_pose is immediate at the optimum") {
  std::mt19937_64 rng(101);
  const Pose t_true = oracles::random_pose(rng, 0.5, 3.0);
  const auto corrs = fixtures::plane_line_problem(t_true, 30, rng);
  const SolveResult result = solve_pose(corrs, t_true, SolverConfig{});
  CHECK(result.iterations <= 2);
  CHECK(result.final_cost < 1e-12);
}

TEST_CASE("solve_pose recovers a perturbed initialization") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose t_true = oracles::random_pose(rng, 0.4, 2.0);
    const auto corrs = fixtures::plane_line_problem(t_true, 30, rng);

    std::uniform_real_distribution<double> sign(-1.0, 1.0);
    Twist pert;
    pert.omega = Eigen::Vector3d(sign(rng), sign(rng), sign(rng)).normalized() * (3.0 * M_PI / 180.0);
    pert.v = Eigen::Vector3d(sign(rng), sign(rng), sign(rng)).normalized() * 0.3;
    const Pose t0 = compose(se3_exp(pert), t_true);

    const SolveResult result = solve_pose(corrs, t0, SolverConfig{});
    CHECK((result.pose.translation - t_true.translation).norm() < 1e-3);
    CHECK(result.pose.rotation.angularDistance(t_true.rotation) < 0.01 * M_PI / 180.0);
  }
}

TEST_CASE("solve_pose rejects underdetermined problems") {
  std::mt19937_64 rng(107);
  auto corrs = fixtures::plane_line_problem(Pose::identity(), 1, rng);  // 5 correspondences
  REQUIRE(corrs.size() == 5);
  CHECK_THROWS_AS(solve_pose(corrs, Pose::identity(), SolverConfig{}), DegenerateRegistration);
}

TEST_CASE("solve_pose is deterministic") {
  std::mt19937_64 rng(109);
  const Pose t_true = oracles::random_pose(rng, 0.4, 2.0);
  const auto corrs = fixtures::plane_line_problem(t_true, 20, rng);
  Twist pert;
  pert.omega = Eigen::Vector3d(0.01, -0.02, 0.03);
  pert.v = Eigen::Vector3d(0.1, 0.05, -0.08);
  const Pose t0 = compose(se3_exp(pert), t_true);
  const SolveResult a = solve_pose(corrs, t0, SolverConfig{});
  const SolveResult b = solve_pose(corrs, t0, SolverConfig{});
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.pose.rotation.coeffs() == b.pose.rotation.coeffs());
  CHECK(a.final_cost == b.final_cost);
}
