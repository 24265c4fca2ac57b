#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <vector>

#include "sltc/adjust.hpp"
#include "sltc/errors.hpp"
#include "sltc/rng.hpp"

using namespace sltc;

namespace {

MappingMatrix matrix_from_rows(std::vector<std::vector<std::uint32_t>> rows,
                               std::size_t cols) {
  MappingMatrix a;
  a.rows = rows.size();
  a.cols = cols;
  for (std::size_t k = 0; k < cols; ++k) a.screenline_ids.push_back(static_cast<long long>(k));
  a.row_cols = std::move(rows);
  return a;
}

// The worked three-class example: rows (1,1,0,0), (0,1,0,1), (0,0,1,1).
MappingMatrix worked_matrix() {
  return matrix_from_rows({{0, 1}, {1, 3}, {2, 3}}, 4);
}

Eigen::MatrixXd dense(const MappingMatrix& a) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.rows),
                                            static_cast<Eigen::Index>(a.cols));
  for (std::size_t l = 0; l < a.rows; ++l)
    for (std::uint32_t k : a.row_cols[l]) m(static_cast<Eigen::Index>(l), k) = 1.0;
  return m;
}

// Independent oracle: the class-dimension normal equations solved densely.
Eigen::VectorXd primal_oracle(const MappingMatrix& a, const Eigen::VectorXd& y,
                              double lambda) {
  Eigen::MatrixXd A = dense(a);
  Eigen::MatrixXd m =
      A * A.transpose() + lambda * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(a.rows),
                                                             static_cast<Eigen::Index>(a.rows));
  return m.ldlt().solve(A * y);
}

MappingMatrix random_matrix(Rng& rng, std::size_t max_rows, std::size_t max_cols) {
  std::size_t rows = 1 + rng.below(max_rows);
  std::size_t cols = 2 + rng.below(max_cols - 1);
  std::vector<std::vector<std::uint32_t>> rc(rows);
  for (auto& row : rc) {
    for (std::uint32_t k = 0; k < cols; ++k)
      if (rng.bernoulli(0.4)) row.push_back(k);
    if (row.empty()) row.push_back(static_cast<std::uint32_t>(rng.below(cols)));
  }
  return matrix_from_rows(std::move(rc), cols);
}

}  // namespace

TEST_CASE("adjust: ridge closed-form cases") {
  MappingMatrix eye = matrix_from_rows({{0}, {1}, {2}}, 3);

  std::vector<double> zero(3, 0.0);
  RidgeSolution s0 = ridge_solve(eye, zero, 1.0);
  for (double v : s0.x_star) CHECK(v == 0.0);

  std::vector<double> y = {2.0, 4.0, 6.0};
  RidgeSolution s1 = ridge_solve(eye, y, 1.0);
  CHECK(s1.x_star[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1.x_star[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s1.x_star[2] == doctest::Approx(3.0).epsilon(1e-12));

  MappingMatrix a = worked_matrix();
  std::vector<double> gap = {1.0, 0.0, -1.0, 2.0};
  RidgeSolution s2 = ridge_solve(a, gap, 1.0);
  // Frozen from an independent dense factorization of the class-dimension
  // system before this solver existed.
  CHECK(s2.x_star[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(s2.x_star[1] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(s2.x_star[2] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(s2.residual_inf <= 1e-8 * (1.0 + s2.ay_inf));

  double j_star = objective(a, gap, 1.0, s2.x_star);
  std::vector<double> at_zero(3, 0.0);
  CHECK(j_star == doctest::Approx(32.0 / 7.0).epsilon(1e-12));
  CHECK(objective(a, gap, 1.0, at_zero) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(j_star <= 6.0);
}

TEST_CASE("adjust: ridge agrees with the dense primal oracle on random instances") {
  Rng rng(mix_seed({0xad3057ULL, 1}));
  for (int rep = 0; rep < 40; ++rep) {
    MappingMatrix a = random_matrix(rng, 20, 6);
    Eigen::VectorXd y(static_cast<Eigen::Index>(a.cols));
    for (std::size_t k = 0; k < a.cols; ++k) y[static_cast<Eigen::Index>(k)] = rng.uniform(-20.0, 20.0);
    for (double lambda : {0.1, 1.0, 10.0}) {
      std::vector<double> yv(y.data(), y.data() + y.size());
      RidgeSolution mine = ridge_solve(a, yv, lambda);
      Eigen::VectorXd oracle = primal_oracle(a, y, lambda);

      // Second independent route: the screenline-dimension push-through.
      Eigen::MatrixXd A = dense(a);
      Eigen::MatrixXd g = A.transpose() * A +
                          lambda * Eigen::MatrixXd::Identity(
                                       static_cast<Eigen::Index>(a.cols),
                                       static_cast<Eigen::Index>(a.cols));
      Eigen::VectorXd dual = A * g.ldlt().solve(y);

      for (std::size_t l = 0; l < a.rows; ++l) {
        CHECK(std::fabs(mine.x_star[l] - oracle[static_cast<Eigen::Index>(l)]) <= 1e-8);
        CHECK(std::fabs(dual[static_cast<Eigen::Index>(l)] -
                        oracle[static_cast<Eigen::Index>(l)]) <= 1e-8);
      }
      CHECK(mine.residual_inf <= 1e-8 * (1.0 + mine.ay_inf));
    }
  }
}

TEST_CASE("adjust: ridge norm shrinks as lambda grows") {
  Rng rng(mix_seed({0xad3057ULL, 2}));
  for (int rep = 0; rep < 20; ++rep) {
    MappingMatrix a = random_matrix(rng, 15, 5);
    std::vector<double> y(a.cols);
    for (double& v : y) v = rng.uniform(-10.0, 10.0);
    double prev = -1.0;
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      RidgeSolution s = ridge_solve(a, y, lambda);
      double norm = 0.0;
      for (double v : s.x_star) norm += v * v;
      norm = std::sqrt(norm);
      if (prev >= 0.0) CHECK(norm <= prev + 1e-9);
      prev = norm;
    }
  }
}

TEST_CASE("adjust: objective validates dimensions and hits zero in the lambda limit") {
  MappingMatrix eye = matrix_from_rows({{0}, {1}}, 2);
  std::vector<double> y = {1.0, 2.0};
  std::vector<double> x = {1.0, 2.0};
  CHECK(objective(eye, y, 1e-12, x) == doctest::Approx(0.0).epsilon(1e-10));

  std::vector<double> short_x = {1.0};
  CHECK_THROWS_AS(objective(eye, y, 1.0, short_x), DimensionMismatch);
  std::vector<double> short_y = {1.0};
  CHECK_THROWS_AS(objective(eye, short_y, 1.0, x), DimensionMismatch);

  std::vector<double> zero(2, 0.0);
  CHECK(objective(eye, y, 1.0, zero) == doctest::Approx(5.0));  // ||y||^2
}

TEST_CASE("adjust: rounding is half away from zero") {
  MappingMatrix eye = matrix_from_rows({{0}, {1}}, 2);
  RidgeSolution s;
  s.x_star = {1.6, -0.4};
  s.residual_inf = 0.0;
  s.ay_inf = 0.0;
  std::vector<double> y = {0.0, 0.0};
  std::vector<double> x_o = {10.0, 10.0};
  Adjustment adj = round_and_repair(eye, y, 1.0, s, x_o);
  CHECK(adj.rounded == std::vector<long long>{2, 0});

  s.x_star = {-2.5, 2.5};
  adj = round_and_repair(eye, y, 1.0, s, x_o);
  CHECK(adj.rounded == std::vector<long long>{-3, 3});
  CHECK(adj.pinned == std::vector<char>{0, 0});
}

TEST_CASE("adjust: repair pins classes that would lose more tours than exist") {
  // Class 0 crosses screenline 0 alone; the large negative gap there drags
  // x*_0 far below its count of 3.
  MappingMatrix a = matrix_from_rows({{0}, {0, 1}, {1}}, 2);
  std::vector<double> y = {-50.0, 5.0};
  std::vector<double> x_o = {3.0, 4.0, 6.0};
  double lambda = 0.1;

  RidgeSolution s = ridge_solve(a, y, lambda);
  Adjustment adj = round_and_repair(a, y, lambda, s, x_o);

  bool any_pinned = false;
  for (std::size_t l = 0; l < adj.rounded.size(); ++l) {
    CHECK(static_cast<double>(adj.rounded[l]) >= -x_o[l]);
    if (adj.pinned[l]) {
      any_pinned = true;
      CHECK(adj.rounded[l] == -static_cast<long long>(x_o[l]));
      CHECK(adj.x_star[l] == -x_o[l]);
    }
  }
  CHECK(any_pinned);

  // Independent replay: dense solves, explicit pin elimination.
  std::size_t n = a.rows;
  Eigen::MatrixXd A = dense(a);
  std::vector<char> pinned(n, 0);
  std::vector<long long> rounded(n, 0);
  for (;;) {
    Eigen::VectorXd y_eff(2);
    for (std::size_t k = 0; k < 2; ++k) y_eff[static_cast<Eigen::Index>(k)] = y[k];
    std::vector<std::size_t> free_idx;
    for (std::size_t l = 0; l < n; ++l) {
      if (pinned[l]) {
        for (std::uint32_t k : a.row_cols[l]) y_eff[k] += x_o[l];
      } else {
        free_idx.push_back(l);
      }
    }
    Eigen::MatrixXd af(static_cast<Eigen::Index>(free_idx.size()), 2);
    for (std::size_t i = 0; i < free_idx.size(); ++i)
      af.row(static_cast<Eigen::Index>(i)) = A.row(static_cast<Eigen::Index>(free_idx[i]));
    Eigen::MatrixXd m = af * af.transpose() +
                        lambda * Eigen::MatrixXd::Identity(
                                     static_cast<Eigen::Index>(free_idx.size()),
                                     static_cast<Eigen::Index>(free_idx.size()));
    Eigen::VectorXd xf = m.ldlt().solve(af * y_eff);
    bool changed = false;
    for (std::size_t i = 0; i < free_idx.size(); ++i) {
      std::size_t l = free_idx[i];
      long long r = std::llround(xf[static_cast<Eigen::Index>(i)]);
      if (static_cast<double>(r) < -x_o[l]) {
        pinned[l] = 1;
        rounded[l] = -static_cast<long long>(x_o[l]);
        changed = true;
      } else {
        rounded[l] = r;
      }
    }
    if (!changed) break;
  }
  for (std::size_t l = 0; l < n; ++l) {
    CHECK(adj.pinned[l] == pinned[l]);
    CHECK(adj.rounded[l] == rounded[l]);
  }
}

TEST_CASE("adjust: apply produces clones, removals, and exact count arithmetic") {
  // Three classes over member tours 1..5 as in the worked example.
  std::vector<NodeTour> tours;
  for (long long id = 1; id <= 5; ++id) tours.push_back({id, 0, 1, {{2, {id}}}, 100.0});
  std::vector<SlbClass> classes = {{{1, 2}, 2, {1, 2}}, {{2, 4}, 2, {3, 4}}, {{3, 4}, 1, {5}}};

  SUBCASE("zero adjustment is the identity") {
    std::vector<long long> adj = {0, 0, 0};
    TargetTours t = apply_adjustment(tours, classes, adj, 11);
    REQUIRE(t.tours.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(t.tours[i].id == tours[i].id);
    CHECK(t.clone_log.empty());
    CHECK(t.removal_log.empty());
  }

  SUBCASE("single-member class cloned twice clones the same tour") {
    std::vector<long long> adj = {0, 0, 2};
    TargetTours t = apply_adjustment(tours, classes, adj, 11);
    REQUIRE(t.tours.size() == 7);
    REQUIRE(t.clone_log.size() == 1);
    CHECK(t.clone_log[0].first == 5);
    CHECK(t.clone_log[0].second.size() == 2);
    CHECK(t.tours[5].id == 6);
    CHECK(t.tours[6].id == 7);
    CHECK(t.tours[5].stops[0].shipments == std::vector<long long>{5});
  }

  SUBCASE("emptying a class removes all members") {
    std::vector<long long> adj = {-2, 0, 0};
    TargetTours t = apply_adjustment(tours, classes, adj, 11);
    REQUIRE(t.tours.size() == 3);
    CHECK(t.removal_log == std::vector<long long>{1, 2});
  }

  SUBCASE("infeasible removal throws") {
    std::vector<long long> adj = {-3, 0, 0};
    CHECK_THROWS_AS(apply_adjustment(tours, classes, adj, 11), InfeasibleAdjustment);
  }

  SUBCASE("size bookkeeping holds for mixed adjustments") {
    std::vector<long long> adj = {2, -1, 1};
    TargetTours t = apply_adjustment(tours, classes, adj, 11);
    std::size_t clones = 0;
    for (const auto& [src, ids] : t.clone_log) clones += ids.size();
    CHECK(clones == 3);
    CHECK(t.removal_log.size() == 1);
    CHECK(t.tours.size() == 5 + clones - 1);

    // Fresh ids never collide with survivors.
    std::set<long long> ids;
    for (const NodeTour& tr : t.tours) CHECK(ids.insert(tr.id).second);
  }

  SUBCASE("same seed reproduces the adjustment application") {
    std::vector<long long> adj = {2, -1, 1};
    TargetTours t1 = apply_adjustment(tours, classes, adj, 11);
    TargetTours t2 = apply_adjustment(tours, classes, adj, 11);
    REQUIRE(t1.tours.size() == t2.tours.size());
    for (std::size_t i = 0; i < t1.tours.size(); ++i) CHECK(t1.tours[i].id == t2.tours[i].id);
    CHECK(t1.removal_log == t2.removal_log);
  }
}
