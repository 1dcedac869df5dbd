#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "support.hpp"
#include "xdtl/errors.hpp"
#include "xdtl/tlcore.hpp"

using namespace xdtl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Transform-update objective, evaluated directly from its definition.
double update_objective(const MatrixXd& T, const MatrixXd& X, const MatrixXd& Z, double lambda,
                        double epsilon) {
  return (T * X - Z).squaredNorm() +
         lambda * (epsilon * T.squaredNorm() - std::log(std::abs(T.determinant())));
}

MatrixXd update_gradient(const MatrixXd& T, const MatrixXd& X, const MatrixXd& Z, double lambda,
                         double epsilon) {
  return 2.0 * (T * X - Z) * X.transpose() + lambda * (2.0 * epsilon * T - T.inverse().transpose());
}

// Plain gradient descent with backtracking, run until the gradient vanishes.
MatrixXd descend(MatrixXd T, const MatrixXd& X, const MatrixXd& Z, double lambda, double epsilon) {
  double f = update_objective(T, X, Z, lambda, epsilon);
  for (int it = 0; it < 200000; ++it) {
    const MatrixXd g = update_gradient(T, X, Z, lambda, epsilon);
    if (g.norm() < 1e-12) break;
    double step = 1.0;
    while (step > 1e-20) {
      const MatrixXd cand = T - step * g;
      const double det = cand.determinant();
      if (det != 0.0 && std::signbit(det) == std::signbit(T.determinant())) {
        const double fc = update_objective(cand, X, Z, lambda, epsilon);
        if (fc <= f - 1e-4 * step * g.squaredNorm()) {
          T = cand;
          f = fc;
          break;
        }
      }
      step *= 0.5;
    }
    if (step <= 1e-20) break;
  }
  return T;
}

// Residual of the best tau-sparse approximation, by enumerating supports.
double brute_force_residual(const VectorXd& v, int tau) {
  const int d = static_cast<int>(v.size());
  double best = v.squaredNorm();
  for (int mask = 0; mask < (1 << d); ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) > tau) continue;
    double r = 0.0;
    for (int i = 0; i < d; ++i)
      if (!(mask & (1 << i))) r += v(i) * v(i);
    best = std::min(best, r);
  }
  return best;
}

}  // namespace

TEST_SUITE("tlcore") {

TEST_CASE("objective on hand-evaluated instances") {
  const MatrixXd I2 = MatrixXd::Identity(2, 2);
  MatrixXd x(2, 1);
  MatrixXd z(2, 1);
  x << 1, 0;
  z << 1, 0;
  CHECK(tl::objective(I2, x, z, 1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-15));

  x << 1, 1;
  CHECK(tl::objective(I2, x, z, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));

  MatrixXd T(2, 2);
  T << 2, 0, 0, 1;
  const double expected = 0.5 * (0.1 * 5.0 - std::numbers::ln2);
  CHECK(tl::objective(T, x, T * x, 0.5, 0.1) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(tl::objective(T, x, T * x, 0.5, 0.1) == doctest::Approx(-0.09657).epsilon(1e-4));
}

TEST_CASE("objective rejects singular transforms and bad shapes") {
  const MatrixXd S = MatrixXd::Zero(2, 2);
  const MatrixXd x = MatrixXd::Ones(2, 1);
  CHECK_THROWS_AS(tl::objective(S, x, x, 1.0, 1.0), DomainError);
  CHECK_THROWS_WITH_AS(tl::objective(S, x, x, 1.0, 1.0), doctest::Contains("log-det undefined"),
                       DomainError);
  CHECK_THROWS_AS(tl::objective(MatrixXd::Identity(3, 3), x, x, 1.0, 1.0), ArgumentError);
}

TEST_CASE("log|det| accepts negative determinants") {
  MatrixXd T(2, 2);
  T << 0, 3, 2, 0;
  CHECK(tl::log_abs_det(T) == doctest::Approx(std::log(6.0)));
}

TEST_CASE("sparse_code keeps the largest magnitudes") {
  const MatrixXd I2 = MatrixXd::Identity(2, 2);
  MatrixXd x(2, 1);
  x << 3, 1;
  const MatrixXd z = tl::sparse_code(I2, x, 1).Z;
  CHECK(z(0, 0) == 3.0);
  CHECK(z(1, 0) == 0.0);

  MatrixXd T(2, 2);
  T << 1, 2, 0, 1;
  x << 1, 1;
  const MatrixXd zt = tl::sparse_code(T, x, 1).Z;
  CHECK(zt(0, 0) == 3.0);
  CHECK(zt(1, 0) == 0.0);
  // The other 1-sparse support leaves residual 9 against 1.
  CHECK((T * x - zt).squaredNorm() == doctest::Approx(brute_force_residual(T * x, 1)));
}

TEST_CASE("sparse_code with tau = d returns TX") {
  const MatrixXd X = testing::gaussian(4, 7, 3);
  CHECK(tl::sparse_code(MatrixXd::Identity(4, 4), X, 4).Z == X);
}

TEST_CASE("sparse_code ties keep the lower row") {
  MatrixXd x(4, 1);
  x << 1, -2, 2, -1;
  const MatrixXd z = tl::sparse_code(MatrixXd::Identity(4, 4), x, 1).Z;
  CHECK(z(1, 0) == -2.0);
  CHECK(z.cwiseAbs().sum() == 2.0);
}

TEST_CASE("sparse_code rejects tau outside [1, d]") {
  const MatrixXd X = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(tl::sparse_code(MatrixXd::Identity(2, 2), X, 3), ArgumentError);
  CHECK_THROWS_AS(tl::sparse_code(MatrixXd::Identity(2, 2), X, 0), ArgumentError);
}

TEST_CASE("property: sparse_code matches exhaustive support search") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 6);
    const int tau = 1 + static_cast<int>(rng() % std::min(3, d));
    const MatrixXd T = testing::gaussian(d, d, rng());
    const MatrixXd x = testing::gaussian(d, 1, rng());
    const MatrixXd z = tl::sparse_code(T, x, tau).Z;
    CHECK((z.array() != 0.0).count() <= tau);
    CHECK((T * x - z).squaredNorm() <= brute_force_residual(T * x, tau) + 1e-12);
  }
}

TEST_CASE("update_transform scalar cases") {
  MatrixXd one = MatrixXd::Ones(1, 1);
  const MatrixXd t = tl::update_transform(one, one, 1.0, 1.0);
  CHECK(t(0, 0) == doctest::Approx((1.0 + std::sqrt(5.0)) / 4.0).epsilon(1e-12));
  CHECK(std::abs(t(0, 0) - 0.80902) < 1e-5);

  const MatrixXd t0 = tl::update_transform(one, MatrixXd::Zero(1, 1), 1.0, 1.0);
  CHECK(t0(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("update_transform requires lambda > 0 and finite data") {
  const MatrixXd X = MatrixXd::Ones(2, 3);
  CHECK_THROWS_WITH_AS(tl::update_transform(X, X, 0.0, 1.0),
                       doctest::Contains("closed form requires"), ArgumentError);
  MatrixXd bad = X;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(tl::update_transform(bad, X, 1.0, 1.0), ArgumentError);
}

TEST_CASE("update_transform agrees with a descent oracle on random 2x2 problems") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MatrixXd X = testing::gaussian(2, 6, 100 + seed);
    const MatrixXd Z = testing::gaussian(2, 6, 200 + seed);
    const double lambda = 0.7;
    const double epsilon = 0.4;
    const MatrixXd T = tl::update_transform(X, Z, lambda, epsilon);
    // The log term splits the search into two determinant-sign regions.
    MatrixXd flip = MatrixXd::Identity(2, 2);
    flip(0, 0) = -1.0;
    const MatrixXd a = descend(MatrixXd::Identity(2, 2), X, Z, lambda, epsilon);
    const MatrixXd b = descend(flip, X, Z, lambda, epsilon);
    const MatrixXd& best =
        update_objective(a, X, Z, lambda, epsilon) <= update_objective(b, X, Z, lambda, epsilon) ? a : b;
    CHECK((best - T).norm() <= 1e-5);
  }
}

TEST_CASE("property: update_transform is stationary with nonzero determinant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 5);
    const int n = d + static_cast<int>(rng() % 20);
    const MatrixXd X = testing::gaussian(d, n, rng());
    const MatrixXd Z = tl::sparse_code(MatrixXd::Identity(d, d), X, std::max(1, d / 2)).Z;
    const double lambda = 0.1 + static_cast<double>(rng() % 100) / 50.0;
    const double epsilon = 0.1 + static_cast<double>(rng() % 100) / 100.0;
    const MatrixXd T = tl::update_transform(X, Z, lambda, epsilon);
    CHECK(std::abs(T.determinant()) > 0.0);

    const double f = update_objective(T, X, Z, lambda, epsilon);
    double worst = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        MatrixXd p = T;
        MatrixXd m = T;
        p(i, j) += 1e-6;
        m(i, j) -= 1e-6;
        const double g = (update_objective(p, X, Z, lambda, epsilon) -
                          update_objective(m, X, Z, lambda, epsilon)) / 2e-6;
        worst = std::max(worst, std::abs(g));
      }
    CHECK(worst <= 1e-4 * (1.0 + std::abs(f)));
  }
}

TEST_CASE("fit_transform on data already sparse under the identity") {
  MatrixXd X = MatrixXd::Zero(6, 30);
  std::mt19937_64 rng(9);
  for (int j = 0; j < 30; ++j) {
    X(static_cast<int>(rng() % 6), j) = 1.0 + static_cast<double>(j);
    X(static_cast<int>(rng() % 6), j) -= 0.5;
  }
  tl::TransformParams p;
  p.tau = 2;
  p.max_iters = 10;
  const auto model = tl::fit_transform(X, p);
  const MatrixXd Z0 = tl::sparse_code(MatrixXd::Identity(6, 6), X, 2).Z;
  CHECK((X - Z0).norm() == 0.0);
  CHECK(model.objective_trace.front() == doctest::Approx(p.lambda * p.epsilon * 6.0));
  for (std::size_t k = 1; k < model.objective_trace.size(); ++k) {
    const double prev = model.objective_trace[k - 1];
    CHECK(model.objective_trace[k] <= prev + 1e-9 * (1.0 + std::abs(prev)));
  }
}

TEST_CASE("fit_transform descends from its initialization") {
  const MatrixXd X = testing::gaussian(2, 40, 12);
  tl::TransformParams p;
  p.tau = 1;
  const auto model = tl::fit_transform(X, p);
  const MatrixXd I = MatrixXd::Identity(2, 2);
  const double start = tl::objective(I, X, tl::sparse_code(I, X, 1).Z, p.lambda, p.epsilon);
  CHECK(model.objective_trace.front() == doctest::Approx(start).epsilon(1e-14));
  const double final_value = tl::objective(model.T, X, tl::encode(model, X).Z, p.lambda, p.epsilon);
  CHECK(final_value <= start);
  CHECK(final_value == doctest::Approx(model.objective_trace.back()).epsilon(1e-12));
}

TEST_CASE("property: fit_transform traces are monotone and deterministic") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const MatrixXd X = testing::gaussian(8, 100, 40 + seed);
    tl::TransformParams p;
    p.tau = 1 + static_cast<int>(seed % 4);
    p.lambda = 0.5 + 0.25 * static_cast<double>(seed);
    p.max_iters = 30;
    const auto a = tl::fit_transform(X, p);
    for (std::size_t k = 1; k < a.objective_trace.size(); ++k) {
      const double prev = a.objective_trace[k - 1];
      CHECK(a.objective_trace[k] <= prev + 1e-9 * (1.0 + std::abs(prev)));
    }
    const auto b = tl::fit_transform(X, p);
    CHECK(a.objective_trace == b.objective_trace);
    CHECK(a.T == b.T);
  }
}

TEST_CASE("fit_transform stops after max_iters or once the change is below tol") {
  const MatrixXd X = testing::gaussian(5, 60, 77);
  tl::TransformParams p;
  p.tau = 2;
  p.max_iters = 3;
  p.tol = 1e-300;
  CHECK(tl::fit_transform(X, p).objective_trace.size() == 4);
  p.max_iters = 500;
  p.tol = 1e-2;
  const auto loose = tl::fit_transform(X, p);
  CHECK(loose.objective_trace.size() < 501);
}

TEST_CASE("random orthonormal initialization is seeded and orthonormal") {
  const MatrixXd Q = tl::random_orthonormal(5, 3);
  CHECK((Q.transpose() * Q - MatrixXd::Identity(5, 5)).norm() < 1e-12);
  CHECK(Q == tl::random_orthonormal(5, 3));
  CHECK(Q != tl::random_orthonormal(5, 4));
  const MatrixXd X = testing::gaussian(5, 50, 1);
  tl::TransformParams p;
  p.tau = 2;
  p.seed = 3;
  const auto m = tl::fit_transform(X, p, std::nullopt, tl::InitKind::random_orthonormal);
  const double start = tl::objective(Q, X, tl::sparse_code(Q, X, 2).Z, p.lambda, p.epsilon);
  CHECK(m.objective_trace.front() == doctest::Approx(start).epsilon(1e-14));
}

TEST_CASE("encode is the model's sparse code") {
  const MatrixXd X = testing::gaussian(4, 30, 8);
  tl::TransformParams p;
  p.tau = 2;
  const auto m = tl::fit_transform(X, p);
  const MatrixXd Z = tl::encode(m, X).Z;
  CHECK(Z == tl::sparse_code(m.T, X, 2).Z);

  MatrixXd twins(4, 2);
  twins.col(0) = X.col(3);
  twins.col(1) = X.col(3);
  const MatrixXd zt = tl::encode(m, twins).Z;
  CHECK(zt.col(0) == zt.col(1));
  CHECK(zt.col(0) == Z.col(3));

  tl::TransformModel full = m;
  full.params.tau = 4;
  CHECK(tl::encode(full, X).Z == m.T * X);
  CHECK_THROWS_AS(tl::encode(m, MatrixXd::Ones(3, 2)), ArgumentError);
}

TEST_CASE("parameter validation") {
  tl::TransformParams p;
  CHECK_NOTHROW(p.validate(8));
  p.tau = 9;
  CHECK_THROWS_AS(p.validate(8), ArgumentError);
  p = {};
  p.lambda = -1.0;
  CHECK_THROWS_AS(p.validate(8), ArgumentError);
  p = {};
  p.epsilon = 0.0;
  CHECK_THROWS_AS(p.validate(8), ArgumentError);
  p = {};
  p.tol = 0.0;
  CHECK_THROWS_AS(p.validate(8), ArgumentError);
  CHECK_THROWS_AS(validate_features(MatrixXd(0, 0)), ArgumentError);
}

}
