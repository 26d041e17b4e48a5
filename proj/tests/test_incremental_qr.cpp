#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "chunkglm/errors.hpp"
#include "chunkglm/incremental_qr.hpp"

using namespace chunkglm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  MatrixXd a(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = z(rng);
  return a;
}

VectorXd positive_weights(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = u(rng);
  return w;
}

// Loads an upper-triangular factor with a nonnegative diagonal: absorbing its
// rows into an empty accumulator reproduces it exactly.
Accumulator from_factor(const MatrixXd& r, const VectorXd& b) {
  Accumulator acc(r.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) acc.absorb_row(r.row(i), b(i), 1.0);
  return acc;
}

}  // namespace

TEST_CASE("identity rows") {
  Accumulator acc(2);
  acc.absorb_row(Eigen::RowVector2d(1, 0), 3.0, 1.0);
  acc.absorb_row(Eigen::RowVector2d(0, 1), 4.0, 1.0);
  CHECK(acc.rbar().diagonal().cwiseAbs().isApprox(Eigen::Vector2d(1, 1)));
  CHECK(acc.solve_coefficients().isApprox(Eigen::Vector2d(3, 4)));
  CHECK(acc.rows_seen() == 2);
}

TEST_CASE("zero row leaves the state unchanged") {
  const MatrixXd a = random_matrix(5, 3, 1);
  Accumulator acc(3);
  acc.absorb_chunk(a, VectorXd::Ones(5), VectorXd::Ones(5));
  const MatrixXd r = acc.rbar();
  const VectorXd b = acc.bbar();
  acc.absorb_row(Eigen::RowVector3d::Zero(), 0.0, 1.0);
  CHECK(acc.rbar() == r);
  CHECK(acc.bbar() == b);
  acc.absorb_row(Eigen::RowVector3d(1, 2, 3), 5.0, 0.0);
  CHECK(acc.rbar() == r);
}

TEST_CASE("factor matches a dense QR") {
  const MatrixXd a = random_matrix(10, 3, 2);
  Accumulator acc(3);
  acc.absorb_chunk(a, VectorXd::Zero(10), VectorXd::Ones(10));
  const MatrixXd& r = acc.rbar();
  const MatrixXd ata = a.transpose() * a;
  CHECK((r.transpose() * r - ata).cwiseAbs().maxCoeff() < 1e-12 * (1 + ata.cwiseAbs().maxCoeff()));
  CHECK(r.isUpperTriangular());
  CHECK((r.diagonal().array() >= 0).all());
  MatrixXd dense = a.householderQr().matrixQR().topRows(3).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < 3; ++j)
    if (dense(j, j) < 0) dense.row(j) *= -1;
  CHECK((r - dense).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("triangular solve") {
  MatrixXd r(2, 2);
  r << 2, 1, 0, 1;
  const Accumulator acc = from_factor(r, Eigen::Vector2d(3, 1));
  CHECK(acc.rbar() == r);
  CHECK(acc.solve_coefficients().isApprox(Eigen::Vector2d(1, 1), 1e-15));
}

TEST_CASE("weighted least squares against the normal equations") {
  const MatrixXd a = random_matrix(50, 4, 3);
  const VectorXd y = random_matrix(50, 1, 4).col(0);
  const VectorXd w = positive_weights(50, 5);
  Accumulator acc(4);
  acc.absorb_chunk(a, y, w);
  const VectorXd oracle =
      (a.transpose() * w.asDiagonal() * a).ldlt().solve(a.transpose() * w.asDiagonal() * y);
  CHECK((acc.solve_coefficients() - oracle).cwiseAbs().maxCoeff() < 1e-9);
  const VectorXd resid = y - a * oracle;
  CHECK(acc.ssq_resid() == doctest::Approx(resid.dot(w.asDiagonal() * resid)).epsilon(1e-10));
}

TEST_CASE("leverages") {
  SUBCASE("identity") {
    Accumulator acc(2);
    acc.absorb_chunk(MatrixXd::Identity(2, 2), VectorXd::Zero(2), VectorXd::Ones(2));
    CHECK(acc.leverage(Eigen::RowVector2d(1, 0), 1.0) == doctest::Approx(1.0));
  }
  SUBCASE("dense hat matrix") {
    const MatrixXd a = random_matrix(6, 2, 6);
    const VectorXd w = positive_weights(6, 7);
    Accumulator acc(2);
    acc.absorb_chunk(a, VectorXd::Zero(6), w);
    const MatrixXd ws = w.cwiseSqrt().asDiagonal() * a;
    const MatrixXd hat = ws * (ws.transpose() * ws).inverse() * ws.transpose();
    const VectorXd h = acc.leverages(a, w);
    for (Eigen::Index i = 0; i < 6; ++i) {
      CHECK(std::abs(h(i) - hat(i, i)) < 1e-12);
      CHECK(std::abs(acc.leverage(a.row(i), w(i)) - h(i)) < 1e-14);
    }
  }
  SUBCASE("trace equals the rank and each lies in [0, 1]") {
    const MatrixXd a = random_matrix(300, 7, 8);
    const VectorXd w = positive_weights(300, 9);
    Accumulator acc(7);
    acc.absorb_chunk(a, VectorXd::Zero(300), w);
    const VectorXd h = acc.leverages(a, w);
    CHECK(std::abs(h.sum() - 7.0) < 1e-10);
    CHECK(h.minCoeff() >= 0.0);
    CHECK(h.maxCoeff() <= 1.0 + 1e-8);
  }
}

TEST_CASE("information solve") {
  Accumulator id(2);
  id.absorb_chunk(MatrixXd::Identity(2, 2), VectorXd::Zero(2), VectorXd::Ones(2));
  CHECK(id.solve_information(Eigen::Vector2d(5, -2)).isApprox(Eigen::Vector2d(5, -2)));

  MatrixXd r(2, 2);
  r << 2, 0, 0, 1;
  const Accumulator diag = from_factor(r, Eigen::Vector2d::Zero());
  CHECK(diag.solve_information(Eigen::Vector2d(4, 1)).isApprox(Eigen::Vector2d(1, 1)));

  const MatrixXd a = random_matrix(40, 5, 10);
  Accumulator acc(5);
  acc.absorb_chunk(a, VectorXd::Zero(40), VectorXd::Ones(40));
  const VectorXd s = random_matrix(5, 1, 11).col(0);
  const VectorXd oracle = (a.transpose() * a).inverse() * s;
  CHECK((acc.solve_information(s) - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("covariance diagonal") {
  Accumulator id(3);
  id.absorb_chunk(MatrixXd::Identity(3, 3), VectorXd::Zero(3), VectorXd::Ones(3));
  CHECK(id.covariance_diagonal(1.0).isApprox(VectorXd::Ones(3)));

  MatrixXd r(2, 2);
  r << 2, 0, 0, 1;
  CHECK(from_factor(r, Eigen::Vector2d::Zero()).covariance_diagonal(4.0).isApprox(
      Eigen::Vector2d(1, 4)));

  const MatrixXd a = random_matrix(20, 3, 12);
  Accumulator acc(3);
  acc.absorb_chunk(a, VectorXd::Zero(20), VectorXd::Ones(20));
  const VectorXd oracle = 2.5 * (a.transpose() * a).inverse().diagonal();
  CHECK(acc.covariance_diagonal(2.5).isApprox(oracle, 1e-9));
}

TEST_CASE("rank checks") {
  Accumulator id(2);
  id.absorb_chunk(MatrixXd::Identity(2, 2), VectorXd::Zero(2), VectorXd::Ones(2));
  CHECK(id.rank_ok());

  Accumulator half(2);
  half.absorb_row(Eigen::RowVector2d(1, 0), 1.0, 1.0);
  CHECK_FALSE(half.rank_ok());
  CHECK(half.deficient_column() == 1);

  MatrixXd a = random_matrix(30, 3, 13);
  a.col(2) = a.col(1);
  Accumulator dup(3);
  dup.absorb_chunk(a, VectorXd::Ones(30), VectorXd::Ones(30));
  CHECK_FALSE(dup.rank_ok());
  try {
    (void)dup.solve_coefficients();
    FAIL("expected RankError");
  } catch (const RankError& e) {
    CHECK(e.column() == 2);
  }
  CHECK_THROWS_AS((void)dup.leverage(a.row(0), 1.0), RankError);
  CHECK_THROWS_AS((void)dup.covariance_diagonal(1.0), RankError);
}

TEST_CASE("shape errors") {
  Accumulator acc(3);
  CHECK_THROWS_AS(acc.absorb_row(Eigen::RowVector2d(1, 2), 0.0, 1.0), ShapeError);
  CHECK_THROWS_AS(acc.absorb_row(Eigen::RowVector3d(1, 2, 3), 0.0, -1.0), ShapeError);
  CHECK_THROWS_AS(acc.absorb_chunk(MatrixXd::Ones(4, 3), VectorXd::Ones(3), VectorXd::Ones(4)),
                  ShapeError);
}

TEST_CASE("row order and partition do not matter") {
  const MatrixXd a = random_matrix(120, 4, 14);
  const VectorXd y = random_matrix(120, 1, 15).col(0);
  const VectorXd w = positive_weights(120, 16);
  Accumulator whole(4);
  whole.absorb_chunk(a, y, w);
  const VectorXd beta = whole.solve_coefficients();

  std::vector<Eigen::Index> order(120);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    Accumulator shuffled(4);
    for (const Eigen::Index i : order) shuffled.absorb_row(a.row(i), y(i), w(i));
    CHECK((shuffled.solve_coefficients() - beta).norm() < 1e-8 * (1 + beta.norm()));
    const MatrixXd rr = shuffled.rbar().transpose() * shuffled.rbar();
    const MatrixXd ref = whole.rbar().transpose() * whole.rbar();
    CHECK((rr - ref).cwiseAbs().maxCoeff() < 1e-8 * ref.cwiseAbs().maxCoeff());
  }

  std::uniform_int_distribution<Eigen::Index> cut(1, 40);
  for (int trial = 0; trial < 5; ++trial) {
    Accumulator parts(4);
    for (Eigen::Index start = 0; start < 120;) {
      const Eigen::Index len = std::min<Eigen::Index>(cut(rng), 120 - start);
      parts.absorb_chunk(a.middleRows(start, len), y.segment(start, len), w.segment(start, len));
      start += len;
    }
    CHECK((parts.solve_coefficients() - beta).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("state size does not grow with rows") {
  Accumulator acc(3);
  const MatrixXd a = random_matrix(10000, 3, 18);
  acc.absorb_chunk(a, VectorXd::Ones(10000), VectorXd::Ones(10000));
  CHECK(acc.rbar().rows() == 3);
  CHECK(acc.bbar().size() == 3);
  CHECK(acc.rows_seen() == 10000);
  acc.reset();
  CHECK(acc.rows_seen() == 0);
  CHECK(acc.rbar().isZero());
}

TEST_CASE("other scalar types") {
  TriangularAccumulator<long double> ld(2);
  ld.absorb_row(Eigen::Matrix<long double, 1, 2>(1, 0), 3.0L, 1.0L);
  ld.absorb_row(Eigen::Matrix<long double, 1, 2>(1, 1), 5.0L, 1.0L);
  const auto beta = ld.solve_coefficients();
  CHECK(static_cast<double>(beta(0)) == doctest::Approx(3.0));
  CHECK(static_cast<double>(beta(1)) == doctest::Approx(2.0));

  TriangularAccumulator<float> f(1);
  f.absorb_row(Eigen::Matrix<float, 1, 1>(2.0f), 4.0f, 1.0f);
  CHECK(f.solve_coefficients()(0) == doctest::Approx(2.0f));
}
