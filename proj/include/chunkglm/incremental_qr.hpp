#ifndef CHUNKGLM_INCREMENTAL_QR_HPP
#define CHUNKGLM_INCREMENTAL_QR_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "chunkglm/errors.hpp"

namespace chunkglm {

/// Row-updated QR factor of a weighted least-squares problem.
///
/// Keeps only the upper-triangular R̄ and the rotated right-hand side b̄ of
/// the rows absorbed so far, so that R̄ᵀR̄ = AᵀWA and R̄ᵀb̄ = AᵀWb. Each
/// incoming row is scaled by the square root of its weight and eliminated
/// into R̄ with Givens rotations; Q is never formed. The diagonal of R̄ is
/// kept nonnegative, which makes the factor unique.
///
/// State size depends on the column count only.
template <typename Scalar = double>
class TriangularAccumulator {
 public:
  using Index = Eigen::Index;
  // Row-major so that each rotation sweeps contiguous memory.
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr Scalar kRankTolerance = Scalar(1e-10);

  explicit TriangularAccumulator(Index p)
      : rbar_(Matrix::Zero(p, p)), bbar_(Vector::Zero(p)), work_(p) {}

  Index cols() const noexcept { return rbar_.cols(); }
  const Matrix& rbar() const noexcept { return rbar_; }
  const Vector& bbar() const noexcept { return bbar_; }
  std::int64_t rows_seen() const noexcept { return rows_seen_; }
  // Squared norm of the rhs components rotated out of the triangle, i.e. the
  // weighted residual sum of squares of the least-squares fit so far.
  Scalar ssq_resid() const noexcept { return ssq_resid_; }

  void reset() {
    rbar_.setZero();
    bbar_.setZero();
    rows_seen_ = 0;
    ssq_resid_ = Scalar(0);
  }

  /// Absorbs sqrt(weight) * (x, rhs). Zero-weight rows are counted but
  /// otherwise skipped.
  template <typename RowType>
  void absorb_row(const Eigen::MatrixBase<RowType>& x, Scalar rhs, Scalar weight) {
    if (x.size() != cols()) {
      throw ShapeError("row has " + std::to_string(x.size()) + " entries, expected " +
                       std::to_string(cols()));
    }
    if (weight < Scalar(0)) throw ShapeError("negative weight");
    ++rows_seen_;
    if (weight == Scalar(0)) return;
    const Scalar root = std::sqrt(weight);
    for (Index k = 0; k < cols(); ++k) work_[k] = root * x(k);
    eliminate(root * rhs);
  }

  template <typename Rows, typename Rhs, typename Weights>
  void absorb_chunk(const Eigen::MatrixBase<Rows>& rows, const Eigen::MatrixBase<Rhs>& rhs,
                    const Eigen::MatrixBase<Weights>& weights) {
    if (rows.cols() != cols()) {
      throw ShapeError("chunk has " + std::to_string(rows.cols()) + " columns, expected " +
                       std::to_string(cols()));
    }
    if (rhs.size() != rows.rows() || weights.size() != rows.rows()) {
      throw ShapeError("chunk rows, rhs and weights differ in length");
    }
    for (Index i = 0; i < rows.rows(); ++i) absorb_row(rows.row(i), rhs(i), weights(i));
  }

  /// Index of the first numerically dependent column, or -1 when R̄ has full
  /// rank relative to its largest diagonal entry.
  Index deficient_column() const {
    const Index p = cols();
    if (p == 0) return -1;
    const Scalar largest = rbar_.diagonal().cwiseAbs().maxCoeff();
    for (Index j = 0; j < p; ++j) {
      if (!(std::abs(rbar_(j, j)) > kRankTolerance * largest)) return j;
    }
    return -1;
  }

  bool rank_ok() const { return deficient_column() < 0; }

  Vector solve_coefficients() const {
    require_rank();
    return rbar_.template triangularView<Eigen::Upper>().solve(bbar_);
  }

  /// w xᵀ(R̄ᵀR̄)⁻¹x, the hat-matrix diagonal for a row absorbed with weight w.
  template <typename RowType>
  Scalar leverage(const Eigen::MatrixBase<RowType>& x, Scalar w) const {
    require_rank();
    const Vector u =
        rbar_.transpose().template triangularView<Eigen::Lower>().solve(x.transpose().eval());
    return w * u.squaredNorm();
  }

  /// Leverages of every row of a block, one forward solve per block.
  template <typename Rows, typename Weights>
  Vector leverages(const Eigen::MatrixBase<Rows>& rows,
                   const Eigen::MatrixBase<Weights>& weights) const {
    require_rank();
    if (rows.cols() != cols() || weights.size() != rows.rows()) {
      throw ShapeError("leverage block shape mismatch");
    }
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> u =
        rbar_.transpose().template triangularView<Eigen::Lower>().solve(rows.transpose());
    return u.colwise().squaredNorm().transpose().cwiseProduct(weights);
  }

  /// (R̄ᵀR̄)⁻¹ s by a forward and a backward triangular solve.
  template <typename VecType>
  Vector solve_information(const Eigen::MatrixBase<VecType>& s) const {
    require_rank();
    if (s.size() != cols()) throw ShapeError("information rhs length mismatch");
    const Vector u = rbar_.transpose().template triangularView<Eigen::Lower>().solve(s);
    return rbar_.template triangularView<Eigen::Upper>().solve(u);
  }

  /// phi * diag((R̄ᵀR̄)⁻¹), computed from the row norms of R̄⁻¹.
  Vector covariance_diagonal(Scalar phi) const {
    require_rank();
    const Index p = cols();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rinv =
        rbar_.template triangularView<Eigen::Upper>().solve(
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(p, p));
    return phi * rinv.rowwise().squaredNorm();
  }

 private:
  void require_rank() const {
    const Index j = deficient_column();
    if (j >= 0) throw RankError(static_cast<std::size_t>(j));
  }

  // Rotates the row held in work_ (with right-hand side `y`) into R̄.
  void eliminate(Scalar y) {
    const Index p = cols();
    Scalar* row = work_.data();
    for (Index j = 0; j < p; ++j) {
      const Scalar xj = row[j];
      if (xj == Scalar(0)) continue;
      Scalar* rj = rbar_.row(j).data();
      const Scalar r = std::hypot(rj[j], xj);
      const Scalar c = rj[j] / r;
      const Scalar s = xj / r;
      rj[j] = r;
      row[j] = Scalar(0);
      for (Index k = j + 1; k < p; ++k) {
        const Scalar a = rj[k];
        const Scalar b = row[k];
        rj[k] = c * a + s * b;
        row[k] = c * b - s * a;
      }
      const Scalar bj = bbar_[j];
      bbar_[j] = c * bj + s * y;
      y = c * y - s * bj;
    }
    ssq_resid_ += y * y;
  }

  Matrix rbar_;
  Vector bbar_;
  Vector work_;
  std::int64_t rows_seen_ = 0;
  Scalar ssq_resid_ = Scalar(0);
};

using Accumulator = TriangularAccumulator<double>;

}  // namespace chunkglm

#endif  // CHUNKGLM_INCREMENTAL_QR_HPP
