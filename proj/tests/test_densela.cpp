#include "test_util.hpp"

using namespace chebpinn;
using namespace chebpinn::testing;

namespace {

double reconstruction_error(const Matrix& m, const SpdFactorization& f) {
  const Matrix l = f.factor();
  Matrix llt = matmul(l, transpose(l));
  for (std::size_t i = 0; i < m.rows(); ++i) llt(i, i) -= f.ridge;
  double num = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) num += (llt(i, j) - m(i, j)) * (llt(i, j) - m(i, j));
  return std::sqrt(num) / frobenius_norm(m);
}

double relative_residual(const Matrix& m, double ridge, std::span<const double> x, std::span<const double> rhs) {
  Vector r = matvec(m, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += ridge * x[i] - rhs[i];
  return norm2(r) / norm2(rhs);
}

Matrix spd_from(const Matrix& a, double shift) {
  Matrix m = gram(a);
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += shift;
  return m;
}

}  // namespace

TEST(Matrix, RejectsNonFiniteEntries) {
  EXPECT_ERROR(Matrix(1, 2, {1.0, std::nan("")}), ErrorCode::InvalidArgument);
  EXPECT_ERROR(Matrix(1, 2, {1.0, INFINITY}), ErrorCode::InvalidArgument);
}

TEST(Matrix, RejectsWrongEntryCount) { EXPECT_ERROR(Matrix(2, 2, {1.0, 2.0, 3.0}), ErrorCode::DimensionMismatch); }

TEST(SpdFactorize, IdentityFactorIsIdentity) {
  const std::vector<double> ladder{0.0};
  const auto f = spd_factorize(Matrix::identity(3), ladder);
  EXPECT_EQ(f.factor(), Matrix::identity(3));
  EXPECT_EQ(f.ridge, 0.0);
}

TEST(SpdFactorize, HandCholesky2x2) {
  const auto f = spd_factorize(Matrix{{4, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(f.l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f.l(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(f.l(1, 0), 1.0);
  EXPECT_NEAR(f.l(1, 1), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(f.ridge, 0.0);
}

TEST(SpdFactorize, ReconstructsNoisyGramMatrix) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(30, 20, rng);
  Matrix m = gram(a);
  std::uniform_real_distribution<double> noise(-1e-14, 1e-14);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double e = noise(rng);
      m(i, j) += e;
      if (i != j) m(j, i) += e;
    }
  }
  EXPECT_LE(reconstruction_error(m, spd_factorize(m)), 1e-10);
}

TEST(SpdFactorize, RejectsAsymmetricMatrix) {
  EXPECT_ERROR(spd_factorize(Matrix{{2, 1}, {0.5, 2}}), ErrorCode::NotSymmetric);
}

TEST(SpdFactorize, RejectsNonSquare) { EXPECT_ERROR(spd_factorize(Matrix(2, 3)), ErrorCode::DimensionMismatch); }

TEST(SpdFactorize, IndefiniteMatrixExhaustsLadder) {
  EXPECT_ERROR(spd_factorize(Matrix{{1, 0}, {0, -1}}), ErrorCode::NonFactorizable);
}

TEST(SpdFactorize, SingularMatrixUsesSmallestWorkingRidge) {
  const Matrix m{{1, 1}, {1, 1}};
  const auto f = spd_factorize(m);
  EXPECT_GT(f.ridge, 0.0);
  EXPECT_LE(f.ridge, 1e-8);
  EXPECT_LE(reconstruction_error(m, f), 1e-10);
}

TEST(SpdFactorize, RejectsNegativeLadderEntries) {
  const std::vector<double> ladder{-1e-8};
  EXPECT_ERROR(spd_factorize(Matrix::identity(2), ladder), ErrorCode::InvalidArgument);
}

TEST(SpdFactorize, DeterministicBits) {
  std::mt19937_64 rng(5);
  const Matrix m = spd_from(random_matrix(40, 25, rng), 1.0);
  const auto f1 = spd_factorize(m);
  const auto f2 = spd_factorize(m);
  EXPECT_EQ(f1.lower, f2.lower);
  EXPECT_EQ(f1.ridge, f2.ridge);
}

TEST(SpdFactorize, CountsSuccessfulFactorizations) {
  const std::size_t before = spd_factorization_count().load();
  (void)spd_factorize(Matrix::identity(4));
  EXPECT_EQ(spd_factorization_count().load(), before + 1);
  (void)error_of([] { (void)spd_factorize(Matrix{{-1}}); });
  EXPECT_EQ(spd_factorization_count().load(), before + 1);
}

TEST(SpdSolve, IdentitySystem) {
  const auto f = spd_factorize(Matrix::identity(3));
  const std::vector<double> rhs{1, 2, 3};
  EXPECT_EQ(spd_solve(f, rhs), rhs);
}

TEST(SpdSolve, HandSolve2x2) {
  const auto f = spd_factorize(Matrix{{4, 2}, {2, 3}});
  const std::vector<double> rhs{8, 7};
  const Vector x = spd_solve(f, rhs);
  EXPECT_NEAR(x[0], 1.25, 1e-15);
  EXPECT_NEAR(x[1], 1.5, 1e-15);
}

TEST(SpdSolve, RandomDim50Residual) {
  std::mt19937_64 rng(2);
  const Matrix m = spd_from(random_matrix(60, 50, rng), 0.1);
  const auto f = spd_factorize(m);
  const Vector rhs = random_vector(50, rng);
  EXPECT_LE(relative_residual(m, f.ridge, spd_solve(f, rhs), rhs), 1e-10);
}

TEST(SpdSolve, DimensionMismatch) {
  const auto f = spd_factorize(Matrix::identity(3));
  const std::vector<double> rhs{1, 2};
  EXPECT_ERROR(spd_solve(f, rhs), ErrorCode::DimensionMismatch);
}

TEST(SpdSolve, GramPlusIdentityPropertyOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 40);
    const std::size_t n = dim(rng);
    const Matrix m = spd_from(random_matrix(n + 5, n, rng, -3.0, 3.0), 1.0);
    const auto f = spd_factorize(m);
    const Vector rhs = random_vector(n, rng);
    EXPECT_LE(relative_residual(m, f.ridge, spd_solve(f, rhs), rhs), 1e-10) << "seed " << seed;
  }
}

TEST(LstsqOracle, IdentityReturnsRhs) {
  const std::vector<double> b{3, -1, 2};
  const Vector x = lstsq_oracle(Matrix::identity(3), b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], b[i], 1e-15);
}

TEST(LstsqOracle, OverdeterminedMean) {
  const std::vector<double> b{0, 2};
  const Vector x = lstsq_oracle(Matrix{{1}, {1}}, b);
  ASSERT_EQ(x.size(), 1u);
  EXPECT_NEAR(x[0], 1.0, 1e-15);
}

TEST(LstsqOracle, RankDeficient) {
  const std::vector<double> b{1, 2, 3};
  EXPECT_ERROR(lstsq_oracle(Matrix{{1, 2}, {2, 4}, {3, 6}}, b), ErrorCode::RankDeficient);
}

TEST(LstsqOracle, AgreesWithNormalEquations) {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(100, 10, rng);
  const Vector b = random_vector(100, rng);
  const Vector x_qr = lstsq_oracle(a, b);
  const Vector x_ne = spd_solve(spd_factorize(gram(a)), matvec_transposed(a, b));
  EXPECT_LE(max_rel_vec(x_ne, x_qr), 1e-8);
}

TEST(LstsqOracle, AgreesWithNormalEquationsUpToCondition1e6) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    Matrix a = random_matrix(80, 8, rng);
    // graded column scales push cond(A) to about 1e6
    for (std::size_t j = 0; j < 8; ++j) {
      const double s = std::pow(10.0, -6.0 * static_cast<double>(j) / 7.0);
      for (std::size_t i = 0; i < 80; ++i) a(i, j) *= s;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(a.view()));
    const double cond = svd.singularValues()(0) / svd.singularValues()(7);
    ASSERT_LE(cond, 1e6 * 1.5);
    // consistent right-hand side so both methods target the same minimizer
    const Vector x_true = random_vector(8, rng);
    Vector b = matvec(a, x_true);
    const Vector noise = random_vector(80, rng, -1e-3, 1e-3);
    for (std::size_t i = 0; i < 80; ++i) b[i] += noise[i] * 1e-6;
    const Vector x_qr = lstsq_oracle(a, b);
    const Vector x_ne = spd_solve(spd_factorize(gram(a)), matvec_transposed(a, b));
    EXPECT_LE(max_rel_vec(x_ne, x_qr), 1e-8) << "seed " << seed << " cond " << cond;
  }
}

TEST(DenseOps, GramMatchesExplicitProduct) {
  std::mt19937_64 rng(4);
  const Matrix a = random_matrix(7, 4, rng);
  const Matrix g = gram(a, 0.5);
  const Matrix ref = matmul(transpose(a), a);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g(i, j), 0.5 * ref(i, j), 1e-14);
}
