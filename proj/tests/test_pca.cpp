#include <doctest.h>

#include <random>

#include "ascpipe/pca.hpp"

using namespace ascpipe;

namespace {

Eigen::MatrixXd random_matrix(int n, int p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = normal(rng);
  return x;
}

}  // namespace

TEST_CASE("pca on a hand-computed 2d dataset") {
  // Points on the line y = 2x plus symmetric noise orthogonal to it.
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, -1, -2, 2, 4, -2, -4;
  const PcaModel m = pca_fit(x, false);
  // All variance lies along (1,2)/sqrt(5).
  CHECK(m.explained_variance[0] == doctest::Approx((2.0 + 8.0) * (1.0 + 4.0) / 3.0));
  CHECK(m.explained_variance[1] == doctest::Approx(0.0));
  const double inv = 1.0 / std::sqrt(5.0);
  CHECK(std::abs(m.loadings(0, 0)) == doctest::Approx(inv));
  CHECK(std::abs(m.loadings(0, 1)) == doctest::Approx(2 * inv));
  // Sign convention: largest-magnitude loading entry is positive.
  CHECK(m.loadings(0, 1) > 0.0);
}

TEST_CASE("pca loadings are orthonormal and reconstruct the data") {
  const Eigen::MatrixXd x = random_matrix(40, 12, 123);
  for (bool scale : {false, true}) {
    const PcaModel m = pca_fit(x, scale);
    const Eigen::MatrixXd gram = m.loadings * m.loadings.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-10);
    // scores * loadings restores the centered/scaled data.
    Eigen::MatrixXd standardized = x;
    for (int j = 0; j < 12; ++j) {
      standardized.col(j) = (x.col(j).array() - m.center[j]) / m.scale[j];
    }
    const Eigen::MatrixXd recon = m.scores * m.loadings;
    CHECK((recon - standardized).cwiseAbs().maxCoeff() < 1e-10);
    for (int c = 1; c < 12; ++c) CHECK(m.explained_variance[c - 1] >= m.explained_variance[c]);
    // Score variance equals the reported eigenvalue (n-1 convention).
    const Eigen::VectorXd centered = m.scores.col(0).array() - m.scores.col(0).mean();
    CHECK(centered.squaredNorm() / (x.rows() - 1) ==
          doctest::Approx(m.explained_variance[0]).epsilon(1e-10));
  }
}

TEST_CASE("correlation pca is invariant to per-column rescaling") {
  const Eigen::MatrixXd x = random_matrix(30, 5, 7);
  Eigen::MatrixXd scaled = x;
  scaled.col(2) *= 1000.0;
  scaled.col(4) *= 1e-3;
  const PcaModel a = pca_fit(x, true);
  const PcaModel b = pca_fit(scaled, true);
  CHECK((a.explained_variance - b.explained_variance).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.scores - b.scores).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pca transform matches the fitted scores") {
  const Eigen::MatrixXd x = random_matrix(25, 6, 99);
  const PcaModel m = pca_fit(x, true);
  for (int i : {0, 10, 24}) {
    const Eigen::VectorXd t = m.transform(x.row(i).transpose());
    CHECK((t - m.scores.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pca rejects degenerate inputs") {
  CHECK_THROWS_AS(pca_fit(Eigen::MatrixXd::Random(1, 3), false), std::runtime_error);
  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(5, 3);
  CHECK_THROWS_AS(pca_fit(constant, true), std::runtime_error);  // zero-variance column
}
