#include "ascpipe/pca.hpp"

#include <cmath>
#include <stdexcept>

namespace ascpipe {

Eigen::VectorXd PcaModel::transform(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z = (x - center).cwiseQuotient(scale);
  return loadings * z;
}

PcaModel pca_fit(const Eigen::MatrixXd& data, bool scale) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (n < 2) throw std::runtime_error("pca_fit needs at least 2 units");
  if (!data.allFinite()) throw std::runtime_error("pca_fit: non-finite input");

  PcaModel m;
  m.center = data.colwise().mean();
  Eigen::MatrixXd centered = data.rowwise() - m.center.transpose();
  m.scale = Eigen::VectorXd::Ones(p);
  if (scale) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd <= 0.0) {
        throw std::runtime_error("pca_fit: column " + std::to_string(j) +
                                 " has zero variance; cannot use the correlation matrix");
      }
      m.scale[j] = sd;
    }
  }
  Eigen::MatrixXd z = centered.array().rowwise() / m.scale.transpose().array();

  Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigensolver failed");

  // Eigen returns ascending eigenvalues; reverse to descending.
  m.explained_variance = solver.eigenvalues().reverse();
  m.loadings = solver.eigenvectors().rowwise().reverse().transpose();
  for (Eigen::Index c = 0; c < p; ++c) {
    if (m.explained_variance[c] < 0.0) m.explained_variance[c] = 0.0;  // numerical noise
    Eigen::Index imax;
    m.loadings.row(c).cwiseAbs().maxCoeff(&imax);
    if (m.loadings(c, imax) < 0.0) m.loadings.row(c) *= -1.0;
  }
  m.scores = z * m.loadings.transpose();
  return m;
}

}  // namespace ascpipe
