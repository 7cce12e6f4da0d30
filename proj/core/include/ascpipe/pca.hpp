#pragma once

#include <Eigen/Dense>

namespace ascpipe {

// Principal components of a unit x variable matrix.
struct PcaModel {
  Eigen::MatrixXd loadings;            // component x variable, rows orthonormal
  Eigen::MatrixXd scores;              // unit x component
  Eigen::VectorXd explained_variance;  // nonincreasing
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  // all ones when unscaled

  // Projects a raw observation onto the fitted components.
  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
};

// Eigendecomposition of the covariance (scale=false) or correlation (scale=true)
// matrix. Components are ordered by decreasing variance; the sign of each loading
// vector is fixed so its largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& data, bool scale);

}  // namespace ascpipe
