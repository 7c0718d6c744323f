#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stacknov/object.hpp"

namespace stacknov {

struct CcaResult {
  double coefficient = 0.0;   // first canonical correlation, in [0, 1]
  std::string label_x, label_y;
  Eigen::Index samples = 0;
  int columns_used = 0;
};

// First canonical correlation between two sample matrices (rows = paired
// samples, columns = features). Rows are truncated to the shorter matrix,
// zero-variance columns are dropped from both sides symmetrically, and the
// covariance blocks are ridge-regularized before the whitened SVD.
inline CcaResult cca_first_coefficient(const Eigen::MatrixXd& X_in,
                                       const Eigen::MatrixXd& Y_in,
                                       double ridge_rel = 1e-6) {
  if (X_in.cols() != Y_in.cols())
    throw std::invalid_argument("cca: column count mismatch");
  Eigen::Index rows = std::min(X_in.rows(), Y_in.rows());
  Eigen::MatrixXd X = X_in.topRows(rows);
  Eigen::MatrixXd Y = Y_in.topRows(rows);

  // Drop columns that are constant in either matrix, from both.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    auto var = [&](const Eigen::MatrixXd& M) {
      Eigen::VectorXd col = M.col(c);
      double mean = col.mean();
      return (col.array() - mean).square().sum() / static_cast<double>(rows);
    };
    if (var(X) > 1e-24 && var(Y) > 1e-24) keep.push_back(c);
  }
  if (keep.empty()) throw std::runtime_error("cca: all columns are constant");
  Eigen::MatrixXd Xk(rows, static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd Yk(rows, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    Xk.col(static_cast<Eigen::Index>(i)) = X.col(keep[i]);
    Yk.col(static_cast<Eigen::Index>(i)) = Y.col(keep[i]);
  }

  Eigen::Index p = Xk.cols();
  if (rows < p + 1)
    throw std::runtime_error("cca: fewer than c+1 usable rows");

  Xk.rowwise() -= Xk.colwise().mean();
  Yk.rowwise() -= Yk.colwise().mean();
  double denom = static_cast<double>(rows - 1);
  Eigen::MatrixXd Cxx = Xk.transpose() * Xk / denom;
  Eigen::MatrixXd Cyy = Yk.transpose() * Yk / denom;
  Eigen::MatrixXd Cxy = Xk.transpose() * Yk / denom;

  double lx = ridge_rel * Cxx.diagonal().mean();
  double ly = ridge_rel * Cyy.diagonal().mean();
  Cxx.diagonal().array() += lx;
  Cyy.diagonal().array() += ly;

  // rho = largest singular value of Lx^-1 Cxy Ly^-T with Cxx = Lx Lx^T.
  Eigen::LLT<Eigen::MatrixXd> llt_x(Cxx), llt_y(Cyy);
  if (llt_x.info() != Eigen::Success || llt_y.info() != Eigen::Success)
    throw std::runtime_error("cca: covariance not positive definite");
  Eigen::MatrixXd M = llt_x.matrixL().solve(Cxy);
  M = llt_y.matrixL().solve(M.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);

  CcaResult res;
  res.coefficient = std::min(1.0, std::max(0.0, svd.singularValues()(0)));
  res.samples = rows;
  res.columns_used = static_cast<int>(p);
  return res;
}

// Feature matrices keyed by object kind, one map per policy dataset.
using CcaDataset = std::map<ObjectKind, Eigen::MatrixXd>;

// 5x5 table of first canonical correlations between object pairs, averaged
// across the given datasets. Diagonal is 1 by definition; the computation is
// symmetric so only the upper triangle is solved.
inline Eigen::MatrixXd pairwise_table(
    const std::vector<std::pair<std::string, CcaDataset>>& datasets) {
  if (datasets.empty())
    throw std::invalid_argument("pairwise_table: no datasets");
  for (const auto& [policy, data] : datasets)
    for (ObjectKind k : kAllKinds)
      if (!data.count(k))
        throw std::runtime_error("pairwise_table: missing dataset for " +
                                 kind_name(k) + " under policy " + policy);

  const int n = static_cast<int>(kAllKinds.size());
  Eigen::MatrixXd table = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (const auto& [policy, data] : datasets)
        sum += cca_first_coefficient(data.at(kAllKinds[i]),
                                     data.at(kAllKinds[j]))
                   .coefficient;
      table(i, j) = table(j, i) = sum / static_cast<double>(datasets.size());
    }
  return table;
}

}  // namespace stacknov
