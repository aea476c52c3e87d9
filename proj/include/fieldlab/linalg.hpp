#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace fieldlab {

struct RankInfo {
  int rank = 0;
  double sigma_max = 0.0;
  double threshold = 0.0;
  Eigen::VectorXd singular_values;
};

// Numerical rank with the standard relative threshold
// max(rows, cols) * eps * sigma_max, floored by floor_rel * sigma_max.
inline RankInfo numerical_rank(const Eigen::MatrixXd& M, double floor_rel = 0.0) {
  RankInfo info;
  if (M.rows() == 0 || M.cols() == 0) return info;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  info.singular_values = svd.singularValues();
  info.sigma_max = info.singular_values.size() ? info.singular_values[0] : 0.0;
  double eps = std::numeric_limits<double>::epsilon();
  info.threshold =
      std::max((double)std::max(M.rows(), M.cols()) * eps * info.sigma_max,
               floor_rel * info.sigma_max);
  for (int i = 0; i < info.singular_values.size(); ++i)
    if (info.singular_values[i] > info.threshold) ++info.rank;
  return info;
}

struct LeastSquares {
  Eigen::VectorXd x;          // minimum-norm solution
  double residual = 0.0;      // |Mx - b|
  double rel_residual = 0.0;  // |Mx - b| / max(1, |b|)
  int rank = 0;
  Eigen::MatrixXd left_null;  // columns span the left null space of M
};

inline LeastSquares solve_min_norm(const Eigen::MatrixXd& M,
                                   const Eigen::VectorXd& b,
                                   double floor_rel = 0.0) {
  LeastSquares out;
  if (M.rows() == 0) {
    out.x = Eigen::VectorXd::Zero(M.cols());
    return out;
  }
  // JacobiSVD throughout: BDCSVD in Eigen 3.4.0 returns a wrong
  // factorization for some wide (cols > rows) matrices.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M,
                                        Eigen::ComputeThinU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  double eps = std::numeric_limits<double>::epsilon();
  double thresh = std::max((double)std::max(M.rows(), M.cols()) * eps * smax,
                           floor_rel * smax);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  out.rank = rank;
  Eigen::VectorXd c = svd.matrixU().transpose() * b;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(M.cols());
  for (int i = 0; i < rank; ++i) y[i] = c[i] / sv[i];
  out.x = svd.matrixV() * y;
  out.residual = (M * out.x - b).norm();
  out.rel_residual = out.residual / std::max(1.0, b.norm());
  // left null space needs the full U
  Eigen::JacobiSVD<Eigen::MatrixXd> full(M, Eigen::ComputeFullU);
  const auto& sv2 = full.singularValues();
  int r2 = 0;
  for (int i = 0; i < sv2.size(); ++i)
    if (sv2[i] > thresh) ++r2;
  out.left_null = full.matrixU().rightCols(M.rows() - r2);
  return out;
}

// Left null space basis (columns) of M under the relative threshold.
inline Eigen::MatrixXd left_null_space(const Eigen::MatrixXd& M,
                                       double floor_rel = 0.0) {
  if (M.rows() == 0) return Eigen::MatrixXd(0, 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  double eps = std::numeric_limits<double>::epsilon();
  double thresh = std::max((double)std::max(M.rows(), M.cols()) * eps * smax,
                           floor_rel * smax);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  return svd.matrixU().rightCols(M.rows() - rank);
}

}  // namespace fieldlab
