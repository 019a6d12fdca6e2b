#include "covphase/linalg.hpp"

#include <algorithm>
#include <vector>

#include "covphase/error.hpp"

namespace covphase {

namespace {

// Count singular values above the threshold; sv is sorted descending.
Eigen::Index numerical_rank(const Vector& sv, double abs_tol) {
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > abs_tol) ++r;
  return r;
}

}  // namespace

Matrix null_space(const Matrix& M, double abs_tol) { return null_space(M, abs_tol, 0.0); }

Matrix null_space(const Matrix& M, double abs_tol, double rel_tol) {
  const Eigen::Index n = M.cols();
  std::vector<Eigen::Index> rows, cols, zero_cols;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    if ((M.row(i).array() != 0.0).any()) rows.push_back(i);
  for (Eigen::Index j = 0; j < n; ++j) {
    if ((M.col(j).array() != 0.0).any())
      cols.push_back(j);
    else
      zero_cols.push_back(j);
  }

  Matrix sub_null;
  if (cols.empty()) {
    sub_null.resize(0, 0);
  } else if (rows.empty()) {
    sub_null = Matrix::Identity(cols.size(), cols.size());
  } else {
    Matrix sub = M(rows, cols);
    Eigen::BDCSVD<Matrix> svd(sub, Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    double tol = abs_tol;
    if (sv.size() > 0) tol = std::max(tol, rel_tol * sv(0));
    Eigen::Index r = numerical_rank(sv, tol);
    sub_null = svd.matrixV().rightCols(sub.cols() - r);
  }

  Matrix N = Matrix::Zero(n, static_cast<Eigen::Index>(zero_cols.size()) + sub_null.cols());
  for (std::size_t k = 0; k < zero_cols.size(); ++k) N(zero_cols[k], k) = 1.0;
  const Eigen::Index off = static_cast<Eigen::Index>(zero_cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i)
    N.row(cols[i]).segment(off, sub_null.cols()) = sub_null.row(i);
  return N;
}

Matrix range_space(const Matrix& M, double abs_tol) {
  if (M.cols() == 0 || M.rows() == 0) return Matrix(M.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU);
  Eigen::Index r = numerical_rank(svd.singularValues(), abs_tol);
  return svd.matrixU().leftCols(r);
}

Vector singular_values(const Matrix& M) {
  if (M.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues();
}

double max_singular_value(const Matrix& M) {
  Vector sv = singular_values(M);
  return sv.size() ? sv(0) : 0.0;
}

Matrix orthonormalize(const Matrix& B) {
  if (B.cols() == 0) return B;
  Eigen::HouseholderQR<Matrix> qr(B);
  Matrix Q = qr.householderQ() * Matrix::Identity(B.rows(), B.cols());
  // keep orientation close to the input columns
  Matrix R = qr.matrixQR().topRows(B.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < B.cols(); ++k)
    if (R(k, k) < 0) Q.col(k) = -Q.col(k);
  return Q;
}

double max_abs(const Matrix& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

double antisymmetry_defect(const Matrix& M) {
  if (M.rows() != M.cols()) throw Error(ErrorKind::DimensionMismatch, "matrix is not square");
  return max_abs(M + M.transpose());
}

double symmetry_defect(const Matrix& M) {
  if (M.rows() != M.cols()) throw Error(ErrorKind::DimensionMismatch, "matrix is not square");
  return max_abs(M - M.transpose());
}

nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) data.push_back(M(i, j));
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw Error(ErrorKind::InvalidArgument, "matrix json needs rows, cols, data");
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (r < 0 || c < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != r * c)
    throw Error(ErrorKind::ShapeMismatch, "matrix json data length does not match rows*cols");
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) M(i, k) = data[i * c + k].get<double>();
  return M;
}

nlohmann::json vector_to_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace covphase
