#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

namespace covphase {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kDefaultRankRtol = 1e-10;

// Orthonormal basis of {x : M x = 0}; singular values <= abs_tol count as zero.
// Rows and columns that are exactly zero are split off before the SVD, which
// keeps the dense factorization small for block-sparse lattice operators.
Matrix null_space(const Matrix& M, double abs_tol);
// Same, with threshold max(abs_tol, rel_tol * sigma_max).
Matrix null_space(const Matrix& M, double abs_tol, double rel_tol);

// Orthonormal basis of the column span, rank decided by abs_tol on singular values.
Matrix range_space(const Matrix& M, double abs_tol);

Vector singular_values(const Matrix& M);
double max_singular_value(const Matrix& M);

// Thin QR re-orthonormalization of a full-column-rank basis.
Matrix orthonormalize(const Matrix& B);

double max_abs(const Matrix& M);
double antisymmetry_defect(const Matrix& M);
double symmetry_defect(const Matrix& M);

nlohmann::json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace covphase
