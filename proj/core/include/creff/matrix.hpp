#ifndef CREFF_MATRIX_HPP
#define CREFF_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace creff {

// Dense row-major matrix of doubles. The one numeric container everything
// else is built on; shape checks throw std::invalid_argument.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

bool operator==(const Matrix& a, const Matrix& b);

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// A + s * B, elementwise
Matrix add_scaled(const Matrix& a, const Matrix& b, double s);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

double dot(const double* a, const double* b, std::size_t n);
double l2_norm(const double* a, std::size_t n);

// Throws std::invalid_argument if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const char* what);

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what);

}  // namespace creff

#endif  // CREFF_MATRIX_HPP
