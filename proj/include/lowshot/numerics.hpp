#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace lowshot {

class SeededRng;

class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    DenseVector(std::initializer_list<double> values) : data_(values) {}
    explicit DenseVector(std::vector<double> values) : data_(std::move(values)) {}
    explicit DenseVector(std::span<const double> values) : data_(values.begin(), values.end()) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }

    const double* data() const noexcept { return data_.data(); }
    double* data() noexcept { return data_.data(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }

    std::span<const double> view() const noexcept { return data_; }
    std::span<double> view() noexcept { return data_; }
    operator std::span<const double>() const noexcept { return data_; }

    const std::vector<double>& values() const noexcept { return data_; }

    bool operator==(const DenseVector&) const = default;

private:
    std::vector<double> data_;
};

// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix diagonal(std::span<const double> diag);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> flat() const noexcept { return data_; }
    std::span<double> flat() noexcept { return data_; }

    void fill(double value);
    DenseMatrix transposed() const;
    double frobenius_norm() const;
    double trace() const;
    bool all_finite() const noexcept;

    // Appends one row; the first append on an empty 0x0 matrix fixes the column count.
    void append_row(std::span<const double> values);

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseVector matvec(const DenseMatrix& a, std::span<const double> x);

double norm2(std::span<const double> v);
bool all_finite(std::span<const double> v) noexcept;

// Numerically stable softmax via max subtraction. Throws on non-finite input.
DenseVector softmax_stable(std::span<const double> logits);

// <u,v>/(|u||v|); returns 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct EigenEstimate {
    double value = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
// Rayleigh-quotient estimate. The start vector is drawn from `seed`.
EigenEstimate power_iteration_max_eig(const DenseMatrix& a, std::size_t iters, double tol, std::uint64_t seed = 1);

// All eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
std::vector<double> symmetric_eigenvalues(const DenseMatrix& a, double symmetry_tol = 1e-9);

// Indices of the k largest scores; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

// argmax with lowest-index tie-break.
std::size_t argmax(std::span<const double> scores);

}  // namespace lowshot
