#include "lowshot/numerics.hpp"

#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"
#include "lowshot/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lowshot {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    LOWSHOT_REQUIRE(data_.size() == rows_ * cols_, "DenseMatrix: data length != rows * cols");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
    DenseMatrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    DenseMatrix m;
    for (const auto& r : rows) m.append_row(std::vector<double>(r));
    return m;
}

void DenseMatrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double DenseMatrix::frobenius_norm() const { return std::sqrt(kernels::squared_norm(data_)); }

double DenseMatrix::trace() const {
    LOWSHOT_REQUIRE(rows_ == cols_, "trace: matrix is not square");
    double t = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
    return t;
}

bool DenseMatrix::all_finite() const noexcept { return lowshot::all_finite(data_); }

void DenseMatrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    LOWSHOT_REQUIRE(values.size() == cols_, "append_row: column count mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    LOWSHOT_REQUIRE(a.cols() == b.rows(), "matmul: inner dimensions differ");
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) kernels::axpy(aik, b.row(k), out.row(i));
        }
    return out;
}

DenseVector matvec(const DenseMatrix& a, std::span<const double> x) {
    LOWSHOT_REQUIRE(a.cols() == x.size(), "matvec: dimension mismatch");
    DenseVector y(a.rows());
    kernels::gemv(a.flat(), a.rows(), a.cols(), x, y.view());
    return y;
}

double norm2(std::span<const double> v) { return std::sqrt(kernels::squared_norm(v)); }

bool all_finite(std::span<const double> v) noexcept {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

DenseVector softmax_stable(std::span<const double> logits) {
    LOWSHOT_REQUIRE(!logits.empty(), "softmax_stable: empty input");
    LOWSHOT_REQUIRE(all_finite(logits), "softmax_stable: non-finite logit");
    const double mx = *std::max_element(logits.begin(), logits.end());
    DenseVector p(logits.size());
    double denom = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        denom += p[k];
    }
    const double inv = 1.0 / denom;
    for (double& v : p) v *= inv;
    return p;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    LOWSHOT_REQUIRE(u.size() == v.size(), "cosine_similarity: dimension mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    const double c = kernels::dot(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

EigenEstimate power_iteration_max_eig(const DenseMatrix& a, std::size_t iters, double tol, std::uint64_t seed) {
    LOWSHOT_REQUIRE(a.rows() == a.cols(), "power_iteration_max_eig: matrix is not square");
    LOWSHOT_REQUIRE(a.rows() > 0, "power_iteration_max_eig: empty matrix");
    const std::size_t n = a.rows();
    SeededRng rng(seed);
    DenseVector v(n);
    for (double& x : v) x = rng.normal();
    kernels::scale(1.0 / norm2(v), v.view());

    EigenEstimate est;
    DenseVector w(n);
    double previous = 0.0;
    for (std::size_t it = 1; it <= iters; ++it) {
        kernels::gemv(a.flat(), n, n, v, w.view());
        const double rayleigh = kernels::dot(v, w);
        const double wn = norm2(w);
        est.iterations = it;
        if (wn == 0.0) {
            est.value = 0.0;
            est.converged = true;
            return est;
        }
        est.value = rayleigh;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
        if (it > 1 && std::abs(rayleigh - previous) <= tol * std::abs(rayleigh)) {
            est.converged = true;
            return est;
        }
        previous = rayleigh;
    }
    return est;
}

std::vector<double> symmetric_eigenvalues(const DenseMatrix& a, double symmetry_tol) {
    LOWSHOT_REQUIRE(a.rows() == a.cols(), "symmetric_eigenvalues: matrix is not square");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            LOWSHOT_REQUIRE(std::abs(a(i, j) - a(j, i)) <= symmetry_tol, "symmetric_eigenvalues: matrix is not symmetric");

    DenseMatrix m = a;
    const double scale2 = kernels::squared_norm(a.flat());
    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
        if (off <= 1e-32 * scale2 || off < 1e-300) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
    LOWSHOT_REQUIRE(k >= 1 && k <= scores.size(), "top_k_indices: k out of range");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(k);
    return idx;
}

std::size_t argmax(std::span<const double> scores) {
    LOWSHOT_REQUIRE(!scores.empty(), "argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

}  // namespace lowshot
