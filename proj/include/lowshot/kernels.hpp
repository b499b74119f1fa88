#pragma once

// Data-parallel inner loops shared by every module.
//
// Each kernel exists as a scalar reference and, on x86-64, an AVX2+FMA variant.
// The variant is chosen once at startup from CPUID; `LOWSHOT_SIMD=scalar` in the
// environment, or set_backend(), forces the reference path. The two paths agree
// to rounding (reduction order differs), not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace lowshot::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
    Backend backend;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i (a[i] - b[i])^2
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    // x[i] = max(x[i], 0)
    void (*relu)(double* x, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table() noexcept;

const KernelTable& active() noexcept;
Backend active_backend() noexcept;

// Returns false (and changes nothing) if the requested backend is unavailable.
// Not thread-safe against concurrent kernel calls; call before spawning workers.
bool set_backend(Backend backend) noexcept;

std::string_view backend_name(Backend backend) noexcept;

// Span-level conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
void relu(std::span<double> x);
void scale(double alpha, std::span<double> x);

// y = A x for row-major A (rows x cols).
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y);
// x += A^T y for row-major A (rows x cols).
void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols,
                std::span<const double> y, std::span<double> x);
// A += alpha u v^T for row-major A (rows x cols).
void rank1_update(std::span<double> a, std::size_t rows, std::size_t cols, double alpha,
                  std::span<const double> u, std::span<const double> v);

}  // namespace lowshot::kernels
