#include "kernels_impl.hpp"

#include "lowshot/error.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace lowshot::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(LOWSHOT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() noexcept {
    if (const char* env = std::getenv("LOWSHOT_SIMD"); env != nullptr && std::string(env) == "scalar") {
        return &detail::kScalarTable;
    }
    if (const KernelTable* t = avx2_table()) return t;
    return &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() noexcept {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return detail::kScalarTable; }

const KernelTable* avx2_table() noexcept {
#if defined(LOWSHOT_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &detail::kAvx2Table : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

Backend active_backend() noexcept { return active().backend; }

bool set_backend(Backend backend) noexcept {
    const KernelTable* t = backend == Backend::scalar ? &detail::kScalarTable : avx2_table();
    if (t == nullptr) return false;
    current().store(t, std::memory_order_relaxed);
    return true;
}

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
    LOWSHOT_REQUIRE(a.size() == b.size(), "dot: length mismatch");
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    LOWSHOT_REQUIRE(x.size() == y.size(), "axpy: length mismatch");
    active().axpy(alpha, x.data(), y.data(), x.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    LOWSHOT_REQUIRE(a.size() == b.size(), "squared_distance: length mismatch");
    return active().squared_distance(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) { return active().dot(a.data(), a.data(), a.size()); }

void relu(std::span<double> x) { active().relu(x.data(), x.size()); }

void scale(double alpha, std::span<double> x) { active().scale(alpha, x.data(), x.size()); }

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
    LOWSHOT_REQUIRE(a.size() == rows * cols && x.size() == cols && y.size() == rows, "gemv: shape mismatch");
    const KernelTable& t = active();
    for (std::size_t r = 0; r < rows; ++r) y[r] = t.dot(a.data() + r * cols, x.data(), cols);
}

void gemv_t_acc(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> y,
                std::span<double> x) {
    LOWSHOT_REQUIRE(a.size() == rows * cols && y.size() == rows && x.size() == cols, "gemv_t_acc: shape mismatch");
    const KernelTable& t = active();
    for (std::size_t r = 0; r < rows; ++r) {
        if (y[r] != 0.0) t.axpy(y[r], a.data() + r * cols, x.data(), cols);
    }
}

void rank1_update(std::span<double> a, std::size_t rows, std::size_t cols, double alpha, std::span<const double> u,
                  std::span<const double> v) {
    LOWSHOT_REQUIRE(a.size() == rows * cols && u.size() == rows && v.size() == cols, "rank1_update: shape mismatch");
    const KernelTable& t = active();
    for (std::size_t r = 0; r < rows; ++r) {
        const double coef = alpha * u[r];
        if (coef != 0.0) t.axpy(coef, v.data(), a.data() + r * cols, cols);
    }
}

}  // namespace lowshot::kernels
