#include "lowshot/mlp.hpp"

#include "binary_io.hpp"
#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"
#include "lowshot/rng.hpp"

#include <cmath>

namespace lowshot {

void MlpGradients::zero() {
    for (auto& w : weights) w.fill(0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    LOWSHOT_REQUIRE(sizes_.size() >= 2, "Mlp: need at least input and output sizes");
    for (std::size_t s : sizes_) LOWSHOT_REQUIRE(s >= 1, "Mlp: layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        weights_.emplace_back(sizes_[l + 1], sizes_[l]);
        biases_.emplace_back(sizes_[l + 1]);
    }
}

Mlp Mlp::initialized(std::vector<std::size_t> sizes, std::uint64_t seed) {
    Mlp net(std::move(sizes));
    SeededRng rng(seed);
    for (auto& w : net.weights_) {
        const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
        for (double& v : w.flat()) v = rng.uniform(-bound, bound);
    }
    return net;
}

std::size_t Mlp::parameter_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].dim();
    return n;
}

DenseVector Mlp::forward(std::span<const double> x) const {
    LOWSHOT_REQUIRE(!sizes_.empty(), "Mlp::forward: empty network");
    if (x.size() != input_dim())
        throw InvalidArgument("Mlp::forward: input dimension " + std::to_string(x.size()) + " != " +
                              std::to_string(input_dim()));
    DenseVector a(x);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        DenseVector z(weights_[l].rows());
        kernels::gemv(weights_[l].flat(), weights_[l].rows(), weights_[l].cols(), a, z.view());
        kernels::axpy(1.0, biases_[l], z.view());
        kernels::relu(z.view());
        a = std::move(z);
    }
    return a;
}

Mlp::Trace Mlp::forward_batch(const DenseMatrix& inputs) const {
    LOWSHOT_REQUIRE(!sizes_.empty(), "Mlp::forward_batch: empty network");
    if (inputs.cols() != input_dim())
        throw InvalidArgument("Mlp::forward_batch: input dimension " + std::to_string(inputs.cols()) + " != " +
                              std::to_string(input_dim()));
    Trace t;
    t.post.push_back(inputs);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const DenseMatrix& w = weights_[l];
        const DenseMatrix& a = t.post.back();
        DenseMatrix z(a.rows(), w.rows());
        for (std::size_t r = 0; r < a.rows(); ++r) {
            kernels::gemv(w.flat(), w.rows(), w.cols(), a.row(r), z.row(r));
            kernels::axpy(1.0, biases_[l], z.row(r));
        }
        DenseMatrix h = z;
        kernels::relu(h.flat());
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(h));
    }
    return t;
}

DenseMatrix Mlp::backward_batch(const Trace& trace, const DenseMatrix& grad_output, MlpGradients& grads) const {
    LOWSHOT_REQUIRE(grad_output.rows() == trace.output().rows() && grad_output.cols() == output_dim(),
                    "Mlp::backward_batch: gradient shape mismatch");
    DenseMatrix g = grad_output;
    for (std::size_t l = weights_.size(); l-- > 0;) {
        const DenseMatrix& w = weights_[l];
        const DenseMatrix& z = trace.pre[l];
        const DenseMatrix& a = trace.post[l];
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(z.flat()[i] > 0.0)) g.flat()[i] = 0.0;
        DenseMatrix ga(g.rows(), w.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            kernels::rank1_update(grads.weights[l].flat(), w.rows(), w.cols(), 1.0, g.row(r), a.row(r));
            kernels::axpy(1.0, g.row(r), grads.biases[l].view());
            kernels::gemv_t_acc(w.flat(), w.rows(), w.cols(), g.row(r), ga.row(r));
        }
        g = std::move(ga);
    }
    return g;
}

MlpGradients Mlp::zero_gradients() const {
    MlpGradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        g.weights.emplace_back(weights_[l].rows(), weights_[l].cols());
        g.biases.emplace_back(biases_[l].dim());
    }
    return g;
}

std::vector<std::span<double>> Mlp::parameter_blocks() {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(weights_[l].flat());
        out.push_back(biases_[l].view());
    }
    return out;
}

std::vector<std::span<const double>> Mlp::parameter_blocks() const {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(weights_[l].flat());
        out.push_back(biases_[l].view());
    }
    return out;
}

bool Mlp::all_finite() const noexcept {
    for (std::size_t l = 0; l < weights_.size(); ++l)
        if (!weights_[l].all_finite() || !lowshot::all_finite(biases_[l])) return false;
    return true;
}

std::vector<std::span<double>> gradient_blocks(MlpGradients& grads) {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        out.push_back(grads.weights[l].flat());
        out.push_back(grads.biases[l].view());
    }
    return out;
}

SgdOptimizer::SgdOptimizer(std::vector<std::size_t> block_sizes, double momentum) : momentum_(momentum) {
    for (std::size_t n : block_sizes) velocity_.emplace_back(n, 0.0);
}

void SgdOptimizer::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                        double learning_rate, double weight_decay, const std::vector<bool>& decay_mask) {
    LOWSHOT_REQUIRE(params.size() == velocity_.size() && grads.size() == velocity_.size() &&
                        decay_mask.size() == velocity_.size(),
                    "SgdOptimizer: block count mismatch");
    for (std::size_t b = 0; b < params.size(); ++b) {
        std::span<double> g = grads[b];
        if (decay_mask[b] && weight_decay > 0.0) kernels::axpy(weight_decay, params[b], g);
        if (momentum_ > 0.0) {
            std::span<double> v = velocity_[b];
            kernels::scale(momentum_, v);
            kernels::axpy(1.0, g, v);
            kernels::axpy(-learning_rate, v, params[b]);
        } else {
            kernels::axpy(-learning_rate, g, params[b]);
        }
    }
}

AdamOptimizer::AdamOptimizer(std::vector<std::size_t> block_sizes, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    for (std::size_t n : block_sizes) {
        m_.emplace_back(n, 0.0);
        v_.emplace_back(n, 0.0);
    }
}

void AdamOptimizer::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                         double learning_rate) {
    LOWSHOT_REQUIRE(params.size() == m_.size() && grads.size() == m_.size(), "AdamOptimizer: block count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        LOWSHOT_REQUIRE(params[b].size() == m_[b].size() && grads[b].size() == m_[b].size(),
                        "AdamOptimizer: block size mismatch");
        for (std::size_t i = 0; i < m_[b].size(); ++i) {
            const double g = grads[b][i];
            m_[b][i] = beta1_ * m_[b][i] + (1.0 - beta1_) * g;
            v_[b][i] = beta2_ * v_[b][i] + (1.0 - beta2_) * g * g;
            params[b][i] -= learning_rate * (m_[b][i] / c1) / (std::sqrt(v_[b][i] / c2) + epsilon_);
        }
    }
}

std::vector<std::uint8_t> encode_mlp(std::string_view magic, const Mlp& net) {
    LOWSHOT_REQUIRE(net.all_finite(), "encode_mlp: non-finite parameters");
    detail::ByteWriter w;
    w.magic(magic);
    w.u32(static_cast<std::uint32_t>(net.sizes().size()));
    for (std::size_t s : net.sizes()) w.u32(static_cast<std::uint32_t>(s));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (double v : net.weights(l).flat()) w.f32(v);
        for (double v : net.bias(l)) w.f32(v);
    }
    return w.take();
}

Mlp decode_mlp(std::string_view magic, std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(magic);
    const std::size_t count_at = r.offset();
    const std::uint32_t count = r.u32("layer count");
    if (count < 2 || count > 64) throw ParseError("layer count " + std::to_string(count) + " out of range", count_at);
    std::vector<std::size_t> sizes;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.offset();
        const std::uint32_t s = r.u32("layer size");
        if (s == 0) throw ParseError("zero layer size", at);
        sizes.push_back(s);
    }
    std::size_t params = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) params += sizes[l] * sizes[l + 1] + sizes[l + 1];
    r.need(params * 4, "parameters");
    Mlp net(sizes);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (double& v : net.weights(l).flat()) v = r.f32("weight");
        for (double& v : net.bias(l)) v = r.f32("bias");
    }
    r.expect_end();
    return net;
}

}  // namespace lowshot
