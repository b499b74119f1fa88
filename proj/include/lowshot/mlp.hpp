#pragma once

#include "lowshot/numerics.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lowshot {

struct MlpGradients {
    std::vector<DenseMatrix> weights;
    std::vector<DenseVector> biases;

    void zero();
};

// Fully connected network with a rectifier after every affine layer,
// including the last, so outputs are always non-negative.
class Mlp {
public:
    Mlp() = default;
    // Zero-initialized parameters. sizes = {input, hidden..., output}.
    explicit Mlp(std::vector<std::size_t> sizes);
    // Uniform(-b, b) weights with b = sqrt(6 / fan_in), zero biases.
    static Mlp initialized(std::vector<std::size_t> sizes, std::uint64_t seed);

    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    std::size_t layer_count() const noexcept { return weights_.size(); }
    std::size_t input_dim() const noexcept { return sizes_.front(); }
    std::size_t output_dim() const noexcept { return sizes_.back(); }
    std::size_t parameter_count() const noexcept;

    const DenseMatrix& weights(std::size_t layer) const { return weights_.at(layer); }
    DenseMatrix& weights(std::size_t layer) { return weights_.at(layer); }
    const DenseVector& bias(std::size_t layer) const { return biases_.at(layer); }
    DenseVector& bias(std::size_t layer) { return biases_.at(layer); }

    DenseVector forward(std::span<const double> x) const;

    // Per-layer values for a batch (rows are examples). post[0] is the input,
    // pre[l] / post[l + 1] are the affine output and rectified output of layer l.
    struct Trace {
        std::vector<DenseMatrix> pre;
        std::vector<DenseMatrix> post;
        const DenseMatrix& output() const { return post.back(); }
    };
    Trace forward_batch(const DenseMatrix& inputs) const;

    // Accumulates dLoss/dparams into `grads` given dLoss/doutput per row;
    // returns dLoss/dinput. Rectifier derivative at exactly 0 is taken as 0.
    DenseMatrix backward_batch(const Trace& trace, const DenseMatrix& grad_output, MlpGradients& grads) const;

    MlpGradients zero_gradients() const;

    // Parameter blocks in a fixed order (W0, b0, W1, b1, ...).
    std::vector<std::span<double>> parameter_blocks();
    std::vector<std::span<const double>> parameter_blocks() const;

    bool all_finite() const noexcept;
    bool operator==(const Mlp&) const = default;

private:
    std::vector<std::size_t> sizes_;
    std::vector<DenseMatrix> weights_;  // out x in
    std::vector<DenseVector> biases_;
};

std::vector<std::span<double>> gradient_blocks(MlpGradients& grads);

// Momentum SGD over a fixed list of parameter blocks. Weight decay is applied
// to blocks flagged in `decay_mask`.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<std::size_t> block_sizes, double momentum);

    void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
              double learning_rate, double weight_decay, const std::vector<bool>& decay_mask);

private:
    std::vector<std::vector<double>> velocity_;
    double momentum_;
};

// Adam with bias correction over the same block layout as SgdOptimizer.
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<std::size_t> block_sizes, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8);

    void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
              double learning_rate);

private:
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, epsilon_;
    std::size_t t_ = 0;
};

// Layered checkpoint: magic, u32 size count, sizes as u32, then per layer
// float32 weights (row-major, out x in) followed by float32 biases.
std::vector<std::uint8_t> encode_mlp(std::string_view magic, const Mlp& net);
Mlp decode_mlp(std::string_view magic, std::span<const std::uint8_t> bytes);

}  // namespace lowshot
