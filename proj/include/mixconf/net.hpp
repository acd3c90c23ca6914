#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixconf/matrix.hpp"
#include "mixconf/rng.hpp"

namespace mixconf {

enum class Activation { ReLU, Tanh };

struct NetConfig {
    std::vector<std::size_t> layer_sizes;  // input dim, hidden..., C
    Activation activation = Activation::ReLU;
    std::uint64_t seed = 0;
    double ema_decay = 0.999;

    void validate() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
};

// One affine layer: weights are (out x in) row-major, bias per output unit.
struct LayerParams {
    Matrix w;
    std::vector<double> b;
};

// Live parameters, Adam moments, and the EMA shadow used for evaluation.
// Exclusively owned during a training step; forward passes are read-only.
struct NetState {
    NetConfig config;
    std::vector<LayerParams> params;
    std::vector<LayerParams> ema;
    std::vector<LayerParams> adam_m;
    std::vector<LayerParams> adam_v;
    std::uint64_t adam_step = 0;

    // He-style uniform init from the config seed; EMA starts equal to the
    // live parameters, moments at zero.
    static NetState init(const NetConfig& config);
};

// Softmax class probabilities, one row per input row. Max-subtraction keeps
// the exponentials in range.
Matrix forward(const NetState& state, const Matrix& x_batch);

// As forward, but through the EMA shadow parameters.
Matrix ema_forward(const NetState& state, const Matrix& x_batch);

// Per-sample soft-label cross entropy, -sum_j t_j log p_j, with p clamped at
// 1e-12 before the log.
std::vector<double> cross_entropy(const Matrix& pred, const Matrix& target);

// Backprop gradients of loss = sum_i weights[i] * ce_i with respect to every
// parameter, plus the loss itself.
struct GradientResult {
    std::vector<LayerParams> grads;
    double loss = 0.0;
};
GradientResult loss_gradients(const NetState& state, const Matrix& x_batch,
                              const Matrix& target_batch,
                              std::span<const double> per_sample_weights);

// One weighted training step: loss = sum_i weights[i] * ce_i, exact gradients
// by backprop, one Adam update, then the EMA update. Returns the loss. A
// non-finite gradient aborts before any parameter is touched.
double backward_and_step(NetState& state, const Matrix& x_batch, const Matrix& target_batch,
                         std::span<const double> per_sample_weights, double learn_rate);

// Flat binary checkpoint: magic + version + layer sizes, then little-endian
// 64-bit floats (live weights/biases in layer order, then the EMA copies).
// Optimizer moments are not persisted.
void save_checkpoint(const NetState& state, const std::string& path);
void load_checkpoint(NetState& state, const std::string& path);

}  // namespace mixconf
