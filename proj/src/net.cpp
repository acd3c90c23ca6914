#include "mixconf/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mixconf {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kProbFloor = 1e-12;

double activate(Activation a, double z) {
    return a == Activation::ReLU ? std::max(0.0, z) : std::tanh(z);
}

// Derivative expressed through the activation value (valid for both ReLU and
// tanh; ReLU's subgradient at 0 is taken as 0).
double activate_grad(Activation a, double value) {
    return a == Activation::ReLU ? (value > 0.0 ? 1.0 : 0.0) : 1.0 - value * value;
}

void softmax_rows(Matrix& z) {
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
}

// Forward pass through arbitrary parameters; optionally records the hidden
// activations (post-nonlinearity) for backprop.
Matrix run_forward(const std::vector<LayerParams>& layers, Activation act, const Matrix& x,
                   std::vector<Matrix>* hidden_out = nullptr) {
    if (x.cols() != layers.front().w.cols())
        throw std::invalid_argument("forward: input dimension mismatch");
    Matrix a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Matrix& w = layers[l].w;
        const std::vector<double>& b = layers[l].b;
        Matrix z(a.rows(), w.rows());
        for (std::size_t r = 0; r < a.rows(); ++r) {
            auto in = a.row(r);
            for (std::size_t o = 0; o < w.rows(); ++o) {
                auto wr = w.row(o);
                // four partial sums break the reduction dependency chain
                double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
                std::size_t c = 0;
                for (; c + 4 <= w.cols(); c += 4) {
                    p0 += wr[c] * in[c];
                    p1 += wr[c + 1] * in[c + 1];
                    p2 += wr[c + 2] * in[c + 2];
                    p3 += wr[c + 3] * in[c + 3];
                }
                double acc = b[o] + ((p0 + p1) + (p2 + p3));
                for (; c < w.cols(); ++c) acc += wr[c] * in[c];
                z(r, o) = acc;
            }
        }
        const bool last = (l + 1 == layers.size());
        if (last) {
            softmax_rows(z);
        } else {
            for (double& v : z.data()) v = activate(act, v);
            if (hidden_out) hidden_out->push_back(z);
        }
        a = std::move(z);
    }
    return a;
}

std::vector<LayerParams> zeros_like(const std::vector<LayerParams>& layers) {
    std::vector<LayerParams> out;
    out.reserve(layers.size());
    for (const auto& l : layers)
        out.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
    return out;
}

}  // namespace

void NetConfig::validate() const {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("NetConfig: need at least input and output layer sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw std::invalid_argument("NetConfig: layer sizes must be positive");
    if (layer_sizes.back() < 2)
        throw std::invalid_argument("NetConfig: output layer needs at least 2 classes");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0))
        throw std::invalid_argument("NetConfig: ema_decay must be in [0,1)");
}

NetState NetState::init(const NetConfig& config) {
    config.validate();
    NetState state;
    state.config = config;
    Rng rng(config.seed);
    for (std::size_t l = 0; l + 1 < config.layer_sizes.size(); ++l) {
        const std::size_t fan_in = config.layer_sizes[l];
        const std::size_t fan_out = config.layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        LayerParams p{Matrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
        for (double& v : p.w.data()) v = dist(rng);
        state.params.push_back(std::move(p));
    }
    state.ema = state.params;
    state.adam_m = zeros_like(state.params);
    state.adam_v = zeros_like(state.params);
    return state;
}

Matrix forward(const NetState& state, const Matrix& x_batch) {
    return run_forward(state.params, state.config.activation, x_batch);
}

Matrix ema_forward(const NetState& state, const Matrix& x_batch) {
    return run_forward(state.ema, state.config.activation, x_batch);
}

std::vector<double> cross_entropy(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("cross_entropy: shape mismatch");
    std::vector<double> loss(pred.rows(), 0.0);
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double t = target(r, c);
            if (t != 0.0) acc -= t * std::log(std::max(pred(r, c), kProbFloor));
        }
        loss[r] = acc;
    }
    return loss;
}

GradientResult loss_gradients(const NetState& state, const Matrix& x_batch,
                              const Matrix& target_batch,
                              std::span<const double> per_sample_weights) {
    const std::size_t n = x_batch.rows();
    if (target_batch.rows() != n || per_sample_weights.size() != n)
        throw std::invalid_argument("backward_and_step: batch size mismatch");
    if (target_batch.cols() != state.config.num_classes())
        throw std::invalid_argument("backward_and_step: target width mismatch");
    for (double w : per_sample_weights)
        if (w < 0.0) throw std::invalid_argument("backward_and_step: negative sample weight");

    std::vector<Matrix> hidden;  // post-activation values per hidden layer
    const Matrix probs = run_forward(state.params, state.config.activation, x_batch, &hidden);

    const std::vector<double> per_sample = cross_entropy(probs, target_batch);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += per_sample_weights[i] * per_sample[i];

    // delta = dLoss/dlogits for the output layer: w_i * (p - t) per row.
    Matrix delta(n, state.config.num_classes());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < delta.cols(); ++c)
            delta(r, c) = per_sample_weights[r] * (probs(r, c) - target_batch(r, c));

    const std::size_t num_layers = state.params.size();
    std::vector<LayerParams> grads = zeros_like(state.params);
    for (std::size_t li = num_layers; li-- > 0;) {
        const Matrix& input = (li == 0) ? x_batch : hidden[li - 1];
        LayerParams& g = grads[li];
        for (std::size_t r = 0; r < n; ++r) {
            auto in = input.row(r);
            for (std::size_t o = 0; o < g.w.rows(); ++o) {
                const double d = delta(r, o);
                if (d == 0.0) continue;
                auto gw = g.w.row(o);
                for (std::size_t c = 0; c < g.w.cols(); ++c) gw[c] += d * in[c];
                g.b[o] += d;
            }
        }
        if (li > 0) {
            // Propagate through the affine map and the hidden nonlinearity.
            // Accumulating row-wise over the outputs keeps the weight access
            // contiguous.
            const Matrix& w = state.params[li].w;
            const Matrix& h = hidden[li - 1];
            Matrix next(n, w.cols());
            for (std::size_t r = 0; r < n; ++r) {
                auto out = next.row(r);
                for (std::size_t o = 0; o < w.rows(); ++o) {
                    const double d = delta(r, o);
                    if (d == 0.0) continue;
                    auto wr = w.row(o);
                    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += d * wr[c];
                }
                for (std::size_t c = 0; c < w.cols(); ++c)
                    out[c] *= activate_grad(state.config.activation, h(r, c));
            }
            delta = std::move(next);
        }
    }
    return {std::move(grads), loss};
}

double backward_and_step(NetState& state, const Matrix& x_batch, const Matrix& target_batch,
                         std::span<const double> per_sample_weights, double learn_rate) {
    auto [grads, loss] = loss_gradients(state, x_batch, target_batch, per_sample_weights);
    const std::size_t num_layers = state.params.size();

    for (const auto& g : grads) {
        if (!g.w.all_finite()) throw std::runtime_error("backward_and_step: non-finite gradient");
        for (double v : g.b)
            if (!std::isfinite(v)) throw std::runtime_error("backward_and_step: non-finite gradient");
    }

    // Adam with bias correction, then the EMA shadow update.
    state.adam_step += 1;
    const double t = static_cast<double>(state.adam_step);
    const double corr1 = 1.0 - std::pow(kAdamBeta1, t);
    const double corr2 = 1.0 - std::pow(kAdamBeta2, t);
    const double decay = state.config.ema_decay;
    for (std::size_t li = 0; li < num_layers; ++li) {
        auto update = [&](double& param, double& m, double& v, double& shadow, double grad) {
            m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
            v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
            param -= learn_rate * (m / corr1) / (std::sqrt(v / corr2) + kAdamEps);
            shadow = decay * shadow + (1.0 - decay) * param;
        };
        auto& p = state.params[li];
        auto& e = state.ema[li];
        auto& m = state.adam_m[li];
        auto& v = state.adam_v[li];
        for (std::size_t i = 0; i < p.w.data().size(); ++i)
            update(p.w.data()[i], m.w.data()[i], v.w.data()[i], e.w.data()[i], grads[li].w.data()[i]);
        for (std::size_t i = 0; i < p.b.size(); ++i)
            update(p.b[i], m.b[i], v.b[i], e.b[i], grads[li].b[i]);
    }
    return loss;
}

namespace {

constexpr char kMagic[8] = {'T', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

void write_layers(std::ostream& os, const std::vector<LayerParams>& layers) {
    for (const auto& l : layers) {
        for (double v : l.w.data()) put_f64(os, v);
        for (double v : l.b) put_f64(os, v);
    }
}

void read_layers(std::istream& is, std::vector<LayerParams>& layers) {
    for (auto& l : layers) {
        for (double& v : l.w.data()) v = get_f64(is);
        for (double& v : l.b) v = get_f64(is);
    }
}

}  // namespace

void save_checkpoint(const NetState& state, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(state.config.layer_sizes.size()));
    for (std::size_t s : state.config.layer_sizes) put_u32(os, static_cast<std::uint32_t>(s));
    write_layers(os, state.params);
    write_layers(os, state.ema);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

void load_checkpoint(NetState& state, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (get_u32(is) != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    const std::uint32_t n_sizes = get_u32(is);
    if (n_sizes != state.config.layer_sizes.size())
        throw std::runtime_error("load_checkpoint: layer count mismatch");
    for (std::size_t s : state.config.layer_sizes)
        if (get_u32(is) != s) throw std::runtime_error("load_checkpoint: layer size mismatch");
    read_layers(is, state.params);
    read_layers(is, state.ema);
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
}

}  // namespace mixconf
