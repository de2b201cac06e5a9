#pragma once
// nncore.hpp
//
// Minimal differentiable-network substrate: dense multilayer networks with
// rectifier hidden layers and identity output, exact analytic gradients,
// the loss functions used across the project, gradient reversal, and the
// SGD + INV-schedule optimizer everything trains with.
//
// All math is double precision. All randomness goes through Rng, whose
// output stream is fully specified (mt19937_64 plus bit-level conversion),
// so identical seeds reproduce identical parameters bit for bit.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pmc {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // uniform in [0,1), derived from the top 53 bits
    double uniform();
    double uniform(double lo, double hi);
    // standard normal via Box-Muller (pair cached)
    double gaussian();
    // uniform integer in [0, n), rejection-sampled
    std::size_t below(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    // mt19937_64's output sequence is pinned by the standard; all value
    // conversions are done here bit-level, so streams are portable.
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Mixes a base seed with a textual tag into a fresh stream seed. Used to give
// each branch / epoch / purpose its own RNG without cross-talk.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index);

// ---------------------------------------------------------------------------
// Dense networks
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec v;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

struct DenseLayer {
    Matrix w;  // out x in
    Vec b;     // out
};

// Fully connected net: rectifier on hidden layers, identity on the output
// layer. layer_sizes = {in, h1, ..., out}.
struct DenseNet {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layer_sizes.front(); }
    std::size_t out_dim() const { return layer_sizes.back(); }
    std::size_t param_count() const;
};

// Uniform init in +-sqrt(6/(n_in+n_out)) per layer, drawn from rng.
DenseNet make_dense_net(const std::vector<std::size_t>& layer_sizes, Rng& rng);

// Per-layer activations kept for the backward pass. a[0] is the input,
// a[i] is the post-rectifier output of layer i (identity for the last).
struct Activations {
    std::vector<Vec> a;
    const Vec& output() const { return a.back(); }
};

Activations forward(const DenseNet& net, const Vec& x);

// Parameter gradients, shapes mirroring the net, plus the gradient wrt the
// network input (needed to chain losses through feature extractors).
struct NetGrads {
    std::vector<DenseLayer> layers;
    Vec input;

    void add_scaled(const NetGrads& other, double s);
    void scale(double s);
};

NetGrads zero_grads(const DenseNet& net);

// Exact gradients for the rectifier/linear graph recorded in acts.
NetGrads backward(const DenseNet& net, const Activations& acts, const Vec& output_grad);
// Accumulates scale * gradients into `into` (no allocation); input grad is
// accumulated too.
void backward_accumulate(const DenseNet& net, const Activations& acts, const Vec& output_grad,
                         double scale, NetGrads& into);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

Vec softmax(const Vec& logits);

// loss = -weight * log softmax(logits)[label]; grad = weight * (softmax - onehot)
LossGrad softmax_xent(const Vec& logits, std::size_t label, double weight);

// Sigmoid binary cross-entropy on a single logit; domain_label in {0,1}.
struct ScalarLossGrad {
    double loss = 0.0;
    double grad = 0.0;
};
ScalarLossGrad binary_xent(double logit, int domain_label);

// loss = mean |pred - target|; grad = sign(pred - target) / dim
LossGrad l1_loss(const Vec& pred, const Vec& target);

// Backward pass of the gradient reversal layer: -factor * upstream.
// The forward pass is the identity, so there is no forward op.
Vec grl_backward(const Vec& upstream_grad, double factor);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// INV decreasing schedule: base_lr * (1 + 10 p)^(-0.75), p in [0,1].
double inv_lr(double p, double base_lr);

// Adversarial adaptation ramp 2/(1+exp(-10 p)) - 1, multiplied into the GRL
// factor when enabled.
double adaptation_ramp(double p);

struct OptimState {
    std::vector<DenseLayer> velocity;  // mirrors the net's parameters
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    bool inv_schedule = true;

    static OptimState for_net(const DenseNet& net, double base_lr, double momentum,
                              double weight_decay, bool inv_schedule = true);

    double progress() const { return progress_; }
    // Progress must be non-decreasing within a run and stay in [0,1].
    void set_progress(double p);
    double lr() const;

private:
    double progress_ = 0.0;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr(p)*v
void sgd_step(DenseNet& net, const NetGrads& grads, OptimState& optim);

}  // namespace pmc
