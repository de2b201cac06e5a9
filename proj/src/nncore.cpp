#include "pmc/nncore.hpp"

#include <cmath>
#include <stdexcept>

namespace pmc {

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(seed ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index) {
    return splitmix64(derive_seed(seed, tag) ^ splitmix64(index + 0x51ed2701ULL));
}

// ---------------------------------------------------------------------------
// DenseNet
// ---------------------------------------------------------------------------

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.v.size() + l.b.size();
    return n;
}

DenseNet make_dense_net(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("make_dense_net: need at least input and output sizes");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw std::invalid_argument("make_dense_net: layer sizes must be positive");
    }
    DenseNet net;
    net.layer_sizes = layer_sizes;
    net.layers.resize(layer_sizes.size() - 1);
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const std::size_t nin = layer_sizes[i];
        const std::size_t nout = layer_sizes[i + 1];
        DenseLayer& l = net.layers[i];
        l.w = Matrix(nout, nin);
        l.b.assign(nout, 0.0);
        const double bound = std::sqrt(6.0 / static_cast<double>(nin + nout));
        for (double& x : l.w.v) x = rng.uniform(-bound, bound);
    }
    return net;
}

Activations forward(const DenseNet& net, const Vec& x) {
    if (x.size() != net.in_dim()) {
        throw std::invalid_argument("forward: input has dim " + std::to_string(x.size()) +
                                    ", net expects " + std::to_string(net.in_dim()));
    }
    Activations acts;
    acts.a.reserve(net.layers.size() + 1);
    acts.a.push_back(x);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const DenseLayer& l = net.layers[li];
        const Vec& in = acts.a.back();
        Vec out(l.b);
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            double acc = 0.0;
            const double* wr = &l.w.v[r * l.w.cols];
            for (std::size_t c = 0; c < l.w.cols; ++c) acc += wr[c] * in[c];
            out[r] += acc;
        }
        const bool hidden = li + 1 < net.layers.size();
        if (hidden) {
            for (double& v : out) v = v > 0.0 ? v : 0.0;
        }
        acts.a.push_back(std::move(out));
    }
    return acts;
}

NetGrads zero_grads(const DenseNet& net) {
    NetGrads g;
    g.layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        g.layers[i].w = Matrix(net.layers[i].w.rows, net.layers[i].w.cols);
        g.layers[i].b.assign(net.layers[i].b.size(), 0.0);
    }
    g.input.assign(net.in_dim(), 0.0);
    return g;
}

void NetGrads::add_scaled(const NetGrads& other, double s) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (std::size_t k = 0; k < layers[i].w.v.size(); ++k)
            layers[i].w.v[k] += s * other.layers[i].w.v[k];
        for (std::size_t k = 0; k < layers[i].b.size(); ++k)
            layers[i].b[k] += s * other.layers[i].b[k];
    }
    for (std::size_t k = 0; k < input.size(); ++k) input[k] += s * other.input[k];
}

void NetGrads::scale(double s) {
    for (auto& l : layers) {
        for (double& v : l.w.v) v *= s;
        for (double& v : l.b) v *= s;
    }
    for (double& v : input) v *= s;
}

void backward_accumulate(const DenseNet& net, const Activations& acts, const Vec& output_grad,
                         double scale, NetGrads& into) {
    if (acts.a.size() != net.layers.size() + 1) {
        throw std::logic_error("backward: activations do not match this net");
    }
    for (std::size_t i = 0; i < acts.a.size(); ++i) {
        if (acts.a[i].size() != net.layer_sizes[i]) {
            throw std::logic_error("backward: stale activations (layer " + std::to_string(i) +
                                   " has dim " + std::to_string(acts.a[i].size()) + ")");
        }
    }
    if (output_grad.size() != net.out_dim()) {
        throw std::invalid_argument("backward: output gradient dim mismatch");
    }

    Vec delta = output_grad;  // gradient wrt the current layer's output
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const DenseLayer& l = net.layers[li];
        const bool hidden = li + 1 < net.layers.size();
        if (hidden) {
            // rectifier mask: post-activation > 0 iff pre-activation > 0
            const Vec& post = acts.a[li + 1];
            for (std::size_t r = 0; r < delta.size(); ++r) {
                if (post[r] <= 0.0) delta[r] = 0.0;
            }
        }
        const Vec& in = acts.a[li];
        DenseLayer& g = into.layers[li];
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            const double d = scale * delta[r];
            g.b[r] += d;
            double* gr = &g.w.v[r * l.w.cols];
            for (std::size_t c = 0; c < l.w.cols; ++c) gr[c] += d * in[c];
        }
        Vec prev(l.w.cols, 0.0);
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            const double d = delta[r];
            const double* wr = &l.w.v[r * l.w.cols];
            for (std::size_t c = 0; c < l.w.cols; ++c) prev[c] += wr[c] * d;
        }
        delta = std::move(prev);
    }
    for (std::size_t c = 0; c < delta.size(); ++c) into.input[c] += scale * delta[c];
}

NetGrads backward(const DenseNet& net, const Activations& acts, const Vec& output_grad) {
    NetGrads g = zero_grads(net);
    backward_accumulate(net, acts, output_grad, 1.0, g);
    return g;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Vec softmax(const Vec& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

LossGrad softmax_xent(const Vec& logits, std::size_t label, double weight) {
    if (label >= logits.size()) {
        throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(logits.size()) +
                                    " classes");
    }
    if (!std::isfinite(weight) || weight < 0.0) {
        throw std::invalid_argument("softmax_xent: weight must be finite and >= 0");
    }
    Vec p = softmax(logits);
    LossGrad out;
    out.loss = -weight * std::log(p[label]);
    out.grad = std::move(p);
    for (double& v : out.grad) v *= weight;
    out.grad[label] -= weight;
    return out;
}

ScalarLossGrad binary_xent(double logit, int domain_label) {
    if (!std::isfinite(logit)) throw std::invalid_argument("binary_xent: non-finite logit");
    if (domain_label != 0 && domain_label != 1) {
        throw std::invalid_argument("binary_xent: domain label must be 0 or 1");
    }
    const double d = static_cast<double>(domain_label);
    // stable: max(x,0) - d*x + log(1+exp(-|x|))
    const double loss =
        std::max(logit, 0.0) - d * logit + std::log1p(std::exp(-std::fabs(logit)));
    const double sig = 1.0 / (1.0 + std::exp(-logit));
    return {loss, sig - d};
}

LossGrad l1_loss(const Vec& pred, const Vec& target) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("l1_loss: pred dim " + std::to_string(pred.size()) +
                                    " != target dim " + std::to_string(target.size()));
    }
    if (pred.empty()) throw std::invalid_argument("l1_loss: empty vectors");
    LossGrad out;
    out.grad.assign(pred.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        out.loss += std::fabs(d) * inv;
        out.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return out;
}

Vec grl_backward(const Vec& upstream_grad, double factor) {
    if (!std::isfinite(factor) || factor < 0.0) {
        throw std::invalid_argument("grl_backward: factor must be finite and >= 0");
    }
    Vec out(upstream_grad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -factor * upstream_grad[i];
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

double inv_lr(double p, double base_lr) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("inv_lr: p must lie in [0,1]");
    }
    return base_lr * std::pow(1.0 + 10.0 * p, -0.75);
}

double adaptation_ramp(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("adaptation_ramp: p must lie in [0,1]");
    }
    return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

OptimState OptimState::for_net(const DenseNet& net, double base_lr, double momentum,
                               double weight_decay, bool inv_schedule) {
    if (!(base_lr > 0.0)) throw std::invalid_argument("OptimState: base_lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("OptimState: momentum must lie in [0,1)");
    }
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("OptimState: weight_decay must be >= 0");
    OptimState s;
    s.base_lr = base_lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.inv_schedule = inv_schedule;
    s.velocity.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        s.velocity[i].w = Matrix(net.layers[i].w.rows, net.layers[i].w.cols);
        s.velocity[i].b.assign(net.layers[i].b.size(), 0.0);
    }
    return s;
}

void OptimState::set_progress(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("set_progress: p must lie in [0,1]");
    if (p < progress_) throw std::invalid_argument("set_progress: progress must not decrease");
    progress_ = p;
}

double OptimState::lr() const { return inv_schedule ? inv_lr(progress_, base_lr) : base_lr; }

void sgd_step(DenseNet& net, const NetGrads& grads, OptimState& optim) {
    if (grads.layers.size() != net.layers.size() || optim.velocity.size() != net.layers.size()) {
        throw std::logic_error("sgd_step: gradient/velocity shapes do not match the net");
    }
    const double lr = optim.lr();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        DenseLayer& l = net.layers[i];
        const DenseLayer& g = grads.layers[i];
        DenseLayer& v = optim.velocity[i];
        if (g.w.v.size() != l.w.v.size() || g.b.size() != l.b.size()) {
            throw std::logic_error("sgd_step: gradient shape mismatch at layer " +
                                   std::to_string(i));
        }
        for (std::size_t k = 0; k < l.w.v.size(); ++k) {
            v.w.v[k] = optim.momentum * v.w.v[k] + g.w.v[k] + optim.weight_decay * l.w.v[k];
            l.w.v[k] -= lr * v.w.v[k];
        }
        for (std::size_t k = 0; k < l.b.size(); ++k) {
            v.b[k] = optim.momentum * v.b[k] + g.b[k] + optim.weight_decay * l.b[k];
            l.b[k] -= lr * v.b[k];
        }
    }
}

}  // namespace pmc
