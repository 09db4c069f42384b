#include "cet/nn.hpp"

#include <cmath>

namespace cet {

namespace {
constexpr real kOptEps = real(1e-8);
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<real>(rng.uniform(-bound, bound));
    return w;
}

Tape::Id dense(Tape& t, Tape::Id x, Param& w, Param& b) {
    return t.add(t.matmul(x, t.param(w)), t.param(b));
}

DenseStack::DenseStack(const std::string& prefix, const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("DenseStack: need at least in/out dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::string layer = prefix + ".l" + std::to_string(i);
        weights.emplace_back(layer + ".w", glorot(dims[i], dims[i + 1], rng));
        biases.emplace_back(layer + ".b", Tensor({dims[i + 1]}));
    }
}

Tape::Id DenseStack::forward(Tape& t, Tape::Id x) {
    Tape::Id h = x;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        h = dense(t, h, weights[i], biases[i]);
        if (i + 1 < weights.size()) h = t.relu(h);
    }
    return h;
}

std::size_t DenseStack::param_count() const {
    std::size_t n = 0;
    for (const Param& p : weights) n += p.value.size();
    for (const Param& p : biases) n += p.value.size();
    return n;
}

std::vector<Param*> DenseStack::params() {
    std::vector<Param*> out;
    for (Param& p : weights) out.push_back(&p);
    for (Param& p : biases) out.push_back(&p);
    return out;
}

void Sgd::step() {
    for (Param* p : params_)
        for (std::size_t i = 0; i < p->value.size(); ++i)
            p->value[i] -= lr_ * p->grad[i];
}

void Sgd::zero_grad() { zero_grads(params_); }

Adam::Adam(std::vector<Param*> params, real lr, real beta1, real beta2)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2) {
    for (Param* p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void Adam::step() {
    ++t_;
    const real bc1 = real(1) - static_cast<real>(std::pow(beta1_, static_cast<double>(t_)));
    const real bc2 = real(1) - static_cast<real>(std::pow(beta2_, static_cast<double>(t_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param* p = params_[k];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const real g = p->grad[i];
            m_[k][i] = beta1_ * m_[k][i] + (real(1) - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (real(1) - beta2_) * g * g;
            const real mh = m_[k][i] / bc1;
            const real vh = v_[k][i] / bc2;
            p->value[i] -= lr_ * mh / (std::sqrt(vh) + kOptEps);
        }
    }
}

void Adam::zero_grad() { zero_grads(params_); }

RmsProp::RmsProp(std::vector<Param*> params, real lr, real rho)
    : params_(std::move(params)), lr_(lr), rho_(rho) {
    for (Param* p : params_) sq_.push_back(Tensor::zeros_like(p->value));
}

void RmsProp::step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Param* p = params_[k];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const real g = p->grad[i];
            sq_[k][i] = rho_ * sq_[k][i] + (real(1) - rho_) * g * g;
            p->value[i] -= lr_ * g / (std::sqrt(sq_[k][i]) + kOptEps);
        }
    }
}

void RmsProp::zero_grad() { zero_grads(params_); }

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

void clip_params(const std::vector<Param*>& params, real c) {
    if (c <= 0) throw ConfigError("clip_params: bound must be positive");
    for (Param* p : params)
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            if (p->value[i] > c) p->value[i] = c;
            if (p->value[i] < -c) p->value[i] = -c;
        }
}

} // namespace cet
