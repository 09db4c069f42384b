#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cet/rng.hpp"
#include "cet/tape.hpp"
#include "cet/tensor.hpp"

namespace cet {

// Glorot-uniform weight matrix, bound +-sqrt(6/(fan_in+fan_out)).
Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// x.W + b with gradients to x, W and b. W is fan_in x fan_out, b rank-1.
Tape::Id dense(Tape& t, Tape::Id x, Param& w, Param& b);

// A stack of dense layers with relu between them (linear output layer).
// dims = {in, hidden..., out}. Checkpoint keys are "<prefix>.l{i}.w/b".
struct DenseStack {
    std::vector<Param> weights;
    std::vector<Param> biases;

    DenseStack() = default;
    DenseStack(const std::string& prefix, const std::vector<std::size_t>& dims, Rng& rng);

    Tape::Id forward(Tape& t, Tape::Id x);

    std::size_t param_count() const;
    std::vector<Param*> params();
};

// Optimizers ---------------------------------------------------------------

class Sgd {
public:
    Sgd(std::vector<Param*> params, real lr) : params_(std::move(params)), lr_(lr) {}
    void step();
    void zero_grad();

private:
    std::vector<Param*> params_;
    real lr_;
};

// Adam with the usual bias correction; eps fixed at 1e-8.
class Adam {
public:
    Adam(std::vector<Param*> params, real lr, real beta1 = real(0.9), real beta2 = real(0.999));
    void step();
    void zero_grad();

private:
    std::vector<Param*> params_;
    real lr_, beta1_, beta2_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// RMSProp (rho 0.9, eps 1e-8), the optimizer the WGAN recipe calls for.
class RmsProp {
public:
    RmsProp(std::vector<Param*> params, real lr, real rho = real(0.9));
    void step();
    void zero_grad();

private:
    std::vector<Param*> params_;
    real lr_, rho_;
    std::vector<Tensor> sq_;
};

void zero_grads(const std::vector<Param*>& params);

// Clamp every entry of every param into [-c, c].
void clip_params(const std::vector<Param*>& params, real c);

} // namespace cet
