#pragma once

#include <utility>
#include <vector>

#include "cet/nn.hpp"
#include "cet/rng.hpp"
#include "cet/tape.hpp"

namespace cet {

// Two-branch outcome regressor: independent dense stacks for the control
// (branch 0) and treated (branch 1) potential outcomes. Checkpoint keys
// "head0.*" / "head1.*".
struct HeadParams {
    DenseStack branch0;
    DenseStack branch1;

    HeadParams() = default;

    static HeadParams init(std::size_t d_model, std::size_t hidden, Rng& rng);

    std::vector<Param*> params();
    std::size_t param_count() const { return branch0.param_count() + branch1.param_count(); }
};

// Evaluates both branches for every unit: (y0_hat, y1_hat), each n x 1.
// Branch (1 - T_i) is the counterfactual prediction for unit i.
std::pair<Tape::Id, Tape::Id> predict_potential(Tape& t, Tape::Id x_e, HeadParams& params);

// Mean squared error of the factual branch only: (1/n) sum_i
// (yhat_{t_i, i} - y_i)^2. The other branch receives no gradient.
Tape::Id factual_loss(Tape& t, Tape::Id y0_hat, Tape::Id y1_hat,
                      const std::vector<int>& treatment, const std::vector<real>& y);

} // namespace cet
