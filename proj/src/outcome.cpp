#include "cet/outcome.hpp"

#include "cet/errors.hpp"

namespace cet {

HeadParams HeadParams::init(std::size_t d_model, std::size_t hidden, Rng& rng) {
    if (d_model < 1 || hidden < 1) throw ConfigError("head sizes must be at least 1");
    HeadParams p;
    p.branch0 = DenseStack("head0", {d_model, hidden, 1}, rng);
    p.branch1 = DenseStack("head1", {d_model, hidden, 1}, rng);
    return p;
}

std::vector<Param*> HeadParams::params() {
    std::vector<Param*> out = branch0.params();
    for (Param* p : branch1.params()) out.push_back(p);
    return out;
}

std::pair<Tape::Id, Tape::Id> predict_potential(Tape& t, Tape::Id x_e, HeadParams& params) {
    return {params.branch0.forward(t, x_e), params.branch1.forward(t, x_e)};
}

Tape::Id factual_loss(Tape& t, Tape::Id y0_hat, Tape::Id y1_hat,
                      const std::vector<int>& treatment, const std::vector<real>& y) {
    const std::size_t n = treatment.size();
    if (y.size() != n)
        throw ShapeError("factual_loss: " + std::to_string(n) + " treatments vs " +
                         std::to_string(y.size()) + " outcomes");
    if (t.val(y0_hat).rows() != n || t.val(y1_hat).rows() != n)
        throw ShapeError("factual_loss: prediction rows do not match n=" + std::to_string(n));
    if (n == 0) throw ShapeError("factual_loss: empty batch");

    std::vector<std::size_t> arm_idx[2];
    std::vector<real> arm_y[2];
    for (std::size_t i = 0; i < n; ++i) {
        const int ti = treatment[i];
        if (ti != 0 && ti != 1)
            throw ValidationError("treatment must be 0 or 1, got " + std::to_string(ti));
        arm_idx[ti].push_back(i);
        arm_y[ti].push_back(y[i]);
    }

    const Tape::Id preds[2] = {y0_hat, y1_hat};
    Tape::Id total = -1;
    for (int arm = 0; arm < 2; ++arm) {
        if (arm_idx[arm].empty()) continue;
        Tape::Id diff = t.sub(t.gather_rows(preds[arm], arm_idx[arm]),
                              t.constant(Tensor::matrix(arm_y[arm].size(), 1, arm_y[arm])));
        Tape::Id sq = t.sum(t.mul(diff, diff));
        total = total < 0 ? sq : t.add(total, sq);
    }
    return t.scale(total, real(1) / static_cast<real>(n));
}

} // namespace cet
