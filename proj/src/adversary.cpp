#include "cet/adversary.hpp"

#include "cet/errors.hpp"

namespace cet {

CriticParams CriticParams::init(std::size_t d_model, std::size_t hidden, real clip, Rng& rng) {
    if (d_model < 1 || hidden < 1) throw ConfigError("critic sizes must be at least 1");
    if (!(clip > 0)) throw ConfigError("critic clip bound must be positive");
    CriticParams p;
    p.net = DenseStack("critic", {d_model, hidden, 1}, rng);
    p.clip = clip;
    return p;
}

const char* adv_flow_name(AdvFlow f) {
    return f == AdvFlow::Both ? "both" : "control_only";
}

AdvFlow adv_flow_from_name(const std::string& name) {
    if (name == "both") return AdvFlow::Both;
    if (name == "control_only") return AdvFlow::ControlOnly;
    throw ConfigError("unknown adv_flow '" + name + "' (use both or control_only)");
}

Tape::Id critic_score(Tape& t, Tape::Id x_e, CriticParams& params) {
    return params.net.forward(t, x_e);
}

namespace {

void require_non_empty(const Tape& t, Tape::Id treated, Tape::Id control) {
    if (t.val(treated).size() == 0 || t.val(control).size() == 0)
        throw GroupError("adversarial loss needs scores from both treatment arms");
}

} // namespace

Tape::Id wasserstein_gap(Tape& t, Tape::Id scores_treated, Tape::Id scores_control) {
    require_non_empty(t, scores_treated, scores_control);
    return t.sub(t.mean(scores_treated), t.mean(scores_control));
}

Tape::Id critic_loss(Tape& t, Tape::Id scores_treated, Tape::Id scores_control) {
    return t.scale(wasserstein_gap(t, scores_treated, scores_control), real(-1));
}

Tape::Id generator_balance_loss(Tape& t, Tape::Id scores_treated, Tape::Id scores_control,
                                AdvFlow flow) {
    require_non_empty(t, scores_treated, scores_control);
    Tape::Id mean_t = t.mean(scores_treated);
    if (flow == AdvFlow::ControlOnly)
        mean_t = t.constant(Tensor::scalar(t.val(mean_t)[0]));  // detach the treated side
    return t.sub(mean_t, t.mean(scores_control));
}

void clip_weights(CriticParams& params, real c) {
    clip_params(params.params(), c);
}

} // namespace cet
