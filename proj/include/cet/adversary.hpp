#pragma once

#include <cstddef>
#include <vector>

#include "cet/nn.hpp"
#include "cet/rng.hpp"
#include "cet/tape.hpp"

namespace cet {

// Wasserstein critic: unbounded scalar score per embedding, kept roughly
// 1-Lipschitz by clamping every weight into [-clip, clip] after each update.
struct CriticParams {
    DenseStack net;        // d_model -> hidden -> 1
    real clip = real(0.01);

    CriticParams() = default;

    static CriticParams init(std::size_t d_model, std::size_t hidden, real clip, Rng& rng);

    std::vector<Param*> params() { return net.params(); }
    std::size_t param_count() const { return net.param_count(); }
};

// Which arms' embeddings carry adversarial gradient back into the encoder.
// `Both` treats the two groups symmetrically; `ControlOnly` follows the
// GAN framing where only the "generated" (control) side trains the generator.
enum class AdvFlow { Both, ControlOnly };

const char* adv_flow_name(AdvFlow f);
AdvFlow adv_flow_from_name(const std::string& name);

// Raw critic scores, m x 1 (no sigmoid).
Tape::Id critic_score(Tape& t, Tape::Id x_e, CriticParams& params);

// mean(scores_treated) - mean(scores_control): the empirical Wasserstein
// estimate the critic maximizes. Throws GroupError on an empty side.
Tape::Id wasserstein_gap(Tape& t, Tape::Id scores_treated, Tape::Id scores_control);

// Negated gap, so a minimizing optimizer performs the critic's max step.
Tape::Id critic_loss(Tape& t, Tape::Id scores_treated, Tape::Id scores_control);

// The encoder's adversarial term: minimize the gap itself. Under
// ControlOnly the treated mean enters as a constant (no gradient).
Tape::Id generator_balance_loss(Tape& t, Tape::Id scores_treated, Tape::Id scores_control,
                                AdvFlow flow = AdvFlow::Both);

// Clamp every critic weight into [-c, c].
void clip_weights(CriticParams& params, real c);
inline void clip_weights(CriticParams& params) { clip_weights(params, params.clip); }

} // namespace cet
