#pragma once

#include "cet/checkpoint.hpp"
#include "cet/nn.hpp"
#include "cet/rng.hpp"
#include "cet/tape.hpp"

namespace cet {

// Decoder mapping embeddings back to covariate space. Two dense layers with
// relu between, hidden width d_model. Checkpoint keys "dec.*".
struct DecoderParams {
    DenseStack net;

    DecoderParams() = default;

    static DecoderParams init(std::size_t d_model, std::size_t d, Rng& rng);

    std::vector<Param*> params() { return net.params(); }
    std::size_t param_count() const { return net.param_count(); }
};

// X_hat from embeddings: n x d_model -> n x d.
Tape::Id reconstruct(Tape& t, Tape::Id x_e, DecoderParams& params);

// Squared Frobenius norm of (X - X_hat), divided by n so the weight on this
// term means the same thing at any batch size.
Tape::Id reco_loss(Tape& t, Tape::Id x_hat, const Tensor& x);

} // namespace cet
