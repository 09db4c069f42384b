#include "cet/reconstruction.hpp"

#include "cet/errors.hpp"

namespace cet {

DecoderParams DecoderParams::init(std::size_t d_model, std::size_t d, Rng& rng) {
    if (d_model < 1 || d < 1) throw ConfigError("decoder sizes must be at least 1");
    DecoderParams p;
    p.net = DenseStack("dec", {d_model, d_model, d}, rng);
    return p;
}

Tape::Id reconstruct(Tape& t, Tape::Id x_e, DecoderParams& params) {
    return params.net.forward(t, x_e);
}

Tape::Id reco_loss(Tape& t, Tape::Id x_hat, const Tensor& x) {
    const Tensor& xh = t.val(x_hat);
    if (!xh.same_shape(x) && !(xh.rows() == x.rows() && xh.cols() == x.cols()))
        throw ShapeError("reco_loss: " + xh.shape_str() + " vs " + x.shape_str());
    const std::size_t n = x.rows();
    Tape::Id diff = t.sub(x_hat, t.constant(x));
    return t.scale(t.sum(t.mul(diff, diff)), real(1) / static_cast<real>(n));
}

} // namespace cet
