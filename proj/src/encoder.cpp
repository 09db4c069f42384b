#include "cet/encoder.hpp"

#include <cmath>

#include "cet/errors.hpp"

namespace cet {

void EncoderConfig::validate() const {
    if (n_heads < 1 || d_model < 1 || d_k < 1 || d_ff < 1)
        throw ConfigError("encoder sizes must be at least 1");
    if (n_heads * d_k != d_model)
        throw ConfigError("encoder requires n_heads * d_k == d_model, got " +
                          std::to_string(n_heads) + " * " + std::to_string(d_k) +
                          " != " + std::to_string(d_model));
}

EncoderParams EncoderParams::init(std::size_t d, const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    if (d < 1) throw ConfigError("encoder needs at least one covariate");
    EncoderParams p;
    p.d = d;
    p.config = cfg;
    p.value_emb = Param("enc.value_emb", glorot(d, cfg.d_model, rng));
    p.id_emb = Param("enc.id_emb", glorot(d, cfg.d_model, rng));
    if (cfg.pooling == Pooling::ClsToken)
        p.cls = Param("enc.cls", glorot(1, cfg.d_model, rng));
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
        const std::string pre = "enc.block" + std::to_string(b);
        Block blk;
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::string hp = pre + ".h" + std::to_string(h);
            blk.wq.emplace_back(hp + ".wq", glorot(cfg.d_model, cfg.d_k, rng));
            blk.wk.emplace_back(hp + ".wk", glorot(cfg.d_model, cfg.d_k, rng));
            blk.wv.emplace_back(hp + ".wv", glorot(cfg.d_model, cfg.d_k, rng));
        }
        blk.wo = Param(pre + ".wo", glorot(cfg.d_model, cfg.d_model, rng));
        blk.ln1_gain = Param(pre + ".ln1.gain", Tensor({cfg.d_model}));
        blk.ln1_gain.value.fill(1);
        blk.ln1_shift = Param(pre + ".ln1.shift", Tensor({cfg.d_model}));
        blk.ff1_w = Param(pre + ".ff1.w", glorot(cfg.d_model, cfg.d_ff, rng));
        blk.ff1_b = Param(pre + ".ff1.b", Tensor({cfg.d_ff}));
        blk.ff2_w = Param(pre + ".ff2.w", glorot(cfg.d_ff, cfg.d_model, rng));
        blk.ff2_b = Param(pre + ".ff2.b", Tensor({cfg.d_model}));
        blk.ln2_gain = Param(pre + ".ln2.gain", Tensor({cfg.d_model}));
        blk.ln2_gain.value.fill(1);
        blk.ln2_shift = Param(pre + ".ln2.shift", Tensor({cfg.d_model}));
        p.blocks.push_back(std::move(blk));
    }
    return p;
}

std::vector<Param*> EncoderParams::params() {
    std::vector<Param*> out{&value_emb, &id_emb};
    if (cls) out.push_back(&*cls);
    for (Block& b : blocks) {
        for (Param& p : b.wq) out.push_back(&p);
        for (Param& p : b.wk) out.push_back(&p);
        for (Param& p : b.wv) out.push_back(&p);
        out.push_back(&b.wo);
        out.push_back(&b.ln1_gain);
        out.push_back(&b.ln1_shift);
        out.push_back(&b.ff1_w);
        out.push_back(&b.ff1_b);
        out.push_back(&b.ff2_w);
        out.push_back(&b.ff2_b);
        out.push_back(&b.ln2_gain);
        out.push_back(&b.ln2_shift);
    }
    return out;
}

std::size_t EncoderParams::param_count() const {
    std::size_t n = 0;
    // params() is non-const only because Tape::param binds mutable Params
    for (const Param* p : const_cast<EncoderParams*>(this)->params()) n += p->value.size();
    return n;
}

TensorMap EncoderParams::to_tensors() const {
    TensorMap map;
    for (const Param* p : const_cast<EncoderParams*>(this)->params()) map.emplace(p->name, p->value);
    return map;
}

void EncoderParams::load_tensors(const TensorMap& map) {
    for (Param* p : params()) {
        auto it = map.find(p->name);
        if (it == map.end()) throw ParseError("checkpoint missing key " + p->name);
        if (!it->second.same_shape(p->value))
            throw ShapeError("checkpoint key " + p->name + " has shape " +
                             it->second.shape_str() + ", expected " + p->value.shape_str());
        p->value = it->second;
    }
}

Tape::Id tokenize(Tape& t, const Tensor& x_batch, EncoderParams& params) {
    if (x_batch.rank() != 2 || x_batch.cols() != params.d)
        throw ShapeError("tokenize: covariates " + x_batch.shape_str() + " vs d=" +
                         std::to_string(params.d));
    const std::size_t n = x_batch.rows();
    std::vector<real> xflat(x_batch.vec());
    Tape::Id scaled = t.row_scale(t.tile_rows(t.param(params.value_emb), n), std::move(xflat));
    Tape::Id tokens = t.add(scaled, t.tile_rows(t.param(params.id_emb), n));
    if (params.config.pooling == Pooling::ClsToken)
        tokens = t.prepend_group_head(tokens, t.param(*params.cls), params.d);
    return tokens;
}

Tape::Id attention(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v, std::size_t d_k) {
    if (d_k == 0) throw ConfigError("attention: d_k must be positive");
    Tape::Id logits = t.scale(t.matmul_nt(q, k), real(1) / static_cast<real>(std::sqrt(double(d_k))));
    return t.matmul(t.softmax_rows(logits), v);
}

namespace {

void check_block_finite(const Tensor& v, std::size_t block) {
    if (!v.all_finite())
        throw NumericError("non-finite activation in encoder block " + std::to_string(block));
}

} // namespace

Tape::Id encode(Tape& t, const Tensor& x_batch, EncoderParams& params) {
    const std::size_t n = x_batch.rows();
    const std::size_t s = params.config.tokens_per_unit(params.d);
    const std::size_t dk = params.config.d_k;

    Tape::Id tokens = tokenize(t, x_batch, params);
    for (std::size_t bi = 0; bi < params.blocks.size(); ++bi) {
        EncoderParams::Block& blk = params.blocks[bi];
        // Per-head projections over all units at once; attention per unit.
        std::vector<Tape::Id> head_outs;
        for (std::size_t h = 0; h < params.config.n_heads; ++h) {
            Tape::Id qa = t.matmul(tokens, t.param(blk.wq[h]));
            Tape::Id ka = t.matmul(tokens, t.param(blk.wk[h]));
            Tape::Id va = t.matmul(tokens, t.param(blk.wv[h]));
            std::vector<Tape::Id> per_unit;
            per_unit.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                Tape::Id qi = t.slice_rows(qa, i * s, s);
                Tape::Id ki = t.slice_rows(ka, i * s, s);
                Tape::Id vi = t.slice_rows(va, i * s, s);
                per_unit.push_back(attention(t, qi, ki, vi, dk));
            }
            head_outs.push_back(t.concat_rows(per_unit));
        }
        Tape::Id multi = head_outs.size() == 1 ? head_outs[0] : t.concat_cols(head_outs);
        Tape::Id attn_out = t.matmul(multi, t.param(blk.wo));
        Tape::Id res1 = t.layer_norm(t.add(tokens, attn_out), t.param(blk.ln1_gain),
                                     t.param(blk.ln1_shift));
        Tape::Id ff = t.add(t.matmul(t.relu(t.add(t.matmul(res1, t.param(blk.ff1_w)),
                                                  t.param(blk.ff1_b))),
                                     t.param(blk.ff2_w)),
                            t.param(blk.ff2_b));
        tokens = t.layer_norm(t.add(res1, ff), t.param(blk.ln2_gain), t.param(blk.ln2_shift));
        check_block_finite(t.val(tokens), bi);
    }
    return params.config.pooling == Pooling::ClsToken ? t.group_head_rows(tokens, s)
                                                      : t.group_mean_rows(tokens, s);
}

Tensor encode_inference(const Tensor& x_batch, EncoderParams& params, std::size_t chunk) {
    const std::size_t n = x_batch.rows(), d = x_batch.cols();
    Tensor out({n, params.config.d_model});
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t len = std::min(chunk, n - start);
        Tensor part({len, d});
        std::copy(x_batch.data() + start * d, x_batch.data() + (start + len) * d, part.data());
        Tape t(false);
        const Tensor& e = t.val(encode(t, part, params));
        std::copy(e.data(), e.data() + e.size(), out.data() + start * params.config.d_model);
    }
    return out;
}

} // namespace cet
