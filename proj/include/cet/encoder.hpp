#pragma once

#include <optional>
#include <vector>

#include "cet/checkpoint.hpp"
#include "cet/nn.hpp"
#include "cet/rng.hpp"
#include "cet/tape.hpp"

namespace cet {

enum class Pooling { Mean, ClsToken };

struct EncoderConfig {
    std::size_t n_blocks = 2;
    std::size_t n_heads = 2;
    std::size_t d_model = 32;
    std::size_t d_k = 16;      // per-head key dim; n_heads * d_k must equal d_model
    std::size_t d_ff = 64;
    Pooling pooling = Pooling::Mean;

    void validate() const;
    std::size_t tokens_per_unit(std::size_t d) const {
        return d + (pooling == Pooling::ClsToken ? 1 : 0);
    }
};

// Transformer parameters. Covariates become tokens: token j of a unit is
// x_j * value_emb[j] + id_emb[j], so the per-block self-attention matrix is
// a feature-by-feature map within one unit (never across units).
struct EncoderParams {
    std::size_t d = 0;          // covariate count the embeddings were built for
    EncoderConfig config;

    Param value_emb;            // d x d_model
    Param id_emb;               // d x d_model
    std::optional<Param> cls;   // 1 x d_model, when pooling = ClsToken

    struct Block {
        std::vector<Param> wq, wk, wv;  // per head, d_model x d_k
        Param wo;                       // d_model x d_model
        Param ln1_gain, ln1_shift;
        Param ff1_w, ff1_b;             // d_model -> d_ff
        Param ff2_w, ff2_b;             // d_ff -> d_model
        Param ln2_gain, ln2_shift;
    };
    std::vector<Block> blocks;

    static EncoderParams init(std::size_t d, const EncoderConfig& cfg, Rng& rng);

    std::vector<Param*> params();
    std::size_t param_count() const;
    TensorMap to_tensors() const;
    void load_tensors(const TensorMap& map);
};

// Token matrix for a batch: (n * s) x d_model with s tokens per unit
// (covariate tokens plus the optional cls token at the head of each group).
Tape::Id tokenize(Tape& t, const Tensor& x_batch, EncoderParams& params);

// softmax(Q K^T / sqrt(d_k)) V for one unit's token block.
Tape::Id attention(Tape& t, Tape::Id q, Tape::Id k, Tape::Id v, std::size_t d_k);

// Full encoder: tokens -> n_blocks x (multi-head attention + residual +
// layer norm, feed-forward + residual + layer norm) -> pooled n x d_model.
Tape::Id encode(Tape& t, const Tensor& x_batch, EncoderParams& params);

// Value-only batched encode, chunked to bound tape memory.
Tensor encode_inference(const Tensor& x_batch, EncoderParams& params,
                        std::size_t chunk = 256);

} // namespace cet
