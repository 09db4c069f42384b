#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cet/adversary.hpp"
#include "cet/checkpoint.hpp"
#include "cet/dataset.hpp"
#include "cet/encoder.hpp"
#include "cet/outcome.hpp"
#include "cet/reconstruction.hpp"
#include "cet/tape.hpp"

namespace cet {

enum class Ablation { Full, NoTransformer, NoDiscriminator };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t critic_hidden = 32;
    real clip = real(0.01);
    Ablation ablation = Ablation::Full;
};

// The assembled pipeline: embedding network (transformer, or a dense stack
// of matched parameter count for the no_transformer ablation), decoder,
// critic, and the two outcome branches, plus the input/output scaling
// fitted at training time. Checkpoints carry everything needed to rebuild.
struct Model {
    std::size_t d = 0;
    ModelConfig cfg;

    EncoderParams encoder;      // used unless ablation == NoTransformer
    DenseStack dense_enc;       // the matched-size fallback embedding net
    std::size_t dense_hidden = 0;

    DecoderParams decoder;
    CriticParams critic;
    HeadParams heads;

    bool standardize_x = false;
    StandardizeParams x_std;
    real y_mean = 0;
    real y_sd = 1;

    static Model init(std::size_t d, const ModelConfig& cfg, Rng& rng);

    // Applies the stored covariate scaling (identity when unset).
    Tensor scale_x(const Tensor& x_raw) const;

    // Embedding of a raw-covariate batch, n x d_model.
    Tape::Id embed(Tape& t, const Tensor& x_raw);
    Tensor embed_inference(const Tensor& x_raw, std::size_t chunk = 256);

    // Potential-outcome predictions in original outcome units.
    std::pair<std::vector<real>, std::vector<real>> predict(const Tensor& x_raw);

    std::size_t embed_param_count() const;

    std::vector<Param*> generator_params();   // embedding net + decoder + heads
    std::vector<Param*> all_params();

    TensorMap to_tensors();                   // parameters plus meta.* entries
    void load_params(const TensorMap& map);   // parameters only (meta ignored)
    static Model from_tensors(const TensorMap& map);

    void save(const std::string& path);
    static Model load(const std::string& path);
};

} // namespace cet
