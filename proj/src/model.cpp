#include "cet/model.hpp"

#include <cmath>

#include "cet/errors.hpp"

namespace cet {

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoTransformer: return "no_transformer";
        case Ablation::NoDiscriminator: return "no_discriminator";
    }
    return "full";
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "no_transformer") return Ablation::NoTransformer;
    if (name == "no_discriminator") return Ablation::NoDiscriminator;
    throw ConfigError("unknown ablation '" + name +
                      "' (use full, no_transformer or no_discriminator)");
}

Model Model::init(std::size_t d, const ModelConfig& cfg, Rng& rng) {
    cfg.encoder.validate();
    if (d < 1) throw ConfigError("model needs at least one covariate");
    Model m;
    m.d = d;
    m.cfg = cfg;
    const std::size_t dm = cfg.encoder.d_model;
    if (cfg.ablation == Ablation::NoTransformer) {
        // Match the transformer's parameter count with one hidden layer so
        // the comparison isolates the architecture, not the capacity.
        Rng scratch(12345);
        const std::size_t target = EncoderParams::init(d, cfg.encoder, scratch).param_count();
        const double per_h = static_cast<double>(d + 1 + dm);
        const auto h = static_cast<std::size_t>(
            std::llround((static_cast<double>(target) - static_cast<double>(dm)) / per_h));
        m.dense_hidden = h < 1 ? 1 : h;
        m.dense_enc = DenseStack("enc", {d, m.dense_hidden, dm}, rng);
    } else {
        m.encoder = EncoderParams::init(d, cfg.encoder, rng);
    }
    m.decoder = DecoderParams::init(dm, d, rng);
    m.critic = CriticParams::init(dm, cfg.critic_hidden, cfg.clip, rng);
    m.heads = HeadParams::init(dm, dm, rng);
    return m;
}

Tensor Model::scale_x(const Tensor& x_raw) const {
    if (!standardize_x) return x_raw;
    if (x_raw.cols() != x_std.mean.size())
        throw ShapeError("scale_x: " + std::to_string(x_raw.cols()) + " columns vs " +
                         std::to_string(x_std.mean.size()) + " fitted features");
    Tensor out = x_raw;
    const std::size_t n = out.rows(), dd = out.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dd; ++j)
            out.at(i, j) = (out.at(i, j) - x_std.mean[j]) / x_std.sd[j];
    return out;
}

Tape::Id Model::embed(Tape& t, const Tensor& x_raw) {
    Tensor xs = scale_x(x_raw);
    if (cfg.ablation == Ablation::NoTransformer)
        return dense_enc.forward(t, t.constant(std::move(xs)));
    return encode(t, xs, encoder);
}

Tensor Model::embed_inference(const Tensor& x_raw, std::size_t chunk) {
    Tensor xs = scale_x(x_raw);
    if (cfg.ablation == Ablation::NoTransformer) {
        Tape t(false);
        return t.val(dense_enc.forward(t, t.constant(std::move(xs))));
    }
    return encode_inference(xs, encoder, chunk);
}

std::pair<std::vector<real>, std::vector<real>> Model::predict(const Tensor& x_raw) {
    Tensor z = embed_inference(x_raw);
    Tape t(false);
    Tape::Id zc = t.constant(std::move(z));
    auto [id0, id1] = predict_potential(t, zc, heads);
    const Tensor& p0 = t.val(id0);
    const Tensor& p1 = t.val(id1);
    const std::size_t n = p0.rows();
    std::vector<real> y0(n), y1(n);
    for (std::size_t i = 0; i < n; ++i) {
        y0[i] = p0[i] * y_sd + y_mean;
        y1[i] = p1[i] * y_sd + y_mean;
    }
    return {std::move(y0), std::move(y1)};
}

std::size_t Model::embed_param_count() const {
    return cfg.ablation == Ablation::NoTransformer ? dense_enc.param_count()
                                                   : encoder.param_count();
}

std::vector<Param*> Model::generator_params() {
    std::vector<Param*> out = cfg.ablation == Ablation::NoTransformer ? dense_enc.params()
                                                                      : encoder.params();
    for (Param* p : decoder.params()) out.push_back(p);
    for (Param* p : heads.params()) out.push_back(p);
    return out;
}

std::vector<Param*> Model::all_params() {
    std::vector<Param*> out = generator_params();
    for (Param* p : critic.params()) out.push_back(p);
    return out;
}

TensorMap Model::to_tensors() {
    TensorMap map;
    for (Param* p : all_params()) map.emplace(p->name, p->value);
    map.emplace("meta.format", Tensor::scalar(1));
    map.emplace("meta.d", Tensor::scalar(static_cast<real>(d)));
    map.emplace("meta.ablation", Tensor::scalar(static_cast<real>(static_cast<int>(cfg.ablation))));
    map.emplace("meta.enc.n_blocks", Tensor::scalar(static_cast<real>(cfg.encoder.n_blocks)));
    map.emplace("meta.enc.n_heads", Tensor::scalar(static_cast<real>(cfg.encoder.n_heads)));
    map.emplace("meta.enc.d_model", Tensor::scalar(static_cast<real>(cfg.encoder.d_model)));
    map.emplace("meta.enc.d_k", Tensor::scalar(static_cast<real>(cfg.encoder.d_k)));
    map.emplace("meta.enc.d_ff", Tensor::scalar(static_cast<real>(cfg.encoder.d_ff)));
    map.emplace("meta.enc.pooling",
                Tensor::scalar(cfg.encoder.pooling == Pooling::ClsToken ? 1 : 0));
    map.emplace("meta.critic_hidden", Tensor::scalar(static_cast<real>(cfg.critic_hidden)));
    map.emplace("meta.clip", Tensor::scalar(cfg.clip));
    map.emplace("meta.standardize_x", Tensor::scalar(standardize_x ? 1 : 0));
    if (standardize_x) {
        map.emplace("meta.x_mean", Tensor::vector(x_std.mean));
        map.emplace("meta.x_sd", Tensor::vector(x_std.sd));
    }
    map.emplace("meta.y_mean", Tensor::scalar(y_mean));
    map.emplace("meta.y_sd", Tensor::scalar(y_sd));
    return map;
}

void Model::load_params(const TensorMap& map) {
    for (Param* p : all_params()) {
        auto it = map.find(p->name);
        if (it == map.end()) throw ParseError("checkpoint missing key " + p->name);
        if (!it->second.same_shape(p->value))
            throw ShapeError("checkpoint key " + p->name + " has shape " +
                             it->second.shape_str() + ", expected " + p->value.shape_str());
        p->value = it->second;
    }
}

namespace {

real meta_scalar(const TensorMap& map, const std::string& key) {
    auto it = map.find(key);
    if (it == map.end()) throw ParseError("checkpoint missing key " + key);
    if (it->second.size() != 1)
        throw ParseError("checkpoint key " + key + " is not a scalar");
    return it->second[0];
}

std::size_t meta_count(const TensorMap& map, const std::string& key) {
    const real v = meta_scalar(map, key);
    if (v < 0 || v != std::floor(v))
        throw ParseError("checkpoint key " + key + " is not a count");
    return static_cast<std::size_t>(v);
}

} // namespace

Model Model::from_tensors(const TensorMap& map) {
    if (meta_count(map, "meta.format") != 1)
        throw ParseError("unsupported checkpoint format version");
    ModelConfig cfg;
    cfg.encoder.n_blocks = meta_count(map, "meta.enc.n_blocks");
    cfg.encoder.n_heads = meta_count(map, "meta.enc.n_heads");
    cfg.encoder.d_model = meta_count(map, "meta.enc.d_model");
    cfg.encoder.d_k = meta_count(map, "meta.enc.d_k");
    cfg.encoder.d_ff = meta_count(map, "meta.enc.d_ff");
    cfg.encoder.pooling = meta_count(map, "meta.enc.pooling") == 1 ? Pooling::ClsToken
                                                                   : Pooling::Mean;
    cfg.critic_hidden = meta_count(map, "meta.critic_hidden");
    cfg.clip = meta_scalar(map, "meta.clip");
    const std::size_t abl = meta_count(map, "meta.ablation");
    if (abl > 2) throw ParseError("checkpoint has unknown ablation id");
    cfg.ablation = static_cast<Ablation>(abl);

    Rng scratch(0);
    Model m = init(meta_count(map, "meta.d"), cfg, scratch);
    m.standardize_x = meta_count(map, "meta.standardize_x") == 1;
    if (m.standardize_x) {
        auto mean_it = map.find("meta.x_mean");
        auto sd_it = map.find("meta.x_sd");
        if (mean_it == map.end() || sd_it == map.end())
            throw ParseError("checkpoint missing covariate scaling vectors");
        m.x_std.mean = mean_it->second.vec();
        m.x_std.sd = sd_it->second.vec();
        if (m.x_std.mean.size() != m.d || m.x_std.sd.size() != m.d)
            throw ParseError("checkpoint scaling vectors do not match d");
    }
    m.y_mean = meta_scalar(map, "meta.y_mean");
    m.y_sd = meta_scalar(map, "meta.y_sd");
    m.load_params(map);
    return m;
}

void Model::save(const std::string& path) { save_checkpoint(path, to_tensors()); }

Model Model::load(const std::string& path) { return from_tensors(load_checkpoint(path)); }

} // namespace cet
