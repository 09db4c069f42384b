#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/metrics.hpp"
#include "cet/model.hpp"

namespace cet {

// Everything one training run depends on. validate() rejects impossible
// combinations; snapshot() flattens the resolved values for manifests.
struct TrainConfig {
    real alpha = 1;                 // reconstruction weight
    real beta = 1;                  // adversarial weight
    real gamma = 1;                 // factual-outcome weight

    std::size_t epochs = 60;
    std::size_t batch = 64;
    real lr = real(1e-3);           // Adam, embedding net + decoder + heads
    real critic_lr = real(5e-5);    // RMSProp, critic
    std::size_t n_critic = 5;       // critic steps per joint step
    real clip = real(0.01);
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::Full;
    std::size_t patience = 20;      // early-stop epochs without validation improvement
    AdvFlow adv_flow = AdvFlow::Both;
    std::size_t warmup = 5;         // reconstruction-only epochs before the adversary starts

    EncoderConfig encoder;
    std::size_t critic_hidden = 32;
    bool standardize_x = true;
    bool standardize_y = true;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> snapshot() const;
};

struct TrainTrace {
    struct Row {
        std::size_t epoch = 0;      // 1-based
        real l_reco = 0;
        real l_p = 0;
        real wass = 0;              // mean per-batch Wasserstein estimate (0 before warmup ends)
        real group_kl = 0;          // KL(treated || control) on train embeddings
        real val_mse = 0;           // factual MSE on the validation split, original units
    };
    std::vector<Row> rows;

    std::string to_csv() const;     // header + %.17g values, byte-stable per run
};

struct TrainResult {
    Model model;                    // best-validation parameters
    TrainTrace trace;
    real best_val_mse = 0;
    std::size_t best_epoch = 0;     // 1-based
};

// Joint optimization: per stratified minibatch, n_critic clipped critic
// updates followed by one Adam step on alpha*L_reco + beta*balance + gamma*L_p.
// The first `warmup` epochs train reconstruction only. Deterministic given
// (ds, sp, cfg).
TrainResult train(const Dataset& ds, const SplitIndices& sp, const TrainConfig& cfg);

// Metrics of a trained model on the given rows.
EvalReport evaluate(Model& model, const Dataset& ds, const std::vector<std::size_t>& rows,
                    const std::string& split_name);

struct AblationRun {
    std::string name;
    EvalReport in_sample;           // train split
    EvalReport out_sample;          // test split
    TrainTrace trace;
};

// Trains full / no_transformer / no_discriminator on identical splits and
// the same seed, changing nothing else.
std::array<AblationRun, 3> ablate(const Dataset& ds, const SplitIndices& sp,
                                  const TrainConfig& cfg);

} // namespace cet
