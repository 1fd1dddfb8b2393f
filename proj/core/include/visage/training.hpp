#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "visage/checkpoint.hpp"
#include "visage/config.hpp"
#include "visage/manifest.hpp"
#include "visage/model.hpp"

namespace visage {

// One optimization stage.  Stage 1 trains the LQ branch (including all its
// zero projections); stage 2 trains the reference branch, the latent fusion
// and the identity projection, optionally unfreezing the LQ branch too.
struct StageConfig {
    int stage = 1;
    double lr = 1e-5;
    int batch_size = 4;
    int max_steps = 0;
    double negative_mix_ratio = 0.1;
    double prompt_dropout_p = 0.1;
    bool train_lca_in_stage2 = false;
    int checkpoint_every = 0;  // 0 = final checkpoint only
    std::uint64_t seed = 0;

    void validate() const;
    static StageConfig from_config(const Config& cfg, int stage);
    std::vector<std::string> trainable_groups() const;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_log_path;
    std::uint64_t steps_run = 0;
    double final_loss = 0.0;
};

// Noise-prediction training over synthesized sample records (plus an optional
// pool of negative-quality records that are mixed in and trained against the
// degraded-quality prompt).  Deterministic given (config, seed, data): every
// step derives its own RNG stream, so a resumed run continues the exact
// sequence of an uninterrupted one.
//
// - paths inside records resolve against data_root;
// - checkpoints and the loss log land in out_dir;
// - resume_from, when nonempty, restores parameters, optimizer state and the
//   step counter before continuing;
// - a non-finite loss aborts with a diagnostics snapshot in out_dir.
TrainResult train_stage1(ModelBundle& model, const StageConfig& sc,
                         const std::vector<SampleRecord>& samples,
                         const std::vector<NegativeQualityRecord>& negatives,
                         const std::string& data_root, const std::string& out_dir,
                         const std::string& resume_from = "");

// Stage 2 additionally requires every sample to carry a reference image and
// starts from a loaded stage-1 checkpoint (unless resuming a stage-2 run).
TrainResult train_stage2(ModelBundle& model, const StageConfig& sc,
                         const std::vector<SampleRecord>& samples,
                         const std::vector<NegativeQualityRecord>& negatives,
                         const std::string& data_root, const std::string& stage1_ckpt,
                         const std::string& out_dir, const std::string& resume_from = "");

// One Adam update over all trainable parameters with populated gradients.
void adam_step(nn::ParamRegistry& params, OptimState& opt, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// L2 norm of gradients across trainable parameters (0 when none populated).
double trainable_grad_norm(const nn::ParamRegistry& params);

}  // namespace visage
