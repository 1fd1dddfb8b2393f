#pragma once

#include <memory>
#include <string>
#include <vector>

#include "visage/autodiff.hpp"
#include "visage/blocks.hpp"
#include "visage/config.hpp"

namespace visage {

// Topology of the denoiser trunk.  The adapters replicate the encoder side of
// this exact shape, so they take the same struct.
struct BackboneConfig {
    int latent_channels = 48;
    int base_channels = 16;
    std::vector<int> scale_multipliers{1, 2};  // channel multiplier per scale
    int text_dim = 64;
    int time_dim = 64;
    // One flag per scale; empty means "attention at the two coarsest scales".
    std::vector<bool> cross_attention;

    int scales() const { return static_cast<int>(scale_multipliers.size()); }
    int channels_at(int s) const { return base_channels * scale_multipliers.at(s); }
    bool attention_at(int s) const;
    void validate() const;
    static BackboneConfig from_config(const Config& cfg, const std::string& prefix = "backbone");
};

// Features the control branches read and write.  `scales[s]` lives at
// resolution H/2^s with channels_at(s) channels; `mid` matches the coarsest
// scale.  The same shape contract serves both encoder taps and the control
// residuals fed back into the decoder.
struct FeaturePyramid {
    std::vector<nn::Var> scales;
    nn::Var mid;
};
using ControlResiduals = FeaturePyramid;

// Frozen latent-space noise predictor: a small U-Net with timestep and text
// conditioning.  The forward pass is split so control branches can consume
// the encoder taps before the decoder runs.
class Backbone {
public:
    Backbone(const BackboneConfig& config, nn::ParamRegistry& reg, const std::string& prefix,
             Rng& rng);

    struct Encoded {
        FeaturePyramid taps;    // per-scale block outputs + mid output
        nn::Var t_emb;
        nn::Var text_tokens;
        nn::Var pooled_text;
    };

    // z_t: [latent_channels, H, W]; text_tokens: [context, text_dim].
    Encoded encode(const nn::Var& z_t, int t, const nn::Var& text_tokens) const;

    // Decoder over the encoded state; `control` residuals (if any) are added
    // to the skip features and, when present, to the mid feature.
    nn::Var decode(const Encoded& enc, const ControlResiduals* control) const;

    // Convenience single call: returns the noise estimate and exposes taps.
    nn::Var forward(const nn::Var& z_t, int t, const nn::Var& text_tokens,
                    const ControlResiduals* control = nullptr,
                    FeaturePyramid* taps_out = nullptr) const;

    void set_frozen(nn::ParamRegistry& reg, bool frozen);
    bool frozen() const { return frozen_; }
    const BackboneConfig& config() const { return config_; }
    const std::string& prefix() const { return prefix_; }

private:
    BackboneConfig config_;
    std::string prefix_;
    bool frozen_ = false;

    nn::TimeEmbedding time_;
    nn::Conv3x3 stem_;
    std::vector<nn::ResBlock> enc_res_;
    std::vector<nn::CondBlock> enc_cond_;
    std::vector<nn::Downsample> enc_down_;
    nn::ResBlock mid_res_;
    nn::CondBlock mid_cond_;
    std::vector<nn::ResBlock> dec_res_;   // index s, consumes concat(skip, x)
    std::vector<nn::CondBlock> dec_cond_;
    std::vector<nn::Upsample> dec_up_;    // up from scale s to s-1
    nn::Var head_gn_g_, head_gn_b_;
    nn::Var head_w_, head_b_;
};

}  // namespace visage
