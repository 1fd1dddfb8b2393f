#pragma once

#include <optional>
#include <string>
#include <vector>

#include "visage/backbone.hpp"

namespace visage {

// Toggles for the control branches.  Topology is shared with the paired
// BackboneConfig, so adapters are constructed from both.
struct AdapterConfig {
    bool enable_encoder_taps = true;  // trunk-encoder features feed the LQ branch
    bool enable_rca = true;           // reference branch machinery exists
    bool enable_lr_exchange = true;   // two-way exchange between the branches
    bool inject_mid = true;           // emit a control residual for the trunk mid site
    bool rca_text = false;            // prompt tokens also feed the reference branch
    int identity_dim = 192;

    // Disabling the reference branch leaves nothing to exchange with.
    void normalize();
    static AdapterConfig from_config(const Config& cfg, const std::string& prefix = "adapters");
};

// LQ control branch: a copy of the trunk encoder + mid that conditions on the
// noisy latent plus a zero-projected embedding of the LQ latent, absorbs
// trunk encoder taps and (optionally) reference-branch emissions, and turns
// every block output into a zero-projected decoder residual.
class LqControlAdapter {
public:
    LqControlAdapter(const BackboneConfig& topo, const AdapterConfig& cfg,
                     nn::ParamRegistry& reg, const std::string& prefix, Rng& rng);

    struct Result {
        ControlResiduals residuals;
        std::vector<nn::Var> intermediates;  // per-scale block outputs handed onward
    };

    // taps: trunk encoder features (ignored when taps are disabled; required
    // otherwise).  rca_in: reference-branch emissions, entry s consumed by
    // block s+1 (the last one by the mid block); only legal with the
    // exchange enabled.
    Result forward(const nn::Var& z_t, const nn::Var& z_lq, const nn::Var& text_tokens, int t,
                   const FeaturePyramid* taps, const std::vector<nn::Var>* rca_in) const;

    // Block-level pieces used by the dual-branch driver.
    nn::Var embed_time(int t) const;
    nn::Var stem(const nn::Var& z_t, const nn::Var& z_lq) const;
    nn::Var run_block(int s, const nn::Var& x, const nn::Var& t_emb, const nn::Var& tokens,
                      const nn::Var& pooled) const;
    nn::Var down(int s, const nn::Var& x) const;
    nn::Var run_mid(const nn::Var& x, const nn::Var& t_emb, const nn::Var& tokens,
                    const nn::Var& pooled) const;
    nn::Var residual_at(int s, const nn::Var& x) const;  // s == scales() selects the mid site
    nn::Var apply_tap(int s, const nn::Var& x, const FeaturePyramid* taps) const;

    const BackboneConfig& topology() const { return topo_; }
    const AdapterConfig& options() const { return cfg_; }

private:
    BackboneConfig topo_;
    AdapterConfig cfg_;
    nn::TimeEmbedding time_;
    nn::Conv3x3 stem_;
    nn::Conv3x3 lq_embed_;
    nn::ZeroConv lq_zero_;
    std::vector<nn::ResBlock> res_;
    std::vector<nn::CondBlock> cond_;
    std::vector<nn::Downsample> down_;
    nn::ResBlock mid_res_;
    nn::CondBlock mid_cond_;
    std::vector<nn::ZeroConv> out_zero_;  // one per scale + one for mid
};

// Reference control branch: encoder-shaped stack over the fused latent that
// consumes the LQ-branch intermediates and emits zero-projected features for
// the next LQ-branch block.  Identity conditioning joins its timestep path.
class RefControlAdapter {
public:
    RefControlAdapter(const BackboneConfig& topo, const AdapterConfig& cfg,
                      nn::ParamRegistry& reg, const std::string& prefix, Rng& rng);

    // intermediates: one per scale, from the LQ branch.  e_f: projected
    // identity vector added to the timestep embedding (optional).  tokens:
    // prompt tokens, used only when the text flag is on.
    std::vector<nn::Var> forward(const nn::Var& fused, const nn::Var* e_f, int t,
                                 const std::vector<nn::Var>& intermediates,
                                 const nn::Var* tokens = nullptr) const;

    nn::Var embed_time(int t, const nn::Var* e_f) const;
    nn::Var stem(const nn::Var& fused) const;
    nn::Var run_block(int s, const nn::Var& x, const nn::Var& t_emb, const nn::Var& tokens,
                      const nn::Var& pooled) const;
    nn::Var down(int s, const nn::Var& x) const;
    nn::Var emit(int s, const nn::Var& g) const;  // zero-projected, resolution-matched
    // Zero token matrix used when text conditioning of this branch is off.
    nn::Var neutral_tokens() const;

    const BackboneConfig& topology() const { return topo_; }
    const AdapterConfig& options() const { return cfg_; }

private:
    BackboneConfig topo_;
    AdapterConfig cfg_;
    nn::TimeEmbedding time_;
    nn::Conv3x3 stem_;
    std::vector<nn::ResBlock> res_;
    std::vector<nn::CondBlock> cond_;
    std::vector<nn::Downsample> down_;
    std::vector<nn::ZeroConv> emit_zero_;
};

// Fusion of the LQ and reference latents: channel concatenation, a learned
// projection back to latent width, then one (time-free) residual block.
class RefLqFusion {
public:
    RefLqFusion(int latent_channels, nn::ParamRegistry& reg, const std::string& prefix, Rng& rng);
    nn::Var fuse(const nn::Var& z_lq, const nn::Var& z_ref) const;
    int latent_channels() const { return channels_; }

private:
    int channels_;
    nn::Var proj_w_, proj_b_;
    nn::Var gn1_g_, gn1_b_, gn2_g_, gn2_b_;
    nn::Var conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

// Affine map from the raw identity embedding to the adapter conditioning
// width (the timestep-embedding dimension).
class IdentityProjection {
public:
    IdentityProjection(int identity_dim, int cond_dim, nn::ParamRegistry& reg,
                       const std::string& prefix, Rng& rng);
    nn::Var project(const nn::Var& raw) const;
    int identity_dim() const { return identity_dim_; }
    int cond_dim() const { return cond_dim_; }

private:
    int identity_dim_;
    int cond_dim_;
    nn::Var w_, b_;
};

// Full control pass: runs the interleaved two-branch schedule when reference
// inputs are present, and degrades bitwise to the LQ-only pass when they are
// absent.  z_ref and id_raw must be supplied together.
ControlResiduals dual_forward(const LqControlAdapter& lca, const RefControlAdapter& rca,
                              const RefLqFusion& rlf, const IdentityProjection& proj,
                              const nn::Var& z_t, const nn::Var& z_lq, const nn::Var* z_ref,
                              const nn::Var* id_raw, const nn::Var& text_tokens, int t,
                              const FeaturePyramid* taps);

}  // namespace visage
