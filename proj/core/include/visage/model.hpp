#pragma once

#include <memory>
#include <optional>
#include <string>

#include "visage/adapters.hpp"
#include "visage/backbone.hpp"
#include "visage/codec.hpp"
#include "visage/conditioning.hpp"
#include "visage/config.hpp"
#include "visage/diffusion.hpp"

namespace visage {

// Reference-side inputs for a guided prediction, already in latent space.
struct ControlContext {
    Tensor z_lq;
    std::optional<Tensor> z_ref;
    std::optional<Tensor> id_raw;
};

// Everything needed to run or train the guided restorer: the frozen trunk,
// both control branches, fusion, identity projection, codec, schedule and the
// toy text/identity encoders, all parameterized through one registry.
//
// All modules are always constructed (so parameter sets are identical across
// toggle configurations); the adapter flags control which paths execute.
struct ModelBundle {
    Config config;
    BackboneConfig backbone_cfg;
    AdapterConfig adapter_cfg;
    NoiseSchedule schedule;
    GuidanceWeights guidance;
    LatentCodec codec;
    ToyTextEncoder text;
    ToyIdentityEmbedder identity;
    nn::ParamRegistry params;
    std::unique_ptr<Backbone> backbone;
    std::unique_ptr<LqControlAdapter> lca;
    std::unique_ptr<RefControlAdapter> rca;
    std::unique_ptr<RefLqFusion> rlf;
    std::unique_ptr<IdentityProjection> id_proj;

    static ModelBundle build(const Config& cfg);

    // Prompt text -> token matrix wrapped as a graph constant.
    nn::Var prompt_tokens(const std::string& prompt) const;

    // One full guided prediction for a single prompt: trunk encode, control
    // residuals from the adapters, trunk decode.  Differentiable; callers
    // doing inference should hold a NoGradGuard.
    nn::Var predict(const nn::Var& z_t, int t, const nn::Var& tokens,
                    const ControlContext* ctrl) const;

    // Non-graph convenience for samplers: evaluates under a no-grad guard.
    Tensor predict_eps(const Tensor& z_t, int t, const nn::Var& tokens,
                       const ControlContext* ctrl) const;
};

}  // namespace visage
