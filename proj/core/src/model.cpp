#include "visage/model.hpp"

#include "visage/errors.hpp"
#include "visage/rng.hpp"

namespace visage {

using nn::Var;

ModelBundle ModelBundle::build(const Config& cfg) {
    ModelBundle m;
    m.config = cfg;
    m.backbone_cfg = BackboneConfig::from_config(cfg);
    m.adapter_cfg = AdapterConfig::from_config(cfg);
    m.schedule = schedule_from_config(cfg);
    m.guidance = guidance_from_config(cfg);

    const int codec_scale = cfg.get_int("codec.scale", 4);
    m.codec = LatentCodec(codec_scale);
    if (m.codec.latent_channels() != m.backbone_cfg.latent_channels) {
        throw ConfigConflict("model: codec emits " + std::to_string(m.codec.latent_channels()) +
                             " latent channels but the trunk expects " +
                             std::to_string(m.backbone_cfg.latent_channels));
    }

    m.text = ToyTextEncoder(static_cast<std::uint64_t>(cfg.get_int("text.seed", 0)),
                            cfg.get_int("text.context", 16), m.backbone_cfg.text_dim);
    const int id_grid = cfg.get_int("identity.grid", 8);
    m.identity = ToyIdentityEmbedder(id_grid);
    if (m.identity.dim() != m.adapter_cfg.identity_dim) {
        throw ConfigConflict("model: identity embedder width " + std::to_string(m.identity.dim()) +
                             " does not match adapters.identity_dim " +
                             std::to_string(m.adapter_cfg.identity_dim));
    }

    const auto init_seed = static_cast<std::uint64_t>(cfg.get_int("model.init_seed", 0));
    Rng rng_backbone = make_rng(derive_seed(init_seed, 1));
    Rng rng_lca = make_rng(derive_seed(init_seed, 2));
    Rng rng_rca = make_rng(derive_seed(init_seed, 3));
    Rng rng_rlf = make_rng(derive_seed(init_seed, 4));
    Rng rng_proj = make_rng(derive_seed(init_seed, 5));
    m.backbone = std::make_unique<Backbone>(m.backbone_cfg, m.params, "backbone", rng_backbone);
    m.lca = std::make_unique<LqControlAdapter>(m.backbone_cfg, m.adapter_cfg, m.params, "lca",
                                               rng_lca);
    m.rca = std::make_unique<RefControlAdapter>(m.backbone_cfg, m.adapter_cfg, m.params, "rca",
                                                rng_rca);
    m.rlf = std::make_unique<RefLqFusion>(m.backbone_cfg.latent_channels, m.params, "rlf",
                                          rng_rlf);
    m.id_proj = std::make_unique<IdentityProjection>(m.adapter_cfg.identity_dim,
                                                     m.backbone_cfg.time_dim, m.params, "id_proj",
                                                     rng_proj);
    m.backbone->set_frozen(m.params, true);
    return m;
}

Var ModelBundle::prompt_tokens(const std::string& prompt) const {
    return nn::constant(text.encode(prompt));
}

Var ModelBundle::predict(const Var& z_t, int t, const Var& tokens,
                         const ControlContext* ctrl) const {
    Backbone::Encoded enc = backbone->encode(z_t, t, tokens);
    if (!ctrl) return backbone->decode(enc, nullptr);
    Var z_lq = nn::constant(ctrl->z_lq);
    std::optional<Var> z_ref, id_raw;
    if (ctrl->z_ref) z_ref = nn::constant(*ctrl->z_ref);
    if (ctrl->id_raw) id_raw = nn::constant(*ctrl->id_raw);
    ControlResiduals resid = dual_forward(*lca, *rca, *rlf, *id_proj, z_t, z_lq,
                                          z_ref ? &*z_ref : nullptr,
                                          id_raw ? &*id_raw : nullptr, tokens, t,
                                          adapter_cfg.enable_encoder_taps ? &enc.taps : nullptr);
    return backbone->decode(enc, &resid);
}

Tensor ModelBundle::predict_eps(const Tensor& z_t, int t, const Var& tokens,
                                const ControlContext* ctrl) const {
    nn::NoGradGuard guard;
    return predict(nn::constant(z_t), t, tokens, ctrl)->value;
}

}  // namespace visage
