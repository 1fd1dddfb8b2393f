#include "visage/adapters.hpp"

#include "visage/errors.hpp"

namespace visage {

using nn::Var;

void AdapterConfig::normalize() {
    if (!enable_rca) enable_lr_exchange = false;
}

AdapterConfig AdapterConfig::from_config(const Config& cfg, const std::string& prefix) {
    AdapterConfig a;
    a.enable_encoder_taps = cfg.get_bool(prefix + ".enable_encoder_taps", a.enable_encoder_taps);
    a.enable_rca = cfg.get_bool(prefix + ".enable_rca", a.enable_rca);
    a.enable_lr_exchange = cfg.get_bool(prefix + ".enable_lr_exchange", a.enable_lr_exchange);
    a.inject_mid = cfg.get_bool(prefix + ".inject_mid", a.inject_mid);
    a.rca_text = cfg.get_bool(prefix + ".rca_text", a.rca_text);
    a.identity_dim = cfg.get_int(prefix + ".identity_dim", a.identity_dim);
    if (a.identity_dim < 1) throw InvalidArgument("adapters: identity_dim must be positive");
    a.normalize();
    return a;
}

namespace {

void check_taps(const BackboneConfig& topo, const FeaturePyramid& taps) {
    if (static_cast<int>(taps.scales.size()) != topo.scales()) {
        throw InvalidArgument("adapter: tap count " + std::to_string(taps.scales.size()) +
                              " does not match scale count " + std::to_string(topo.scales()));
    }
    for (int s = 0; s < topo.scales(); ++s) {
        if (!taps.scales[s]) throw InvalidArgument("adapter: missing tap at scale " + std::to_string(s));
        if (taps.scales[s]->value.shape[0] != topo.channels_at(s)) {
            throw InvalidArgument("adapter: tap channel mismatch at scale " + std::to_string(s));
        }
    }
}

}  // namespace

LqControlAdapter::LqControlAdapter(const BackboneConfig& topo, const AdapterConfig& cfg,
                                   nn::ParamRegistry& reg, const std::string& prefix, Rng& rng)
    : topo_(topo),
      cfg_(cfg),
      time_(reg, prefix + ".time", topo.time_dim, rng),
      stem_(reg, prefix + ".stem", topo.latent_channels, topo.channels_at(0), rng),
      lq_embed_(reg, prefix + ".lq_embed", topo.latent_channels, topo.channels_at(0), rng),
      lq_zero_(reg, prefix + ".lq_zero", topo.channels_at(0), topo.channels_at(0)),
      mid_res_(reg, prefix + ".mid.res", topo.channels_at(topo.scales() - 1),
               topo.channels_at(topo.scales() - 1), topo.time_dim, rng),
      mid_cond_(reg, prefix + ".mid.cond", topo.channels_at(topo.scales() - 1), topo.text_dim,
                true, rng) {
    topo_.validate();
    cfg_.normalize();
    const int S = topo_.scales();
    for (int s = 0; s < S; ++s) {
        const int cin = s == 0 ? topo_.channels_at(0) : topo_.channels_at(s - 1);
        const int c = topo_.channels_at(s);
        const std::string base = prefix + ".enc" + std::to_string(s);
        res_.emplace_back(reg, base + ".res", cin, c, topo_.time_dim, rng);
        cond_.emplace_back(reg, base + ".cond", c, topo_.text_dim, topo_.attention_at(s), rng);
        if (s + 1 < S) down_.emplace_back(reg, base + ".down", c, rng);
        out_zero_.emplace_back(reg, prefix + ".out" + std::to_string(s), c, c);
    }
    out_zero_.emplace_back(reg, prefix + ".out_mid", topo_.channels_at(S - 1),
                           topo_.channels_at(S - 1));
}

Var LqControlAdapter::embed_time(int t) const { return time_.embed(t); }

Var LqControlAdapter::stem(const Var& z_t, const Var& z_lq) const {
    if (!z_t->value.same_shape(z_lq->value)) {
        throw InvalidArgument("lq adapter: z_t and z_lq shapes differ");
    }
    return nn::add(stem_.forward(z_t), lq_zero_.forward(lq_embed_.forward(z_lq)));
}

Var LqControlAdapter::run_block(int s, const Var& x, const Var& t_emb, const Var& tokens,
                                const Var& pooled) const {
    return cond_[s].forward(res_[s].forward(x, t_emb), tokens, pooled);
}

Var LqControlAdapter::down(int s, const Var& x) const { return down_[s].forward(x); }

Var LqControlAdapter::run_mid(const Var& x, const Var& t_emb, const Var& tokens,
                              const Var& pooled) const {
    return mid_cond_.forward(mid_res_.forward(x, t_emb), tokens, pooled);
}

Var LqControlAdapter::residual_at(int s, const Var& x) const { return out_zero_[s].forward(x); }

Var LqControlAdapter::apply_tap(int s, const Var& x, const FeaturePyramid* taps) const {
    if (!cfg_.enable_encoder_taps || !taps) return x;
    if (!x->value.same_shape(taps->scales[s]->value)) {
        throw InvalidArgument("lq adapter: tap shape mismatch at scale " + std::to_string(s));
    }
    return nn::add(x, taps->scales[s]);
}

LqControlAdapter::Result LqControlAdapter::forward(const Var& z_t, const Var& z_lq,
                                                   const Var& text_tokens, int t,
                                                   const FeaturePyramid* taps,
                                                   const std::vector<Var>* rca_in) const {
    const int S = topo_.scales();
    if (cfg_.enable_encoder_taps) {
        if (!taps) throw InvalidArgument("lq adapter: encoder taps enabled but absent");
        check_taps(topo_, *taps);
    }
    if (rca_in) {
        if (!cfg_.enable_lr_exchange) {
            throw InvalidArgument("lq adapter: exchange features supplied with the exchange disabled");
        }
        if (static_cast<int>(rca_in->size()) != S) {
            throw InvalidArgument("lq adapter: expected one exchange feature per scale");
        }
    }
    Var t_emb = embed_time(t);
    Var pooled = nn::mean_rows(text_tokens);
    Result out;
    Var x = stem(z_t, z_lq);
    for (int s = 0; s < S; ++s) {
        if (s > 0) {
            x = down(s - 1, x);
            if (rca_in) x = nn::add(x, (*rca_in)[s - 1]);
        }
        x = run_block(s, x, t_emb, text_tokens, pooled);
        x = apply_tap(s, x, taps);
        out.intermediates.push_back(x);
        out.residuals.scales.push_back(residual_at(s, x));
    }
    Var m_in = x;
    if (rca_in) m_in = nn::add(m_in, (*rca_in)[S - 1]);
    Var m = run_mid(m_in, t_emb, text_tokens, pooled);
    if (cfg_.inject_mid) out.residuals.mid = residual_at(S, m);
    return out;
}

RefControlAdapter::RefControlAdapter(const BackboneConfig& topo, const AdapterConfig& cfg,
                                     nn::ParamRegistry& reg, const std::string& prefix, Rng& rng)
    : topo_(topo),
      cfg_(cfg),
      time_(reg, prefix + ".time", topo.time_dim, rng),
      stem_(reg, prefix + ".stem", topo.latent_channels, topo.channels_at(0), rng) {
    topo_.validate();
    cfg_.normalize();
    const int S = topo_.scales();
    for (int s = 0; s < S; ++s) {
        const int cin = s == 0 ? topo_.channels_at(0) : topo_.channels_at(s - 1);
        const int c = topo_.channels_at(s);
        const std::string base = prefix + ".enc" + std::to_string(s);
        res_.emplace_back(reg, base + ".res", cin, c, topo_.time_dim, rng);
        cond_.emplace_back(reg, base + ".cond", c, topo_.text_dim, topo_.attention_at(s), rng);
        if (s + 1 < S) down_.emplace_back(reg, base + ".down", c, rng);
        // Emission s feeds the input of LQ block s+1, one resolution level
        // down, except the last, which feeds the mid block at the same level.
        const int stride = s + 1 < S ? 2 : 1;
        emit_zero_.emplace_back(reg, prefix + ".emit" + std::to_string(s), c, c, stride);
    }
}

Var RefControlAdapter::embed_time(int t, const Var* e_f) const {
    Var emb = time_.embed(t);
    if (e_f) {
        if ((*e_f)->value.numel() != static_cast<std::size_t>(topo_.time_dim)) {
            throw InvalidArgument("ref adapter: identity conditioning width mismatch");
        }
        emb = nn::add(emb, *e_f);
    }
    return emb;
}

Var RefControlAdapter::stem(const Var& fused) const { return stem_.forward(fused); }

Var RefControlAdapter::run_block(int s, const Var& x, const Var& t_emb, const Var& tokens,
                                 const Var& pooled) const {
    return cond_[s].forward(res_[s].forward(x, t_emb), tokens, pooled);
}

Var RefControlAdapter::down(int s, const Var& x) const { return down_[s].forward(x); }

Var RefControlAdapter::emit(int s, const Var& g) const { return emit_zero_[s].forward(g); }

Var RefControlAdapter::neutral_tokens() const {
    return nn::constant(Tensor::zeros({1, topo_.text_dim}));
}

std::vector<Var> RefControlAdapter::forward(const Var& fused, const Var* e_f, int t,
                                            const std::vector<Var>& intermediates,
                                            const Var* tokens) const {
    if (!cfg_.enable_rca) throw InvalidState("ref adapter: called while disabled");
    const int S = topo_.scales();
    if (static_cast<int>(intermediates.size()) != S) {
        throw InvalidArgument("ref adapter: expected one intermediate per scale");
    }
    Var t_emb = embed_time(t, e_f);
    Var toks = cfg_.rca_text && tokens ? *tokens : neutral_tokens();
    Var pooled = nn::mean_rows(toks);
    std::vector<Var> emissions;
    Var g = stem(fused);
    for (int s = 0; s < S; ++s) {
        if (s > 0) g = down(s - 1, g);
        g = run_block(s, g, t_emb, toks, pooled);
        if (!g->value.same_shape(intermediates[s]->value)) {
            throw InvalidArgument("ref adapter: intermediate shape mismatch at scale " +
                                  std::to_string(s));
        }
        g = nn::add(g, intermediates[s]);
        emissions.push_back(emit(s, g));
    }
    return emissions;
}

RefLqFusion::RefLqFusion(int latent_channels, nn::ParamRegistry& reg, const std::string& prefix,
                         Rng& rng)
    : channels_(latent_channels) {
    const int c = latent_channels;
    proj_w_ = reg.add(prefix + ".proj.w", nn::init_conv_weight(c, 2 * c, 1, rng));
    proj_b_ = reg.add(prefix + ".proj.b", Tensor::zeros({c}));
    gn1_g_ = reg.add(prefix + ".gn1.g", Tensor::full({c}, 1.0));
    gn1_b_ = reg.add(prefix + ".gn1.b", Tensor::zeros({c}));
    conv1_w_ = reg.add(prefix + ".conv1.w", nn::init_conv_weight(c, c, 3, rng));
    conv1_b_ = reg.add(prefix + ".conv1.b", Tensor::zeros({c}));
    gn2_g_ = reg.add(prefix + ".gn2.g", Tensor::full({c}, 1.0));
    gn2_b_ = reg.add(prefix + ".gn2.b", Tensor::zeros({c}));
    conv2_w_ = reg.add(prefix + ".conv2.w", nn::init_conv_weight(c, c, 3, rng));
    conv2_b_ = reg.add(prefix + ".conv2.b", Tensor::zeros({c}));
}

Var RefLqFusion::fuse(const Var& z_lq, const Var& z_ref) const {
    if (!z_lq->value.same_shape(z_ref->value)) {
        throw InvalidArgument("fusion: LQ and reference latent shapes differ");
    }
    if (z_lq->value.shape[0] != channels_) {
        throw InvalidArgument("fusion: latent channel mismatch");
    }
    Var x = nn::conv2d(nn::concat_channels(z_lq, z_ref), proj_w_, proj_b_, 1, 0);
    Var h = nn::group_norm(x, gn1_g_, gn1_b_, nn::norm_groups(channels_));
    h = nn::conv2d(nn::silu(h), conv1_w_, conv1_b_, 1, 1);
    h = nn::group_norm(h, gn2_g_, gn2_b_, nn::norm_groups(channels_));
    h = nn::conv2d(nn::silu(h), conv2_w_, conv2_b_, 1, 1);
    return nn::add(h, x);
}

IdentityProjection::IdentityProjection(int identity_dim, int cond_dim, nn::ParamRegistry& reg,
                                       const std::string& prefix, Rng& rng)
    : identity_dim_(identity_dim), cond_dim_(cond_dim) {
    w_ = reg.add(prefix + ".w", nn::init_linear_weight(cond_dim, identity_dim, rng));
    b_ = reg.add(prefix + ".b", Tensor::zeros({cond_dim}));
}

Var IdentityProjection::project(const Var& raw) const {
    if (raw->value.rank() != 1 ||
        raw->value.numel() != static_cast<std::size_t>(identity_dim_)) {
        throw InvalidArgument("identity projection: expected a vector of width " +
                              std::to_string(identity_dim_));
    }
    return nn::linear(raw, w_, b_);
}

ControlResiduals dual_forward(const LqControlAdapter& lca, const RefControlAdapter& rca,
                              const RefLqFusion& rlf, const IdentityProjection& proj,
                              const Var& z_t, const Var& z_lq, const Var* z_ref,
                              const Var* id_raw, const Var& text_tokens, int t,
                              const FeaturePyramid* taps) {
    if (static_cast<bool>(z_ref) != static_cast<bool>(id_raw)) {
        throw InvalidArgument("dual control: reference latent and identity vector must be "
                              "supplied together");
    }
    const AdapterConfig& opt = lca.options();
    const bool use_ref = z_ref && opt.enable_rca && opt.enable_lr_exchange;
    if (z_ref && !rca.options().enable_rca) {
        throw InvalidState("dual control: reference supplied with the reference branch disabled");
    }
    if (!use_ref) {
        // Reference absent (or the exchange severed): the LQ branch alone
        // defines the residuals, on the exact same code path.
        return lca.forward(z_t, z_lq, text_tokens, t, taps, nullptr).residuals;
    }

    const BackboneConfig& topo = lca.topology();
    const int S = topo.scales();
    if (opt.enable_encoder_taps) {
        if (!taps) throw InvalidArgument("dual control: encoder taps enabled but absent");
        check_taps(topo, *taps);
    }
    Var t_lq = lca.embed_time(t);
    Var pooled = nn::mean_rows(text_tokens);
    Var e_f = proj.project(*id_raw);
    Var t_ref = rca.embed_time(t, &e_f);
    Var ref_tokens = rca.options().rca_text ? text_tokens : rca.neutral_tokens();
    Var ref_pooled = nn::mean_rows(ref_tokens);

    ControlResiduals out;
    Var x = lca.stem(z_t, z_lq);
    Var g = rca.stem(rlf.fuse(z_lq, *z_ref));
    Var pending;  // emission waiting to enter the next LQ block
    for (int s = 0; s < S; ++s) {
        if (s > 0) {
            x = lca.down(s - 1, x);
            x = nn::add(x, pending);
            g = rca.down(s - 1, g);
        }
        x = lca.run_block(s, x, t_lq, text_tokens, pooled);
        x = lca.apply_tap(s, x, taps);
        out.scales.push_back(lca.residual_at(s, x));
        g = rca.run_block(s, g, t_ref, ref_tokens, ref_pooled);
        g = nn::add(g, x);
        pending = rca.emit(s, g);
    }
    Var m = lca.run_mid(nn::add(x, pending), t_lq, text_tokens, pooled);
    if (opt.inject_mid) out.mid = lca.residual_at(S, m);
    return out;
}

}  // namespace visage
