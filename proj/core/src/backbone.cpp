#include "visage/backbone.hpp"

#include <cmath>

#include "visage/errors.hpp"

namespace visage {

using nn::Var;

bool BackboneConfig::attention_at(int s) const {
    if (!cross_attention.empty()) return cross_attention.at(s);
    return s >= scales() - 2;
}

void BackboneConfig::validate() const {
    if (latent_channels < 1) throw InvalidArgument("backbone: latent_channels must be positive");
    if (base_channels < 1) throw InvalidArgument("backbone: base_channels must be positive");
    if (scales() < 2) throw InvalidArgument("backbone: need at least two scales");
    for (int m : scale_multipliers) {
        if (m < 1) throw InvalidArgument("backbone: scale multipliers must be positive");
    }
    if (!cross_attention.empty() && static_cast<int>(cross_attention.size()) != scales()) {
        throw InvalidArgument("backbone: cross_attention flags must match scale count");
    }
    if (text_dim < 1 || time_dim < 2 || time_dim % 2 != 0) {
        throw InvalidArgument("backbone: bad conditioning dims");
    }
}

BackboneConfig BackboneConfig::from_config(const Config& cfg, const std::string& prefix) {
    BackboneConfig b;
    b.latent_channels = cfg.get_int(prefix + ".latent_channels", b.latent_channels);
    b.base_channels = cfg.get_int(prefix + ".base_channels", b.base_channels);
    b.scale_multipliers = cfg.get_int_list(prefix + ".scale_multipliers", b.scale_multipliers);
    b.text_dim = cfg.get_int(prefix + ".text_dim", b.text_dim);
    b.time_dim = cfg.get_int(prefix + ".time_dim", b.time_dim);
    std::vector<int> attn = cfg.get_int_list(prefix + ".cross_attention", {});
    b.cross_attention.clear();
    for (int v : attn) b.cross_attention.push_back(v != 0);
    b.validate();
    return b;
}

Backbone::Backbone(const BackboneConfig& config, nn::ParamRegistry& reg,
                   const std::string& prefix, Rng& rng)
    : config_(config),
      prefix_(prefix),
      time_(reg, prefix + ".time", config.time_dim, rng),
      stem_(reg, prefix + ".stem", config.latent_channels, config.channels_at(0), rng),
      mid_res_(reg, prefix + ".mid.res", config.channels_at(config.scales() - 1),
               config.channels_at(config.scales() - 1), config.time_dim, rng),
      mid_cond_(reg, prefix + ".mid.cond", config.channels_at(config.scales() - 1),
                config.text_dim, true, rng) {
    config_.validate();
    const int S = config_.scales();
    for (int s = 0; s < S; ++s) {
        const int cin = s == 0 ? config_.channels_at(0) : config_.channels_at(s - 1);
        const int c = config_.channels_at(s);
        const std::string base = prefix + ".enc" + std::to_string(s);
        enc_res_.emplace_back(reg, base + ".res", cin, c, config_.time_dim, rng);
        enc_cond_.emplace_back(reg, base + ".cond", c, config_.text_dim,
                               config_.attention_at(s), rng);
        if (s + 1 < S) enc_down_.emplace_back(reg, base + ".down", c, rng);
    }
    for (int s = 0; s < S; ++s) {
        const int c = config_.channels_at(s);
        const std::string base = prefix + ".dec" + std::to_string(s);
        // Decoder at scale s consumes concat(skip[c], running[c]) = 2c channels.
        dec_res_.emplace_back(reg, base + ".res", 2 * c, c, config_.time_dim, rng);
        dec_cond_.emplace_back(reg, base + ".cond", c, config_.text_dim,
                               config_.attention_at(s), rng);
        if (s > 0) {
            dec_up_.emplace_back(reg, base + ".up", c, config_.channels_at(s - 1), rng);
        }
    }
    head_gn_g_ = reg.add(prefix + ".head.gn.g", Tensor::full({config_.channels_at(0)}, 1.0));
    head_gn_b_ = reg.add(prefix + ".head.gn.b", Tensor::zeros({config_.channels_at(0)}));
    head_w_ = reg.add(prefix + ".head.w",
                      nn::init_conv_weight(config_.latent_channels, config_.channels_at(0), 3, rng));
    head_b_ = reg.add(prefix + ".head.b", Tensor::zeros({config_.latent_channels}));
}

Backbone::Encoded Backbone::encode(const Var& z_t, int t, const Var& text_tokens) const {
    if (z_t->value.rank() != 3 || z_t->value.shape[0] != config_.latent_channels) {
        throw InvalidArgument("backbone encode: latent shape mismatch, got " +
                              z_t->value.shape_str());
    }
    if (text_tokens->value.rank() != 2 || text_tokens->value.shape[1] != config_.text_dim) {
        throw InvalidArgument("backbone encode: text token shape mismatch");
    }
    Encoded enc;
    enc.t_emb = time_.embed(t);
    enc.text_tokens = text_tokens;
    enc.pooled_text = nn::mean_rows(text_tokens);
    const int S = config_.scales();
    Var x = stem_.forward(z_t);
    for (int s = 0; s < S; ++s) {
        x = enc_res_[s].forward(x, enc.t_emb);
        x = enc_cond_[s].forward(x, enc.text_tokens, enc.pooled_text);
        enc.taps.scales.push_back(x);
        if (s + 1 < S) x = enc_down_[s].forward(x);
    }
    x = mid_res_.forward(x, enc.t_emb);
    x = mid_cond_.forward(x, enc.text_tokens, enc.pooled_text);
    enc.taps.mid = x;
    return enc;
}

Var Backbone::decode(const Encoded& enc, const ControlResiduals* control) const {
    const int S = config_.scales();
    if (control) {
        if (static_cast<int>(control->scales.size()) != S) {
            throw InvalidArgument("backbone decode: control residual count mismatch");
        }
    }
    Var x = enc.taps.mid;
    if (control && control->mid) x = nn::add(x, control->mid);
    for (int s = S - 1; s >= 0; --s) {
        Var skip = enc.taps.scales[s];
        if (control) skip = nn::add(skip, control->scales[s]);
        x = nn::concat_channels(skip, x);
        x = dec_res_[s].forward(x, enc.t_emb);
        x = dec_cond_[s].forward(x, enc.text_tokens, enc.pooled_text);
        if (s > 0) x = dec_up_[s - 1].forward(x);
    }
    x = nn::group_norm(x, head_gn_g_, head_gn_b_, nn::norm_groups(config_.channels_at(0)));
    return nn::conv2d(nn::silu(x), head_w_, head_b_, 1, 1);
}

Var Backbone::forward(const Var& z_t, int t, const Var& text_tokens,
                      const ControlResiduals* control, FeaturePyramid* taps_out) const {
    Encoded enc = encode(z_t, t, text_tokens);
    if (taps_out) *taps_out = enc.taps;
    return decode(enc, control);
}

void Backbone::set_frozen(nn::ParamRegistry& reg, bool frozen) {
    reg.set_trainable(prefix_, !frozen);
    frozen_ = frozen;
}

}  // namespace visage
