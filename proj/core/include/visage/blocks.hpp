#pragma once

#include <optional>
#include <string>

#include "visage/autodiff.hpp"

namespace visage::nn {

// Largest divisor of `channels` not exceeding 8 — the group count used by all
// normalization layers here.
int norm_groups(int channels);

// Classic sinusoidal timestep features (half sine, half cosine).
Tensor sinusoidal_embedding(int t, int dim);

// Sinusoid followed by a two-layer learned map.
struct TimeEmbedding {
    int dim;
    Var w1, b1, w2, b2;
    TimeEmbedding(ParamRegistry& reg, const std::string& prefix, int dim, Rng& rng);
    Var embed(int t) const;
};

struct LinearLayer {
    Var w, b;
    LinearLayer(ParamRegistry& reg, const std::string& prefix, int in, int out, Rng& rng);
    Var forward(const Var& x) const;
};

struct Conv3x3 {
    Var w, b;
    int stride;
    Conv3x3(ParamRegistry& reg, const std::string& prefix, int cin, int cout, Rng& rng,
            int stride = 1);
    Var forward(const Var& x) const;
};

// 1x1 projection whose weights and bias start at exact zero, so a fresh
// adapter contributes nothing.  Stride 2 also halves resolution (used where
// an emission feeds a coarser consumer).
struct ZeroConv {
    Var w, b;
    int stride;
    ZeroConv(ParamRegistry& reg, const std::string& prefix, int cin, int cout, int stride = 1);
    Var forward(const Var& x) const;
};

// GroupNorm-SiLU-Conv x2 with a timestep bias between the halves and an
// identity (or 1x1-projected) skip.
struct ResBlock {
    int cin, cout;
    Var gn1_g, gn1_b, gn2_g, gn2_b;
    Var conv1_w, conv1_b, conv2_w, conv2_b;
    Var time_w, time_b;
    std::optional<Var> skip_w, skip_b;
    ResBlock(ParamRegistry& reg, const std::string& prefix, int cin, int cout, int time_dim,
             Rng& rng);
    Var forward(const Var& x, const Var& t_emb) const;
};

// Single-head cross-attention from feature-map queries to text-token
// keys/values, with a residual connection.
struct CrossAttention {
    int channels;
    Var wq, wk, wv;
    CrossAttention(ParamRegistry& reg, const std::string& prefix, int channels, int text_dim,
                   Rng& rng);
    Var forward(const Var& x, const Var& text_tokens) const;
};

// Feature-wise modulation from the pooled text vector: x*(1+scale) + shift.
struct FilmText {
    Var ws, bs, wb, bb;
    FilmText(ParamRegistry& reg, const std::string& prefix, int channels, int text_dim, Rng& rng);
    Var forward(const Var& x, const Var& pooled_text) const;
};

// Per-scale text conditioning: cross-attention at coarse scales, feature-wise
// modulation elsewhere.
struct CondBlock {
    std::optional<CrossAttention> attn;
    std::optional<FilmText> film;
    CondBlock(ParamRegistry& reg, const std::string& prefix, int channels, int text_dim,
              bool use_attention, Rng& rng);
    Var forward(const Var& x, const Var& text_tokens, const Var& pooled_text) const;
};

struct Downsample {
    Conv3x3 conv;  // stride-2, channel-preserving
    Downsample(ParamRegistry& reg, const std::string& prefix, int channels, Rng& rng);
    Var forward(const Var& x) const { return conv.forward(x); }
};

struct Upsample {
    Conv3x3 conv;
    Upsample(ParamRegistry& reg, const std::string& prefix, int cin, int cout, Rng& rng);
    Var forward(const Var& x) const;
};

}  // namespace visage::nn
