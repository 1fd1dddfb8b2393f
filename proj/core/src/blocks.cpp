#include "visage/blocks.hpp"

#include <cmath>

#include "visage/errors.hpp"

namespace visage::nn {

int norm_groups(int channels) {
    if (channels < 1) throw InvalidArgument("norm_groups: channel count must be positive");
    for (int g = 8; g >= 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

Tensor sinusoidal_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw InvalidArgument("sinusoidal_embedding: dim must be even and >= 2");
    Tensor out = Tensor::zeros({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out.data[i] = std::sin(t * freq);
        out.data[half + i] = std::cos(t * freq);
    }
    return out;
}

TimeEmbedding::TimeEmbedding(ParamRegistry& reg, const std::string& prefix, int dim_, Rng& rng)
    : dim(dim_),
      w1(reg.add(prefix + ".w1", init_linear_weight(dim_, dim_, rng))),
      b1(reg.add(prefix + ".b1", Tensor::zeros({dim_}))),
      w2(reg.add(prefix + ".w2", init_linear_weight(dim_, dim_, rng))),
      b2(reg.add(prefix + ".b2", Tensor::zeros({dim_}))) {}

Var TimeEmbedding::embed(int t) const {
    Var h = linear(constant(sinusoidal_embedding(t, dim)), w1, b1);
    return linear(silu(h), w2, b2);
}

LinearLayer::LinearLayer(ParamRegistry& reg, const std::string& prefix, int in, int out, Rng& rng)
    : w(reg.add(prefix + ".w", init_linear_weight(out, in, rng))),
      b(reg.add(prefix + ".b", Tensor::zeros({out}))) {}

Var LinearLayer::forward(const Var& x) const { return linear(x, w, b); }

Conv3x3::Conv3x3(ParamRegistry& reg, const std::string& prefix, int cin, int cout, Rng& rng,
                 int stride_)
    : w(reg.add(prefix + ".w", init_conv_weight(cout, cin, 3, rng))),
      b(reg.add(prefix + ".b", Tensor::zeros({cout}))),
      stride(stride_) {}

Var Conv3x3::forward(const Var& x) const { return conv2d(x, w, b, stride, 1); }

ZeroConv::ZeroConv(ParamRegistry& reg, const std::string& prefix, int cin, int cout, int stride_)
    : w(reg.add(prefix + ".w", Tensor::zeros({cout, cin, 1, 1}))),
      b(reg.add(prefix + ".b", Tensor::zeros({cout}))),
      stride(stride_) {}

Var ZeroConv::forward(const Var& x) const { return conv2d(x, w, b, stride, 0); }

ResBlock::ResBlock(ParamRegistry& reg, const std::string& prefix, int cin_, int cout_,
                   int time_dim, Rng& rng)
    : cin(cin_),
      cout(cout_),
      gn1_g(reg.add(prefix + ".gn1.g", Tensor::full({cin_}, 1.0))),
      gn1_b(reg.add(prefix + ".gn1.b", Tensor::zeros({cin_}))),
      gn2_g(reg.add(prefix + ".gn2.g", Tensor::full({cout_}, 1.0))),
      gn2_b(reg.add(prefix + ".gn2.b", Tensor::zeros({cout_}))),
      conv1_w(reg.add(prefix + ".conv1.w", init_conv_weight(cout_, cin_, 3, rng))),
      conv1_b(reg.add(prefix + ".conv1.b", Tensor::zeros({cout_}))),
      conv2_w(reg.add(prefix + ".conv2.w", init_conv_weight(cout_, cout_, 3, rng))),
      conv2_b(reg.add(prefix + ".conv2.b", Tensor::zeros({cout_}))),
      time_w(reg.add(prefix + ".time.w", init_linear_weight(cout_, time_dim, rng))),
      time_b(reg.add(prefix + ".time.b", Tensor::zeros({cout_}))) {
    if (cin_ != cout_) {
        skip_w = reg.add(prefix + ".skip.w", init_conv_weight(cout_, cin_, 1, rng));
        skip_b = reg.add(prefix + ".skip.b", Tensor::zeros({cout_}));
    }
}

Var ResBlock::forward(const Var& x, const Var& t_emb) const {
    Var h = group_norm(x, gn1_g, gn1_b, norm_groups(cin));
    h = conv2d(silu(h), conv1_w, conv1_b, 1, 1);
    Var tb = linear(silu(t_emb), time_w, time_b);
    h = channel_bias(h, tb);
    h = group_norm(h, gn2_g, gn2_b, norm_groups(cout));
    h = conv2d(silu(h), conv2_w, conv2_b, 1, 1);
    Var skip = x;
    if (skip_w) skip = conv2d(x, *skip_w, *skip_b, 1, 0);
    return add(h, skip);
}

CrossAttention::CrossAttention(ParamRegistry& reg, const std::string& prefix, int channels_,
                               int text_dim, Rng& rng)
    : channels(channels_),
      wq(reg.add(prefix + ".wq", init_linear_weight(channels_, channels_, rng))),
      wk(reg.add(prefix + ".wk", init_linear_weight(channels_, text_dim, rng))),
      wv(reg.add(prefix + ".wv", init_linear_weight(channels_, text_dim, rng))) {}

Var CrossAttention::forward(const Var& x, const Var& text_tokens) const {
    if (x->value.rank() != 3) throw InvalidArgument("CrossAttention: expected [C,H,W] input");
    const int h = x->value.shape[1];
    const int w = x->value.shape[2];
    Var tokens = chw_to_tokens(x);                      // [HW, C]
    Var q = matmul(tokens, transpose(wq));              // [HW, C]
    Var k = matmul(text_tokens, transpose(wk));         // [L, C]
    Var v = matmul(text_tokens, transpose(wv));         // [L, C]
    Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(channels)));
    Var attn = matmul(softmax_rows(scores), v);         // [HW, C]
    return add(x, tokens_to_chw(attn, h, w));
}

FilmText::FilmText(ParamRegistry& reg, const std::string& prefix, int channels, int text_dim,
                   Rng& rng)
    : ws(reg.add(prefix + ".ws", init_linear_weight(channels, text_dim, rng))),
      bs(reg.add(prefix + ".bs", Tensor::zeros({channels}))),
      wb(reg.add(prefix + ".wb", init_linear_weight(channels, text_dim, rng))),
      bb(reg.add(prefix + ".bb", Tensor::zeros({channels}))) {}

Var FilmText::forward(const Var& x, const Var& pooled_text) const {
    Var s = add_scalar(linear(pooled_text, ws, bs), 1.0);
    Var b = linear(pooled_text, wb, bb);
    return channel_bias(channel_scale(x, s), b);
}

CondBlock::CondBlock(ParamRegistry& reg, const std::string& prefix, int channels, int text_dim,
                     bool use_attention, Rng& rng) {
    if (use_attention) {
        attn.emplace(reg, prefix + ".attn", channels, text_dim, rng);
    } else {
        film.emplace(reg, prefix + ".film", channels, text_dim, rng);
    }
}

Var CondBlock::forward(const Var& x, const Var& text_tokens, const Var& pooled_text) const {
    if (attn) return attn->forward(x, text_tokens);
    return film->forward(x, pooled_text);
}

Downsample::Downsample(ParamRegistry& reg, const std::string& prefix, int channels, Rng& rng)
    : conv(reg, prefix + ".conv", channels, channels, rng, 2) {}

Upsample::Upsample(ParamRegistry& reg, const std::string& prefix, int cin, int cout, Rng& rng)
    : conv(reg, prefix + ".conv", cin, cout, rng, 1) {}

Var Upsample::forward(const Var& x) const { return conv.forward(upsample_nearest2(x)); }

}  // namespace visage::nn
