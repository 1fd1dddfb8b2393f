#include "visage/codec.hpp"

#include <algorithm>

#include "visage/errors.hpp"

namespace visage {

LatentCodec::LatentCodec(int scale) : scale_(scale) {
    if (scale < 1) throw InvalidArgument("codec: scale must be >= 1");
}

int LatentCodec::latent_side(int image_side) const {
    if (image_side <= 0 || image_side % scale_ != 0)
        throw InvalidArgument("codec: image side must be a positive multiple of the scale");
    return image_side / scale_;
}

Tensor LatentCodec::encode(const Image& img) const {
    const int lh = latent_side(img.height);
    const int lw = latent_side(img.width);
    Tensor z({latent_channels(), lh, lw});
    // Channel layout: rgb channel varies slowest, then the block-local offset.
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < scale_; ++by)
            for (int bx = 0; bx < scale_; ++bx) {
                const int ch = (c * scale_ + by) * scale_ + bx;
                for (int y = 0; y < lh; ++y)
                    for (int x = 0; x < lw; ++x)
                        z.at(ch, y, x) = 2.0 * img.at(y * scale_ + by, x * scale_ + bx, c) - 1.0;
            }
    return z;
}

Image LatentCodec::decode(const Tensor& latent) const {
    if (latent.rank() != 3 || latent.shape[0] != latent_channels())
        throw InvalidArgument("codec: latent must be [" + std::to_string(latent_channels()) +
                              ",h,w], got " + latent.shape_str());
    const int lh = latent.shape[1], lw = latent.shape[2];
    Image img(lh * scale_, lw * scale_);
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < scale_; ++by)
            for (int bx = 0; bx < scale_; ++bx) {
                const int ch = (c * scale_ + by) * scale_ + bx;
                for (int y = 0; y < lh; ++y)
                    for (int x = 0; x < lw; ++x)
                        img.at(y * scale_ + by, x * scale_ + bx, c) = static_cast<float>(
                            std::clamp(0.5 * (latent.at(ch, y, x) + 1.0), 0.0, 1.0));
            }
    return img;
}

}  // namespace visage
