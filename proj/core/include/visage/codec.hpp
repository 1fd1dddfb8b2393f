#pragma once

#include "visage/image.hpp"
#include "visage/tensor.hpp"

namespace visage {

// Fixed, lossless image<->latent codec standing in for a learned autoencoder.
// encode maps pixel values from [0,1] to [-1,1] and space-to-depth packs each
// scale x scale block into channels, so a (H,W) RGB image becomes a
// (3*scale^2, H/scale, W/scale) latent.  decode inverts exactly (up to the
// final clamp), which keeps restoration quality attributable to the diffusion
// model rather than codec loss.
class LatentCodec {
public:
    explicit LatentCodec(int scale = 4);

    int scale() const { return scale_; }
    int latent_channels() const { return 3 * scale_ * scale_; }
    // Latent spatial side for a given image side; image sides must be
    // divisible by scale.
    int latent_side(int image_side) const;

    Tensor encode(const Image& img) const;
    Image decode(const Tensor& latent) const;

private:
    int scale_;
};

}  // namespace visage
