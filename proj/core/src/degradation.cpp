#include "visage/degradation.hpp"

#include <algorithm>

#include "visage/errors.hpp"

namespace visage {

void DegradationParams::validate() const {
    if (blur_sigma_lo < 0.0 || blur_sigma_hi < blur_sigma_lo)
        throw InvalidArgument("degrade: blur sigma range must be ordered and nonnegative");
    if (noise_sigma_lo < 0.0 || noise_sigma_hi < noise_sigma_lo)
        throw InvalidArgument("degrade: noise sigma range must be ordered and nonnegative");
    if (jpeg_enabled &&
        (jpeg_quality_lo < 1 || jpeg_quality_hi > 100 || jpeg_quality_hi < jpeg_quality_lo))
        throw InvalidArgument("degrade: jpeg quality range must be ordered within [1,100]");
    for (int r : scale_factors)
        if (r != 4 && r != 8 && r != 16)
            throw InvalidArgument("degrade: scale factor must be one of {4, 8, 16}");
}

DegradationParams DegradationParams::from_config(const Config& cfg, const std::string& prefix) {
    DegradationParams p;
    p.blur_sigma_lo = cfg.get_double(prefix + ".blur_sigma_lo", p.blur_sigma_lo);
    p.blur_sigma_hi = cfg.get_double(prefix + ".blur_sigma_hi", p.blur_sigma_hi);
    if (cfg.has(prefix + ".scale_factors"))
        p.scale_factors = cfg.get_int_list(prefix + ".scale_factors");
    p.noise_sigma_lo = cfg.get_double(prefix + ".noise_sigma_lo", p.noise_sigma_lo);
    p.noise_sigma_hi = cfg.get_double(prefix + ".noise_sigma_hi", p.noise_sigma_hi);
    p.jpeg_quality_lo = cfg.get_int(prefix + ".jpeg_quality_lo", p.jpeg_quality_lo);
    p.jpeg_quality_hi = cfg.get_int(prefix + ".jpeg_quality_hi", p.jpeg_quality_hi);
    p.jpeg_enabled = cfg.get_bool(prefix + ".jpeg_enabled", p.jpeg_enabled);
    p.validate();
    return p;
}

Image degrade(const Image& hq, const DegradationParams& p, Rng& rng, DrawnDegradation* drawn) {
    p.validate();
    if (hq.height != hq.width) throw InvalidArgument("degrade: input must be square");

    // Draw all stage parameters up front in a fixed order so the consumed rng
    // stream does not depend on which stages are enabled.
    DrawnDegradation d;
    d.blur_sigma = rand_uniform(rng, p.blur_sigma_lo, p.blur_sigma_hi);
    if (!p.scale_factors.empty())
        d.scale_factor = p.scale_factors[rand_index(rng, p.scale_factors.size())];
    d.noise_sigma = rand_uniform(rng, p.noise_sigma_lo, p.noise_sigma_hi);
    if (p.jpeg_enabled)
        d.jpeg_quality =
            p.jpeg_quality_lo +
            static_cast<int>(rand_index(
                rng, static_cast<std::uint64_t>(p.jpeg_quality_hi - p.jpeg_quality_lo) + 1));

    if (d.scale_factor > 0 && hq.height % d.scale_factor != 0)
        throw InvalidArgument("degrade: image side " + std::to_string(hq.height) +
                              " not divisible by scale factor " + std::to_string(d.scale_factor));

    Image img = hq;
    if (d.blur_sigma > 0.0) img = gaussian_blur(img, d.blur_sigma);
    if (d.scale_factor > 0)
        img = resize_bicubic(img, hq.height / d.scale_factor, hq.width / d.scale_factor);
    if (d.noise_sigma > 0.0) img = add_gaussian_noise(img, d.noise_sigma, rng);
    if (d.jpeg_quality > 0) img = jpeg_roundtrip(img, d.jpeg_quality);
    if (d.scale_factor > 0) img = resize_bicubic(img, hq.height, hq.width);

    if (drawn) *drawn = d;
    return img;
}

}  // namespace visage
