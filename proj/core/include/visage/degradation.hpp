#pragma once

#include <vector>

#include "visage/config.hpp"
#include "visage/image.hpp"
#include "visage/rng.hpp"

namespace visage {

// Synthesis pipeline producing LQ images from HQ inputs:
// Gaussian blur -> bicubic downsample by r -> additive Gaussian noise ->
// JPEG encode/decode -> bicubic upsample back to the original size.
// Each stage can be disabled (sigma ranges at zero, empty scale factor list,
// jpeg_enabled=false), and every drawn parameter is recorded.
struct DegradationParams {
    double blur_sigma_lo = 0.5;
    double blur_sigma_hi = 8.0;
    // Downsampling factors to draw from; the allowed set is {4, 8, 16}.
    // Empty disables the resize stage.
    std::vector<int> scale_factors{4, 8, 16};
    double noise_sigma_lo = 0.0;          // pixel units on the [0,1] scale
    double noise_sigma_hi = 20.0 / 255.0;
    int jpeg_quality_lo = 30;
    int jpeg_quality_hi = 90;
    bool jpeg_enabled = true;

    void validate() const;
    static DegradationParams from_config(const Config& cfg, const std::string& prefix = "degrade");
};

// The concrete values drawn for one degradation run.
struct DrawnDegradation {
    double blur_sigma = 0.0;
    int scale_factor = 0;  // 0 when the resize stage is disabled
    double noise_sigma = 0.0;
    int jpeg_quality = 0;  // 0 when JPEG is disabled
};

// Pure function of (hq, p, rng state).  Requires hq square with side divisible
// by the drawn scale factor.
Image degrade(const Image& hq, const DegradationParams& p, Rng& rng,
              DrawnDegradation* drawn = nullptr);

}  // namespace visage
