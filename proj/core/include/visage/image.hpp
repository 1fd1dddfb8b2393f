#pragma once

#include <string>
#include <vector>

#include "visage/rng.hpp"

namespace visage {

// Interleaved RGB float image, values nominally in [0,1], row-major.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // size = height*width*3, pixel order R,G,B

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.f) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// PNG/JPEG round trips.  Loading throws IoError on unreadable or undecodable
// files; saving throws IoError on write failure.  Values are clamped to [0,1]
// on save.
Image load_image(const std::string& path);
void save_png(const Image& img, const std::string& path);
void save_jpeg(const Image& img, const std::string& path, int quality = 95);

// Resampling and filtering used by the degradation pipeline.
Image resize_bicubic(const Image& img, int out_h, int out_w);
Image gaussian_blur(const Image& img, double sigma);

// In-place JPEG encode/decode cycle at the given quality (1..100).
Image jpeg_roundtrip(const Image& img, int quality);

// Per-pixel i.i.d. Gaussian noise with stddev sigma (in [0,1] pixel units),
// clamped back to [0,1].
Image add_gaussian_noise(const Image& img, double sigma, Rng& rng);

// Rec. 601 luma.
double luminance(const Image& img, int y, int x);

// Mean absolute per-channel difference; shapes must match.
double mean_abs_diff(const Image& a, const Image& b);

}  // namespace visage
