#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "visage/codec.hpp"
#include "visage/degradation.hpp"
#include "visage/errors.hpp"
#include "visage/image.hpp"

using namespace visage;

namespace {

Image gradient_image(int h, int w) {
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<float>(x) / (w - 1);
            img.at(y, x, 1) = static_cast<float>(y) / (h - 1);
            img.at(y, x, 2) = 0.5f * (img.at(y, x, 0) + img.at(y, x, 1));
        }
    return img;
}

Image noise_image(int h, int w, std::uint64_t seed) {
    Image img(h, w);
    Rng rng = make_rng(seed);
    for (auto& v : img.data) v = static_cast<float>(rand_uniform(rng));
    return img;
}

double pixel_stddev(const Image& img) {
    double mean = 0.0;
    for (float v : img.data) mean += v;
    mean /= static_cast<double>(img.data.size());
    double var = 0.0;
    for (float v : img.data) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(img.data.size()));
}

}  // namespace

TEST_CASE("png round trip is 8-bit exact") {
    std::string dir = vtest::scratch_dir("image_png");
    Image img = noise_image(24, 18, 1);
    save_png(img, dir + "/a.png");
    Image back = load_image(dir + "/a.png");
    CHECK(back.height == 24);
    CHECK(back.width == 18);
    // One 8-bit quantization step of tolerance.
    CHECK(mean_abs_diff(img, back) < 1.0 / 255.0);
    double mx = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        mx = std::max(mx, std::abs(static_cast<double>(img.data[i]) - back.data[i]));
    CHECK(mx <= 0.5 / 255.0 + 1e-6);

    CHECK_THROWS_AS(load_image(dir + "/missing.png"), IoError);
    CHECK_THROWS_AS(save_png(img, dir + "/no_such_dir/a.png"), IoError);
    // Out-of-range values clamp on save.
    Image hot(4, 4);
    for (auto& v : hot.data) v = 2.0f;
    save_png(hot, dir + "/hot.png");
    Image hb = load_image(dir + "/hot.png");
    for (float v : hb.data) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("jpeg roundtrip quality behaviour") {
    Image img = gradient_image(32, 32);
    Image q90 = jpeg_roundtrip(img, 90);
    Image q10 = jpeg_roundtrip(img, 10);
    CHECK(q90.same_shape(img));
    CHECK(mean_abs_diff(img, q90) < 0.02);
    CHECK(mean_abs_diff(img, q10) >= mean_abs_diff(img, q90));
    CHECK_THROWS_AS(jpeg_roundtrip(img, 0), InvalidArgument);
    CHECK_THROWS_AS(jpeg_roundtrip(img, 101), InvalidArgument);
}

TEST_CASE("resize bicubic") {
    Image img = gradient_image(16, 16);
    Image small = resize_bicubic(img, 4, 4);
    CHECK(small.height == 4);
    CHECK(small.width == 4);
    Image big = resize_bicubic(small, 16, 16);
    CHECK(big.height == 16);

    // Constant images stay constant through resampling.
    Image flat(10, 10);
    for (auto& v : flat.data) v = 0.25f;
    Image rf = resize_bicubic(flat, 7, 13);
    for (float v : rf.data) CHECK(v == doctest::Approx(0.25f).epsilon(1e-5));

    CHECK_THROWS_AS(resize_bicubic(img, 0, 4), InvalidArgument);
}

TEST_CASE("gaussian blur") {
    Image img = noise_image(20, 20, 2);
    Image blurred = gaussian_blur(img, 2.0);
    CHECK(blurred.same_shape(img));
    CHECK(pixel_stddev(blurred) < pixel_stddev(img));

    // sigma <= 0 is the identity.
    Image same = gaussian_blur(img, 0.0);
    CHECK(mean_abs_diff(same, img) == 0.0);

    Image flat(8, 8);
    for (auto& v : flat.data) v = 0.6f;
    Image bf = gaussian_blur(flat, 3.0);
    for (float v : bf.data) CHECK(v == doctest::Approx(0.6f).epsilon(1e-5));
}

TEST_CASE("additive noise is deterministic and clamped") {
    Image img = gradient_image(12, 12);
    Rng r1 = make_rng(5), r2 = make_rng(5);
    Image a = add_gaussian_noise(img, 0.1, r1);
    Image b = add_gaussian_noise(img, 0.1, r2);
    CHECK(mean_abs_diff(a, b) == 0.0);
    CHECK(mean_abs_diff(a, img) > 0.0);
    for (float v : a.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    Rng r3 = make_rng(5);
    Image c = add_gaussian_noise(img, 0.0, r3);
    CHECK(mean_abs_diff(c, img) == 0.0);
}

TEST_CASE("luminance and mean_abs_diff") {
    Image img(1, 3);
    img.at(0, 0, 0) = 1.0f;  // pure red
    img.at(0, 1, 1) = 1.0f;  // pure green
    img.at(0, 2, 2) = 1.0f;  // pure blue
    CHECK(luminance(img, 0, 0) == doctest::Approx(0.299));
    CHECK(luminance(img, 0, 1) == doctest::Approx(0.587));
    CHECK(luminance(img, 0, 2) == doctest::Approx(0.114));

    Image other = img;
    other.at(0, 0, 0) = 0.0f;
    CHECK(mean_abs_diff(img, other) == doctest::Approx(1.0 / 9.0));
    CHECK_THROWS_AS(mean_abs_diff(img, Image(2, 2)), InvalidArgument);
}

TEST_CASE("latent codec shapes and exact inversion") {
    LatentCodec codec(4);
    CHECK(codec.scale() == 4);
    CHECK(codec.latent_channels() == 48);
    CHECK(codec.latent_side(48) == 12);
    CHECK_THROWS_AS(codec.latent_side(50), InvalidArgument);
    CHECK_THROWS_AS(LatentCodec(0), InvalidArgument);

    Image img = noise_image(16, 24, 3);
    Tensor z = codec.encode(img);
    CHECK(z.shape == std::vector<int>{48, 4, 6});
    // Values map [0,1] -> [-1,1].
    for (double v : z.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    Image back = codec.decode(z);
    CHECK(back.same_shape(img));
    CHECK(mean_abs_diff(img, back) < 1e-6);

    // Channel layout: rgb plane varies slowest, then block row, then block
    // column.  Pixel (y=5, x=2) channel G sits in latent channel
    // (1*4 + (5%4))*4 + (2%4) at spatial (1, 0).
    const float val = img.at(5, 2, 1);
    const int ch = (1 * 4 + 1) * 4 + 2;
    CHECK(z.at(ch, 1, 0) == doctest::Approx(2.0 * val - 1.0).epsilon(1e-6));

    CHECK_THROWS_AS(codec.decode(Tensor::zeros({47, 4, 4})), InvalidArgument);

    // decode clamps out-of-range latents.
    Tensor wild = Tensor::full({48, 2, 2}, 3.0);
    Image clamped = codec.decode(wild);
    for (float v : clamped.data) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("degradation parameter validation and config") {
    DegradationParams p;
    p.validate();
    p.blur_sigma_hi = 0.1;  // hi < lo
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = DegradationParams{};
    p.scale_factors = {3};
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = DegradationParams{};
    p.jpeg_quality_lo = 0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);

    Config cfg = Config::from_json_text(
        R"({"degrade": {"blur_sigma_lo": 1.0, "blur_sigma_hi": 2.0, "scale_factors": [4, 8],
            "jpeg_enabled": false}})");
    DegradationParams q = DegradationParams::from_config(cfg);
    CHECK(q.blur_sigma_lo == doctest::Approx(1.0));
    CHECK(q.blur_sigma_hi == doctest::Approx(2.0));
    CHECK(q.scale_factors == std::vector<int>{4, 8});
    CHECK_FALSE(q.jpeg_enabled);
}

TEST_CASE("degrade pipeline") {
    Image hq = noise_image(32, 32, 7);

    DegradationParams p;
    p.blur_sigma_lo = 0.5;
    p.blur_sigma_hi = 2.0;
    p.scale_factors = {4};
    p.noise_sigma_lo = 0.01;
    p.noise_sigma_hi = 0.05;

    SUBCASE("deterministic in the rng and parameters recorded in range") {
        Rng r1 = make_rng(11), r2 = make_rng(11);
        DrawnDegradation d1, d2;
        Image a = degrade(hq, p, r1, &d1);
        Image b = degrade(hq, p, r2, &d2);
        CHECK(mean_abs_diff(a, b) == 0.0);
        CHECK(a.same_shape(hq));
        CHECK(d1.blur_sigma == d2.blur_sigma);
        CHECK(d1.blur_sigma >= p.blur_sigma_lo);
        CHECK(d1.blur_sigma <= p.blur_sigma_hi);
        CHECK(d1.scale_factor == 4);
        CHECK(d1.noise_sigma >= p.noise_sigma_lo);
        CHECK(d1.noise_sigma <= p.noise_sigma_hi);
        CHECK(d1.jpeg_quality >= p.jpeg_quality_lo);
        CHECK(d1.jpeg_quality <= p.jpeg_quality_hi);
        CHECK(mean_abs_diff(a, hq) > 0.0);
    }

    SUBCASE("all stages disabled is the identity") {
        DegradationParams off;
        off.blur_sigma_lo = off.blur_sigma_hi = 0.0;
        off.scale_factors = {};
        off.noise_sigma_lo = off.noise_sigma_hi = 0.0;
        off.jpeg_enabled = false;
        Rng rng = make_rng(1);
        DrawnDegradation d;
        Image out = degrade(hq, off, rng, &d);
        CHECK(mean_abs_diff(out, hq) == 0.0);
        CHECK(d.scale_factor == 0);
        CHECK(d.jpeg_quality == 0);
    }

    SUBCASE("non-square input rejected") {
        Rng rng = make_rng(1);
        Image rect(16, 32);
        CHECK_THROWS_AS(degrade(rect, p, rng), InvalidArgument);
    }

    SUBCASE("side must divide the drawn scale factor") {
        Rng rng = make_rng(1);
        Image odd(30, 30);
        CHECK_THROWS_AS(degrade(odd, p, rng), InvalidArgument);
    }

    SUBCASE("stronger ranges degrade more") {
        DegradationParams hard = p;
        hard.blur_sigma_lo = 6.0;
        hard.blur_sigma_hi = 8.0;
        hard.scale_factors = {8};
        hard.noise_sigma_lo = 0.05;
        hard.noise_sigma_hi = 0.08;
        hard.jpeg_quality_lo = 30;
        hard.jpeg_quality_hi = 40;
        DegradationParams soft = p;
        soft.blur_sigma_lo = 0.5;
        soft.blur_sigma_hi = 0.6;
        soft.scale_factors = {4};
        soft.noise_sigma_lo = 0.0;
        soft.noise_sigma_hi = 0.005;
        soft.jpeg_quality_lo = 85;
        soft.jpeg_quality_hi = 90;
        Image structured = gradient_image(32, 32);
        Rng ra = make_rng(2), rb = make_rng(2);
        Image a = degrade(structured, hard, ra);
        Image b = degrade(structured, soft, rb);
        CHECK(mean_abs_diff(a, structured) > mean_abs_diff(b, structured));
    }
}
