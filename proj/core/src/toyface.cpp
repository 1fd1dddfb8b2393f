#include "visage/toyface.hpp"

#include <algorithm>
#include <cmath>

#include "visage/errors.hpp"

namespace visage {

namespace {

constexpr float kHairPalette[4][3] = {
    {0.08f, 0.08f, 0.08f},  // black
    {0.85f, 0.72f, 0.30f},  // blond
    {0.45f, 0.28f, 0.12f},  // brown
    {0.60f, 0.60f, 0.62f},  // gray
};

constexpr double kFaceCx = 0.5, kFaceCy = 0.55;
constexpr double kNoseCy = 0.60, kMouthCy = 0.74;
constexpr double kEarY = 0.56;

inline bool in_ellipse(double x, double y, double cx, double cy, double ax, double ay) {
    const double dx = (x - cx) / ax, dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
}

inline double dist(double x, double y, double cx, double cy) {
    return std::hypot(x - cx, y - cy);
}

}  // namespace

ToyIdentitySpec ToyIdentitySpec::draw(int index, Rng& rng) {
    ToyIdentitySpec sp;
    // Balanced visible flags: every block of four identities covers all
    // glasses x gender combinations.
    sp.eyeglasses = (index % 2) == 0;
    sp.male = (index % 4) < 2;
    sp.hair_color = static_cast<int>(rand_index(rng, 4));
    sp.earrings = rand_uniform(rng) < 0.5;
    sp.lipstick = rand_uniform(rng) < 0.5;
    sp.big_eyes = rand_uniform(rng) < 0.5;
    sp.big_nose = rand_uniform(rng) < 0.5;
    sp.mustache = sp.male && rand_uniform(rng) < 0.5;
    sp.skin[0] = static_cast<float>(rand_uniform(rng, 0.65, 0.92));
    sp.skin[1] = static_cast<float>(sp.skin[0] * rand_uniform(rng, 0.72, 0.85));
    sp.skin[2] = static_cast<float>(sp.skin[1] * rand_uniform(rng, 0.68, 0.82));
    sp.oval_width = rand_uniform(rng, 0.27, 0.32);
    sp.mouth_width = rand_uniform(rng, 0.13, 0.19);
    return sp;
}

ToyRenderJitter ToyRenderJitter::draw(Rng& rng) {
    ToyRenderJitter j;
    j.smiling = rand_uniform(rng) < 0.5;
    j.background = rand_uniform(rng, 0.72, 0.95);
    j.brightness = rand_uniform(rng, 0.92, 1.08);
    j.mouth_shift = rand_uniform(rng, -0.015, 0.015);
    j.oval_scale = rand_uniform(rng, 0.97, 1.03);
    return j;
}

Image render_toy_face(const ToyIdentitySpec& spec, const ToyRenderJitter& jitter, int size) {
    if (size < 32) throw InvalidArgument("render_toy_face: size must be >= 32");
    Image img(size, size);

    const double ow = spec.oval_width * jitter.oval_scale + (spec.male ? 0.025 : 0.0);
    const double oh = 0.40 * jitter.oval_scale;
    const double eye_r = spec.big_eyes ? 0.075 : 0.052;
    const double nose_hw = spec.big_nose ? 0.055 : 0.032;
    const double mouth_cy = kMouthCy + jitter.mouth_shift;
    const float* hair = kHairPalette[spec.hair_color];
    const float dark[3] = {0.06f, 0.06f, 0.06f};
    const float white[3] = {0.96f, 0.96f, 0.96f};
    const float gold[3] = {0.95f, 0.85f, 0.20f};
    const float lip_red[3] = {0.80f, 0.10f, 0.15f};
    const float lip_plain[3] = {0.38f, 0.17f, 0.13f};
    const float nose_tone[3] = {spec.skin[0] * 0.8f, spec.skin[1] * 0.8f, spec.skin[2] * 0.8f};

    for (int yi = 0; yi < size; ++yi) {
        for (int xi = 0; xi < size; ++xi) {
            const double x = (xi + 0.5) / size, y = (yi + 0.5) / size;
            float px[3];
            const float bg = static_cast<float>(jitter.background);
            px[0] = bg;
            px[1] = bg;
            px[2] = std::min(1.f, bg + 0.04f);  // slightly blue background

            const bool in_face = in_ellipse(x, y, kFaceCx, kFaceCy, ow, oh);
            const bool in_hair_shell = in_ellipse(x, y, kFaceCx, kFaceCy - 0.02, ow * 1.12, oh * 1.10);
            if (in_face)
                for (int c = 0; c < 3; ++c) px[c] = spec.skin[c];

            // Hair: top band for everyone; side falls for non-male identities.
            if (in_hair_shell && y < 0.30)
                for (int c = 0; c < 3; ++c) px[c] = hair[c];
            if (!spec.male && in_hair_shell && !in_ellipse(x, y, kFaceCx, kFaceCy, ow * 0.88, oh * 0.96) &&
                y < 0.74)
                for (int c = 0; c < 3; ++c) px[c] = hair[c];

            if (in_face) {
                // Eyes: white with dark pupil, fixed centers.
                for (const double ex : {kLeftEyeX, kRightEyeX}) {
                    if (in_ellipse(x, y, ex, kEyeY, eye_r, eye_r * 0.7))
                        for (int c = 0; c < 3; ++c) px[c] = white[c];
                    if (dist(x, y, ex, kEyeY) < 0.018)
                        for (int c = 0; c < 3; ++c) px[c] = dark[c];
                }
                // Nose triangle.
                if (y > kNoseCy - 0.04 && y < kNoseCy + 0.07) {
                    const double t = (y - (kNoseCy - 0.04)) / 0.11;
                    if (std::fabs(x - kFaceCx) < nose_hw * t)
                        for (int c = 0; c < 3; ++c) px[c] = nose_tone[c];
                }
                // Mustache bar.
                if (spec.mustache && std::fabs(y - (mouth_cy - 0.045)) < 0.016 &&
                    std::fabs(x - kFaceCx) < spec.mouth_width * 0.85)
                    for (int c = 0; c < 3; ++c) px[c] = dark[c];
                // Mouth: upward arc when smiling, flat bar otherwise.
                const double mx = (x - kFaceCx) / spec.mouth_width;
                if (std::fabs(mx) <= 1.0) {
                    const double curve = jitter.smiling ? 0.05 * (mx * mx - 0.5) : 0.0;
                    if (std::fabs(y - (mouth_cy + curve)) < 0.016) {
                        const float* lip = spec.lipstick ? lip_red : lip_plain;
                        for (int c = 0; c < 3; ++c) px[c] = lip[c];
                    }
                }
            }

            // Glasses: dark ring annulus around each eye plus a bridge bar.
            if (spec.eyeglasses) {
                for (const double ex : {kLeftEyeX, kRightEyeX}) {
                    const double r = dist(x, y, ex, kEyeY);
                    if (r >= kGlassRingInner && r <= kGlassRingOuter)
                        for (int c = 0; c < 3; ++c) px[c] = dark[c];
                }
                if (std::fabs(y - kEyeY) < 0.012 && x > kLeftEyeX + kGlassRingOuter &&
                    x < kRightEyeX - kGlassRingOuter)
                    for (int c = 0; c < 3; ++c) px[c] = dark[c];
            }

            // Earrings: bright studs just outside the face oval.
            if (spec.earrings) {
                const double ear_dx = ow * 0.98;
                if (dist(x, y, kFaceCx - ear_dx, kEarY) < 0.022 ||
                    dist(x, y, kFaceCx + ear_dx, kEarY) < 0.022)
                    for (int c = 0; c < 3; ++c) px[c] = gold[c];
            }

            const float b = static_cast<float>(jitter.brightness);
            for (int c = 0; c < 3; ++c)
                img.at(yi, xi, c) = std::clamp(px[c] * (in_face || y < 0.30 ? b : 1.f), 0.f, 1.f);
        }
    }
    return img;
}

AttributeVector toy_labels(const ToyIdentitySpec& spec, const ToyRenderJitter& jitter) {
    AttributeVector v;  // everything starts uncertain (0.5)
    const char* hair_names[4] = {"black hair", "blond hair", "brown hair", "gray hair"};
    for (int i = 0; i < 4; ++i) v.set(hair_names[i], spec.hair_color == i ? 1.0 : 0.0);
    v.set("eyeglasses", spec.eyeglasses ? 1.0 : 0.0);
    v.set("male", spec.male ? 1.0 : 0.0);
    v.set("wearing earrings", spec.earrings ? 1.0 : 0.0);
    v.set("wearing lipstick", spec.lipstick ? 1.0 : 0.0);
    v.set("big eyes", spec.big_eyes ? 1.0 : 0.0);
    v.set("big nose", spec.big_nose ? 1.0 : 0.0);
    v.set("mustache", spec.mustache ? 1.0 : 0.0);
    v.set("smiling", jitter.smiling ? 1.0 : 0.0);
    return v;
}

double eyeglasses_probe_score(const Image& img) {
    if (img.height < 32 || img.width < 32)
        throw InvalidArgument("eyeglasses probe: image too small");
    double ring_acc = 0.0, skin_acc = 0.0;
    long ring_n = 0, skin_n = 0;
    const double mid = 0.5 * (kGlassRingInner + kGlassRingOuter);
    const double half = 0.4 * (kGlassRingOuter - kGlassRingInner);
    for (int yi = 0; yi < img.height; ++yi) {
        for (int xi = 0; xi < img.width; ++xi) {
            const double x = (xi + 0.5) / img.width, y = (yi + 0.5) / img.height;
            for (const double ex : {kLeftEyeX, kRightEyeX}) {
                const double r = dist(x, y, ex, kEyeY);
                if (std::fabs(r - mid) <= half) {
                    ring_acc += luminance(img, yi, xi);
                    ++ring_n;
                }
            }
            // Skin reference: cheek patches below the eyes, clear of every
            // rendered feature.
            if (y > 0.50 && y < 0.56 &&
                (std::fabs(x - kLeftEyeX) < 0.05 || std::fabs(x - kRightEyeX) < 0.05)) {
                skin_acc += luminance(img, yi, xi);
                ++skin_n;
            }
        }
    }
    if (ring_n == 0 || skin_n == 0) return 0.0;
    return skin_acc / skin_n - ring_acc / ring_n;
}

bool eyeglasses_probe(const Image& img) {
    return eyeglasses_probe_score(img) > kEyeglassesProbeThreshold;
}

}  // namespace visage
