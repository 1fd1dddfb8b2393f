#pragma once

#include <cstdint>

#include "visage/conditioning.hpp"
#include "visage/image.hpp"
#include "visage/rng.hpp"

namespace visage {

// Procedural "face": a deterministic layout of parametric shapes on a square
// canvas.  A subset of the attribute vocabulary maps to plainly visible
// properties (hair color band, eye rings for eyeglasses, mouth curve for
// smiling, ...), so a trivial pixel probe can classify them and prompts have
// ground truth to bite on.  Eye centers are at fixed canvas-relative
// positions for every identity and every image; the probes depend on that.

struct ToyIdentitySpec {
    int hair_color = 0;  // 0 black, 1 blond, 2 brown, 3 gray
    bool eyeglasses = false;
    bool male = false;
    bool earrings = false;
    bool lipstick = false;
    bool big_eyes = false;
    bool big_nose = false;
    bool mustache = false;
    float skin[3] = {0.8f, 0.62f, 0.48f};
    double oval_width = 0.30;  // face half-width, canvas-relative
    double mouth_width = 0.16;

    // Identity `index` fixes the eyeglasses/male flags on a balanced pattern
    // (all four combinations cycle every four identities); everything else is
    // drawn from rng.
    static ToyIdentitySpec draw(int index, Rng& rng);
};

// Per-image variation: expression and nuisance factors.  References of the
// same identity differ from targets through these.
struct ToyRenderJitter {
    bool smiling = false;
    double background = 0.85;   // gray level
    double brightness = 1.0;    // multiplies face colors
    double mouth_shift = 0.0;   // vertical mouth offset, canvas-relative
    double oval_scale = 1.0;    // mild face-size jitter

    static ToyRenderJitter draw(Rng& rng);
};

// Canonical eye geometry (canvas-relative), shared by renderer and probes.
inline constexpr double kEyeY = 0.42;
inline constexpr double kLeftEyeX = 0.35;
inline constexpr double kRightEyeX = 0.65;
inline constexpr double kGlassRingInner = 0.085;
inline constexpr double kGlassRingOuter = 0.12;

Image render_toy_face(const ToyIdentitySpec& spec, const ToyRenderJitter& jitter, int size);

// Ground-truth labels for a rendered (spec, jitter) pair: visible attributes
// get 0/1 confidences, everything not rendered stays at the uncertain 0.5.
AttributeVector toy_labels(const ToyIdentitySpec& spec, const ToyRenderJitter& jitter);

// Darkness margin of the ring annulus around both eye centers relative to
// nearby skin; strongly positive when glasses rings are present.
double eyeglasses_probe_score(const Image& img);

// Frozen decision threshold on the probe score.
inline constexpr double kEyeglassesProbeThreshold = 0.10;
bool eyeglasses_probe(const Image& img);

}  // namespace visage
