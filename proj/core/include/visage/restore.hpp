#pragma once

#include <optional>
#include <string>
#include <vector>

#include "visage/conditioning.hpp"
#include "visage/diffusion.hpp"
#include "visage/image.hpp"
#include "visage/model.hpp"

namespace visage {

// Inputs for one guided restoration.  Attribute values, when present, fully
// replace any upstream classifier output; absent attributes fall back to the
// neutral description.  use_identity requires a reference image; a reference
// without identity conditioning feeds a zero identity vector.
struct RestorationRequest {
    Image lq;
    std::optional<AttributeVector> attributes;
    std::optional<Image> reference;
    GuidanceWeights guidance;
    int steps = 0;  // 0 = every schedule step; otherwise a strided visit plan
    std::uint64_t seed = 0;
    bool use_reference = true;
    bool use_identity = true;
    SamplerKind sampler = SamplerKind::ddim;
};

// Full guided sampling pipeline: prompt triple from attributes, latents from
// the codec, three predictions per visited step combined by the guidance
// weights, decode back to image space.  Deterministic given the seed.
Image restore(const RestorationRequest& req, const ModelBundle& model);

// Restoration with a deliberately different-identity reference; shares the
// restore code path exactly.
Image face_swap(const Image& lq, const Image& donor_reference, const RestorationRequest& base,
                const ModelBundle& model);

struct SweepRequest {
    std::string id;
    RestorationRequest request;
    std::optional<Image> ground_truth;
};

struct SweepCell {
    std::string request_id;
    GuidanceWeights weights;
    std::string image_path;
    double psnr_db;        // NaN without ground truth
    double ssim_score;     // NaN without ground truth
    double identity_dist;  // NaN without ground truth
};

// Runs restore for every (request, weights) pair, saving one image per cell
// under out_dir and returning |grid| x |requests| rows in grid-major order.
std::vector<SweepCell> lambda_sweep(const std::vector<SweepRequest>& requests,
                                    const std::vector<GuidanceWeights>& grid,
                                    const ModelBundle& model, const std::string& out_dir);

void write_sweep_report(const std::vector<SweepCell>& cells, const std::string& jsonl_path);

}  // namespace visage
