#include "visage/restore.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "visage/errors.hpp"
#include "visage/metrics.hpp"

namespace visage {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Image restore(const RestorationRequest& req, const ModelBundle& model) {
    if (req.steps < 0 || req.steps > model.schedule.T) {
        throw InvalidArgument("restore: steps must lie in [0, T]");
    }
    if (req.use_identity && req.use_reference && !req.reference) {
        throw InvalidArgument("restore: identity conditioning requires a reference image");
    }
    const bool want_ref = req.use_reference && req.reference.has_value();
    if (want_ref && !model.adapter_cfg.enable_rca) {
        throw ConfigConflict("restore: reference requested but the reference branch is disabled");
    }

    PromptTriple prompts =
        req.attributes ? build_prompt_triple(*req.attributes) : fallback_prompt_triple();
    nn::Var tok_pos = model.prompt_tokens(prompts.pos);
    nn::Var tok_nq = model.prompt_tokens(prompts.nq);
    nn::Var tok_na = model.prompt_tokens(prompts.na);

    ControlContext ctrl;
    ctrl.z_lq = model.codec.encode(req.lq);
    if (want_ref) {
        Image ref = *req.reference;
        if (!ref.same_shape(req.lq)) {
            ref = resize_bicubic(ref, req.lq.height, req.lq.width);
        }
        ctrl.z_ref = model.codec.encode(ref);
        if (req.use_identity) {
            ctrl.id_raw = model.identity.embed(ref);
        } else {
            ctrl.id_raw = Tensor::zeros({model.identity.dim()});
        }
    }

    GuidedDenoiser denoiser = [&](const Tensor& z_t, int t) {
        GuidedPredictionTriple triple;
        triple.eps_pos = model.predict_eps(z_t, t, tok_pos, &ctrl);
        triple.eps_nq = model.predict_eps(z_t, t, tok_nq, &ctrl);
        triple.eps_na = model.predict_eps(z_t, t, tok_na, &ctrl);
        return triple;
    };

    SampleOptions opt;
    opt.kind = req.sampler;
    opt.steps = req.steps;
    opt.guidance = req.guidance;
    opt.seed = req.seed;
    Tensor z0 = sample(denoiser, ctrl.z_lq.shape, model.schedule, opt);
    return model.codec.decode(z0);
}

Image face_swap(const Image& lq, const Image& donor_reference, const RestorationRequest& base,
                const ModelBundle& model) {
    RestorationRequest req = base;
    req.lq = lq;
    req.reference = donor_reference;
    req.use_reference = true;
    return restore(req, model);
}

std::vector<SweepCell> lambda_sweep(const std::vector<SweepRequest>& requests,
                                    const std::vector<GuidanceWeights>& grid,
                                    const ModelBundle& model, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<SweepCell> cells;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        for (const SweepRequest& sr : requests) {
            RestorationRequest req = sr.request;
            req.guidance = grid[gi];
            Image out = restore(req, model);

            char name[128];
            std::snprintf(name, sizeof name, "%s_cell%03zu.png", sr.id.c_str(), gi);
            const std::string path = (fs::path(out_dir) / name).string();
            save_png(out, path);

            SweepCell cell;
            cell.request_id = sr.id;
            cell.weights = grid[gi];
            cell.image_path = path;
            if (sr.ground_truth) {
                cell.psnr_db = psnr(out, *sr.ground_truth);
                cell.ssim_score = ssim(out, *sr.ground_truth);
                cell.identity_dist = identity_distance(out, *sr.ground_truth, model.identity);
            } else {
                cell.psnr_db = nan;
                cell.ssim_score = nan;
                cell.identity_dist = nan;
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

void write_sweep_report(const std::vector<SweepCell>& cells, const std::string& jsonl_path) {
    std::ofstream out(jsonl_path, std::ios::trunc);
    if (!out) throw IoError("sweep: cannot open " + jsonl_path);
    for (const SweepCell& cell : cells) {
        ordered_json line;
        line["request"] = cell.request_id;
        line["lambda_nq"] = cell.weights.lambda_nq;
        line["lambda_na"] = cell.weights.lambda_na;
        line["image"] = cell.image_path;
        line["psnr"] = std::isfinite(cell.psnr_db) ? ordered_json(cell.psnr_db) : ordered_json();
        line["ssim"] = std::isfinite(cell.ssim_score) ? ordered_json(cell.ssim_score)
                                                      : ordered_json();
        line["identity_distance"] =
            std::isfinite(cell.identity_dist) ? ordered_json(cell.identity_dist) : ordered_json();
        out << line.dump() << "\n";
    }
}

}  // namespace visage
