#include "visage/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "visage/diffusion.hpp"
#include "visage/errors.hpp"
#include "visage/image.hpp"
#include "visage/rng.hpp"

namespace visage {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using nn::Var;

void StageConfig::validate() const {
    if (stage != 1 && stage != 2) throw InvalidArgument("training: stage must be 1 or 2");
    if (!(lr > 0.0)) throw InvalidArgument("training: lr must be positive");
    if (batch_size < 1) throw InvalidArgument("training: batch_size must be >= 1");
    if (max_steps < 0) throw InvalidArgument("training: max_steps must be >= 0");
    if (negative_mix_ratio < 0.0 || negative_mix_ratio > 1.0) {
        throw InvalidArgument("training: negative_mix_ratio must be in [0,1]");
    }
    if (prompt_dropout_p < 0.0 || prompt_dropout_p > 1.0) {
        throw InvalidArgument("training: prompt_dropout_p must be in [0,1]");
    }
    if (checkpoint_every < 0) throw InvalidArgument("training: checkpoint_every must be >= 0");
}

StageConfig StageConfig::from_config(const Config& cfg, int stage) {
    StageConfig sc;
    sc.stage = stage;
    const std::string p = "training.stage" + std::to_string(stage);
    sc.lr = cfg.get_double(p + ".lr", sc.lr);
    sc.batch_size = cfg.get_int(p + ".batch_size", sc.batch_size);
    sc.max_steps = cfg.get_int(p + ".max_steps", sc.max_steps);
    sc.negative_mix_ratio = cfg.get_double(p + ".negative_mix_ratio", sc.negative_mix_ratio);
    sc.prompt_dropout_p = cfg.get_double(p + ".prompt_dropout_p", sc.prompt_dropout_p);
    sc.checkpoint_every = cfg.get_int(p + ".checkpoint_every", sc.checkpoint_every);
    sc.seed = static_cast<std::uint64_t>(cfg.get_int(p + ".seed", static_cast<long long>(sc.seed)));
    if (stage == 2) sc.train_lca_in_stage2 = cfg.get_bool(p + ".train_lca", false);
    sc.validate();
    return sc;
}

std::vector<std::string> StageConfig::trainable_groups() const {
    if (stage == 1) return {"lca"};
    std::vector<std::string> g{"rca", "rlf", "id_proj"};
    if (train_lca_in_stage2) g.push_back("lca");
    return g;
}

double trainable_grad_norm(const nn::ParamRegistry& params) {
    double acc = 0.0;
    for (const auto& var : params.all()) {
        if (!var->trainable || !var->has_grad()) continue;
        for (double g : var->grad.data) acc += g * g;
    }
    return std::sqrt(acc);
}

void adam_step(nn::ParamRegistry& params, OptimState& opt, double lr, double beta1, double beta2,
               double eps) {
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.t));
    for (const auto& var : params.all()) {
        if (!var->trainable || !var->has_grad()) continue;
        AdamSlot& slot = opt.slots[var->name];
        if (slot.m.numel() == 0) {
            slot.m = Tensor::zeros(var->value.shape);
            slot.v = Tensor::zeros(var->value.shape);
        }
        for (std::size_t i = 0; i < var->value.data.size(); ++i) {
            const double g = var->grad.data[i];
            slot.m.data[i] = beta1 * slot.m.data[i] + (1.0 - beta1) * g;
            slot.v.data[i] = beta2 * slot.v.data[i] + (1.0 - beta2) * g * g;
            const double mhat = slot.m.data[i] / bc1;
            const double vhat = slot.v.data[i] / bc2;
            var->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

// Lazily loads images and caches their latents / identity embeddings; the toy
// corpus is small enough to keep everything resident.
class LatentStore {
public:
    LatentStore(const ModelBundle& model, std::string root)
        : model_(model), root_(std::move(root)) {}

    const Tensor& latent(const std::string& rel_path) {
        auto it = latents_.find(rel_path);
        if (it != latents_.end()) return it->second;
        Image img = load_image((fs::path(root_) / rel_path).string());
        return latents_.emplace(rel_path, model_.codec.encode(img)).first->second;
    }

    const Tensor& identity_raw(const std::string& rel_path) {
        auto it = ids_.find(rel_path);
        if (it != ids_.end()) return it->second;
        Image img = load_image((fs::path(root_) / rel_path).string());
        return ids_.emplace(rel_path, model_.identity.embed(img)).first->second;
    }

private:
    const ModelBundle& model_;
    std::string root_;
    std::map<std::string, Tensor> latents_;
    std::map<std::string, Tensor> ids_;
};

struct BatchItem {
    std::string id;
    const Tensor* z0 = nullptr;
    const Tensor* z_lq = nullptr;
    const Tensor* z_ref = nullptr;
    const Tensor* id_raw = nullptr;
    std::string prompt;
    int t = 0;
    Tensor noise;
};

void write_diagnostics(const std::string& out_dir, const StageConfig& sc, std::uint64_t step,
                       double loss, double grad_norm, const std::vector<BatchItem>& batch) {
    ordered_json j;
    j["stage"] = sc.stage;
    j["step"] = step;
    j["loss"] = loss;
    j["grad_norm"] = grad_norm;
    ordered_json ids = ordered_json::array();
    for (const auto& item : batch) ids.push_back(item.id);
    j["batch"] = ids;
    std::ofstream out(fs::path(out_dir) / "diagnostics.json");
    out << j.dump(2) << "\n";
}

TrainResult run_stage(ModelBundle& model, const StageConfig& sc,
                      const std::vector<SampleRecord>& samples,
                      const std::vector<NegativeQualityRecord>& negatives,
                      const std::string& data_root, const std::string& out_dir,
                      const std::string& resume_from) {
    sc.validate();
    if (samples.empty()) throw InvalidArgument("training: no samples");
    fs::create_directories(out_dir);
    const std::string stage_tag = "stage" + std::to_string(sc.stage);
    const bool with_reference = sc.stage == 2;

    // Freeze everything, then open the stage's parameter groups.
    model.params.set_trainable("", false);
    for (const std::string& g : sc.trainable_groups()) model.params.set_trainable(g, true);

    OptimState opt;
    std::uint64_t start_step = 0;
    if (!resume_from.empty()) {
        CheckpointData ckpt = load_checkpoint_file(resume_from);
        if (ckpt.stage != stage_tag) {
            throw ConfigConflict("training: resume checkpoint is " + ckpt.stage +
                                 ", expected " + stage_tag);
        }
        restore_model(model, ckpt, &opt);
        start_step = ckpt.step;
    }

    const std::string log_path = (fs::path(out_dir) / (stage_tag + "_loss.jsonl")).string();
    std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("training: cannot open loss log: " + log_path);

    LatentStore store(model, data_root);
    const std::string fallback_prompt = fallback_prompt_triple().pos;
    const int T = model.schedule.T;
    double last_loss = 0.0;

    const auto save = [&](std::uint64_t step, const std::string& path) {
        CheckpointData snap = snapshot_model(model, stage_tag, step, std::to_string(sc.seed), &opt);
        save_checkpoint_file(path, snap);
    };

    for (std::uint64_t step = start_step + 1; step <= static_cast<std::uint64_t>(sc.max_steps);
         ++step) {
        Rng rng = make_rng(derive_seed(sc.seed, step));

        // Draws happen in one fixed order per element so the stream never
        // depends on data contents.
        std::vector<BatchItem> batch;
        for (int b = 0; b < sc.batch_size; ++b) {
            const double u_neg = rand_uniform(rng);
            const bool negative = !negatives.empty() && u_neg < sc.negative_mix_ratio;
            const std::size_t idx =
                rand_index(rng, negative ? negatives.size() : samples.size());
            const double u_drop = rand_uniform(rng);
            const int t = static_cast<int>(rand_index(rng, static_cast<std::size_t>(T)));

            BatchItem item;
            item.t = t;
            if (negative) {
                const NegativeQualityRecord& rec = negatives[idx];
                item.id = rec.path;
                const Tensor& z = store.latent(rec.path);
                item.z0 = &z;
                item.z_lq = &z;
                item.prompt = rec.prompt;
            } else {
                const SampleRecord& rec = samples[idx];
                item.id = rec.id;
                item.z0 = &store.latent(rec.hq_path);
                item.z_lq = &store.latent(rec.lq_path);
                item.prompt = u_drop < sc.prompt_dropout_p ? fallback_prompt : rec.prompts.pos;
                if (with_reference) {
                    item.z_ref = &store.latent(rec.ref_path);
                    item.id_raw = &store.identity_raw(rec.ref_path);
                }
            }
            item.noise = Tensor::randn(item.z0->shape, rng);
            batch.push_back(std::move(item));
        }

        model.params.zero_grad();
        std::vector<Var> losses;
        for (const BatchItem& item : batch) {
            Tensor z_t = forward_diffuse(*item.z0, item.t, item.noise, model.schedule);
            ControlContext ctrl;
            ctrl.z_lq = *item.z_lq;
            if (item.z_ref) ctrl.z_ref = *item.z_ref;
            if (item.id_raw) ctrl.id_raw = *item.id_raw;
            Var pred = model.predict(nn::constant(z_t), item.t, model.prompt_tokens(item.prompt),
                                     &ctrl);
            losses.push_back(nn::mse(pred, nn::constant(item.noise)));
        }
        Var loss = nn::scale(nn::sum(losses), 1.0 / sc.batch_size);
        nn::backward(loss);
        const double loss_value = loss->value.data[0];
        const double grad_norm = trainable_grad_norm(model.params);

        if (!std::isfinite(loss_value) || !std::isfinite(grad_norm)) {
            write_diagnostics(out_dir, sc, step, loss_value, grad_norm, batch);
            throw InvalidState("training: non-finite loss at step " + std::to_string(step) +
                               "; diagnostics written to " + out_dir);
        }

        adam_step(model.params, opt, sc.lr);
        last_loss = loss_value;

        ordered_json line;
        line["step"] = step;
        line["loss"] = loss_value;
        line["grad_norm"] = grad_norm;
        log << line.dump() << "\n";

        if (sc.checkpoint_every > 0 && step % static_cast<std::uint64_t>(sc.checkpoint_every) == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "%s_step%06llu.ckpt", stage_tag.c_str(),
                          static_cast<unsigned long long>(step));
            save(step, (fs::path(out_dir) / name).string());
        }
    }
    log.flush();

    TrainResult result;
    result.checkpoint_path = (fs::path(out_dir) / (stage_tag + ".ckpt")).string();
    result.loss_log_path = log_path;
    result.steps_run = sc.max_steps > static_cast<int>(start_step)
                           ? static_cast<std::uint64_t>(sc.max_steps) - start_step
                           : 0;
    result.final_loss = last_loss;
    save(static_cast<std::uint64_t>(sc.max_steps), result.checkpoint_path);
    return result;
}

}  // namespace

TrainResult train_stage1(ModelBundle& model, const StageConfig& sc,
                         const std::vector<SampleRecord>& samples,
                         const std::vector<NegativeQualityRecord>& negatives,
                         const std::string& data_root, const std::string& out_dir,
                         const std::string& resume_from) {
    if (sc.stage != 1) throw InvalidArgument("training: stage-1 runner got stage " +
                                             std::to_string(sc.stage));
    return run_stage(model, sc, samples, negatives, data_root, out_dir, resume_from);
}

TrainResult train_stage2(ModelBundle& model, const StageConfig& sc,
                         const std::vector<SampleRecord>& samples,
                         const std::vector<NegativeQualityRecord>& negatives,
                         const std::string& data_root, const std::string& stage1_ckpt,
                         const std::string& out_dir, const std::string& resume_from) {
    if (sc.stage != 2) throw InvalidArgument("training: stage-2 runner got stage " +
                                             std::to_string(sc.stage));
    if (!model.adapter_cfg.enable_rca) {
        throw ConfigConflict("training: stage 2 requires adapters.enable_rca");
    }
    for (const SampleRecord& rec : samples) {
        if (rec.ref_path.empty() || rec.ref_id.empty()) {
            throw InvalidArgument("training: stage 2 requires a reference for sample " + rec.id);
        }
    }
    if (resume_from.empty()) {
        CheckpointData ckpt = load_checkpoint_file(stage1_ckpt);
        if (ckpt.stage != "stage1") {
            throw ConfigConflict("training: stage 2 must start from a stage-1 checkpoint, got " +
                                 ckpt.stage);
        }
        restore_model(model, ckpt, nullptr);
    }
    return run_stage(model, sc, samples, negatives, data_root, out_dir, resume_from);
}

}  // namespace visage
