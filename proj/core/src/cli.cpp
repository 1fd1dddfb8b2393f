#include "visage/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "visage/checkpoint.hpp"
#include "visage/dataset.hpp"
#include "visage/digest.hpp"
#include "visage/errors.hpp"
#include "visage/gallery.hpp"
#include "visage/metrics.hpp"
#include "visage/model.hpp"
#include "visage/restore.hpp"
#include "visage/rng.hpp"
#include "visage/training.hpp"

namespace visage {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// --------------------------------------------------------------------------
// Shared plumbing
// --------------------------------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;  // key=value overrides
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& common) {
    cmd->add_option("--config", common.config_path,
                    "Config file (JSON); defaults to $VISAGE_CONFIG when set");
    cmd->add_option("--set", common.sets, "Override a config key, e.g. --set diffusion.T=100");
    cmd->add_option("--out", common.out, "Output directory")->required();
}

Config effective_config(const CommonOpts& common) {
    Config cfg;
    std::string path = common.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("VISAGE_CONFIG")) path = env;
    }
    if (!path.empty()) cfg = Config::load_file(path);
    for (const std::string& kv : common.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw InvalidArgument("--set expects key=value, got: " + kv);
        }
        cfg.set_from_text(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

// Tracks explicit inputs and collects the output tree for the run manifest.
class RunLog {
public:
    RunLog(std::string subcommand, std::string out_dir)
        : subcommand_(std::move(subcommand)), out_dir_(std::move(out_dir)) {
        fs::create_directories(out_dir_);
    }

    void input(const std::string& path) {
        if (path.empty() || !fs::exists(path) || fs::is_directory(path)) return;
        inputs_[path] = digest_hex(fnv1a64_file(path));
    }

    void finalize(const Config& cfg) {
        cfg.save_file((fs::path(out_dir_) / "effective_config.json").string());

        ordered_json outputs;
        std::vector<std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(out_dir_)) {
            if (!entry.is_regular_file()) continue;
            const std::string rel = fs::relative(entry.path(), out_dir_).generic_string();
            if (rel == "run_manifest.json") continue;
            files.push_back(rel);
        }
        std::sort(files.begin(), files.end());
        for (const std::string& rel : files) {
            outputs[rel] = digest_hex(fnv1a64_file((fs::path(out_dir_) / rel).string()));
        }

        ordered_json manifest;
        manifest["subcommand"] = subcommand_;
        manifest["config_digest"] = cfg.digest();
        ordered_json inputs;
        for (const auto& [path, digest] : inputs_) inputs[path] = digest;
        manifest["inputs"] = inputs;
        manifest["outputs"] = outputs;
        std::ofstream out(fs::path(out_dir_) / "run_manifest.json");
        out << manifest.dump(2) << "\n";
    }

private:
    std::string subcommand_;
    std::string out_dir_;
    std::map<std::string, std::string> inputs_;
};

AttributeVector parse_attributes(const std::vector<std::string>& pairs) {
    AttributeVector attrs;
    for (const std::string& kv : pairs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument("attribute expects name=value, got: " + kv);
        }
        const std::string name = kv.substr(0, eq);
        const double value = std::stod(kv.substr(eq + 1));
        attrs.set(name, value);
    }
    return attrs;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> values;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        const double v = std::stod(token);
        if (v < 0.0) throw InvalidArgument("guidance grid values must be nonnegative");
        values.push_back(v);
    }
    if (values.size() < 1) throw InvalidArgument("guidance grid is empty");
    return values;
}

ModelBundle load_model(const Config& cfg, const std::string& ckpt_path, RunLog& log) {
    ModelBundle model = ModelBundle::build(cfg);
    if (!ckpt_path.empty()) {
        log.input(ckpt_path);
        CheckpointData ckpt = load_checkpoint_file(ckpt_path);
        restore_model(model, ckpt, nullptr);
    }
    return model;
}

// --------------------------------------------------------------------------
// Per-subcommand option bags
// --------------------------------------------------------------------------

struct GenDataOpts {
    CommonOpts common;
    int identities = 8;
    int images = 8;
    int size = 48;
    long long seed = 0;
};

struct CurateOpts {
    CommonOpts common;
    std::string data;
    std::string manifest = "dataset.jsonl";
};

struct PromptOpts {
    CommonOpts common;
    std::vector<std::string> attrs;
};

struct SynthOpts {
    CommonOpts common;
    std::string data;
    std::string dataset = "dataset.jsonl";
    std::string groups;
    long long seed = 0;
    int variants = 1;
    int negatives = 0;
};

struct TrainOpts {
    CommonOpts common;
    std::string data;
    std::string samples;
    std::string negatives;
    std::string init;    // stage-1 checkpoint (stage 2 only)
    std::string resume;  // same-stage checkpoint
};

struct RestoreOpts {
    CommonOpts common;
    std::string lq;
    std::string ref;
    std::string ckpt;
    std::vector<std::string> attrs;
    std::optional<double> lambda_nq, lambda_na;
    std::optional<int> steps;
    std::optional<long long> seed;
    std::string sampler;
    bool no_identity = false;
    bool no_reference = false;
};

struct SweepOpts {
    CommonOpts common;
    std::vector<std::string> lq;
    std::vector<std::string> gt;
    std::string ref;
    std::string ckpt;
    std::string grid = "0,0.5,1.0";
    std::optional<int> steps;
    std::optional<long long> seed;
};

struct EvalOpts {
    CommonOpts common;
    std::string samples;
    std::string data;
    std::string outputs;
};

struct GalleryOpts {
    CommonOpts common;
    std::string samples;
    std::string data;
    std::string no_ref_dir;
    std::string with_ref_dir;
    std::string title = "restoration gallery";
};

// --------------------------------------------------------------------------
// Subcommand bodies
// --------------------------------------------------------------------------

int run_gen_data(const GenDataOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("gen-data", o.common.out);
    generate_toy_dataset(o.identities, o.images, o.size,
                         static_cast<std::uint64_t>(o.seed), o.common.out);
    log.finalize(cfg);
    return 0;
}

int run_curate(const CurateOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("curate", o.common.out);
    const std::string manifest_path = (fs::path(o.data) / o.manifest).string();
    log.input(manifest_path);

    CurationPolicy policy;
    policy.min_resolution = cfg.get_int("curation.min_resolution", policy.min_resolution);
    policy.min_images_per_identity =
        cfg.get_int("curation.min_images_per_identity", policy.min_images_per_identity);
    policy.min_pixel_stddev = cfg.get_double("curation.min_pixel_stddev", policy.min_pixel_stddev);

    std::vector<ImageRecord> records = read_image_manifest(manifest_path);
    CurationResult result = curate(records, policy, o.data);
    write_group_manifest((fs::path(o.common.out) / "groups.jsonl").string(), result.groups);

    ordered_json excluded = ordered_json::array();
    for (const CurationExclusion& e : result.excluded) {
        excluded.push_back({{"id", e.id}, {"reason", e.reason}});
    }
    std::ofstream ex(fs::path(o.common.out) / "excluded.json");
    ex << excluded.dump(2) << "\n";

    std::cout << "kept " << result.groups.size() << " identities, excluded "
              << result.excluded.size() << " entries\n";
    log.finalize(cfg);
    return 0;
}

int run_prompts(const PromptOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("prompts", o.common.out);
    const double pos_thr = cfg.get_double("prompts.pos_threshold", 0.6);
    const double neg_thr = cfg.get_double("prompts.neg_threshold", 0.4);
    AttributeVector attrs = parse_attributes(o.attrs);
    PromptTriple triple = build_prompt_triple(attrs, pos_thr, neg_thr);

    ordered_json j;
    j["positive"] = triple.pos;
    j["negative_attribute"] = triple.na;
    j["negative_quality"] = triple.nq;
    std::ofstream out(fs::path(o.common.out) / "prompts.json");
    out << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    log.finalize(cfg);
    return 0;
}

int run_synth(const SynthOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("synth-lq", o.common.out);
    const std::string dataset_path = (fs::path(o.data) / o.dataset).string();
    const std::string groups_path = o.groups;
    log.input(dataset_path);
    log.input(groups_path);

    std::vector<ImageRecord> labels = read_image_manifest(dataset_path);
    std::vector<GroupRecord> groups = read_group_manifest(groups_path);

    SynthOptions opt;
    opt.degradation = DegradationParams::from_config(cfg);
    opt.seed = static_cast<std::uint64_t>(o.seed);
    opt.variants_per_image = o.variants;
    opt.pos_thr = cfg.get_double("prompts.pos_threshold", opt.pos_thr);
    opt.neg_thr = cfg.get_double("prompts.neg_threshold", opt.neg_thr);

    std::vector<SampleRecord> samples =
        synthesize_samples(groups, labels, opt, o.data, o.common.out);
    write_sample_manifest((fs::path(o.common.out) / "samples.jsonl").string(), samples);

    if (o.negatives > 0) {
        std::vector<NegativeQualityRecord> negs = make_negative_quality_set(
            labels, o.negatives, opt.degradation, derive_seed(opt.seed, 0x6e71), o.data,
            o.common.out);
        write_negative_manifest((fs::path(o.common.out) / "negatives.jsonl").string(), negs);
    }
    std::cout << "synthesized " << samples.size() << " samples\n";
    log.finalize(cfg);
    return 0;
}

int run_train(const TrainOpts& o, int stage) {
    Config cfg = effective_config(o.common);
    RunLog log(stage == 1 ? "train-stage1" : "train-stage2", o.common.out);
    log.input(o.samples);
    log.input(o.negatives);
    log.input(o.init);
    log.input(o.resume);

    std::vector<SampleRecord> samples = read_sample_manifest(o.samples);
    std::vector<NegativeQualityRecord> negatives;
    if (!o.negatives.empty()) negatives = read_negative_manifest(o.negatives);

    ModelBundle model = ModelBundle::build(cfg);
    StageConfig sc = StageConfig::from_config(cfg, stage);
    TrainResult result;
    if (stage == 1) {
        result = train_stage1(model, sc, samples, negatives, o.data, o.common.out, o.resume);
    } else {
        if (o.init.empty() && o.resume.empty()) {
            throw InvalidArgument("train-stage2 requires --init (stage-1 checkpoint) or --resume");
        }
        result = train_stage2(model, sc, samples, negatives, o.data, o.init, o.common.out,
                              o.resume);
    }
    std::cout << "steps " << result.steps_run << ", final loss " << result.final_loss << "\n"
              << "checkpoint: " << result.checkpoint_path << "\n";
    log.finalize(cfg);
    return 0;
}

void apply_restore_flags(Config& cfg, const RestoreOpts& o) {
    if (o.lambda_nq) cfg.set_double("guidance.lambda_nq", *o.lambda_nq);
    if (o.lambda_na) cfg.set_double("guidance.lambda_na", *o.lambda_na);
    if (o.steps) cfg.set_int("restore.steps", *o.steps);
    if (o.seed) cfg.set_int("restore.seed", *o.seed);
    if (!o.sampler.empty()) cfg.set_string("restore.sampler", o.sampler);
    if (o.no_identity) cfg.set_bool("restore.use_identity", false);
    if (o.no_reference) cfg.set_bool("restore.use_reference", false);
}

RestorationRequest build_request(const Config& cfg, const ModelBundle& model, const Image& lq,
                                 const std::optional<Image>& ref,
                                 const std::vector<std::string>& attr_pairs) {
    RestorationRequest req;
    req.lq = lq;
    req.reference = ref;
    req.guidance = model.guidance;
    req.steps = cfg.get_int("restore.steps", 0);
    req.seed = static_cast<std::uint64_t>(cfg.get_int("restore.seed", 0));
    req.use_identity = cfg.get_bool("restore.use_identity", true);
    req.use_reference = cfg.get_bool("restore.use_reference", true);
    if (!ref) {
        // No reference image: run reference-free. Identity conditioning is
        // derived from the reference, so it is moot without one.
        req.use_reference = false;
        req.use_identity = false;
    }
    req.sampler = sampler_kind_from_string(cfg.get_string("restore.sampler", "ddim"));
    if (!attr_pairs.empty()) req.attributes = parse_attributes(attr_pairs);
    return req;
}

int run_restore(const RestoreOpts& o, bool swap_mode) {
    Config cfg = effective_config(o.common);
    apply_restore_flags(cfg, o);
    RunLog log(swap_mode ? "swap" : "restore", o.common.out);
    log.input(o.lq);
    log.input(o.ref);

    ModelBundle model = load_model(cfg, o.ckpt, log);
    Image lq = load_image(o.lq);
    std::optional<Image> ref;
    if (!o.ref.empty()) ref = load_image(o.ref);
    if (swap_mode && !ref) throw InvalidArgument("swap requires --ref");

    RestorationRequest req = build_request(cfg, model, lq, ref, o.attrs);
    Image out = swap_mode ? face_swap(lq, *ref, req, model) : restore(req, model);
    const std::string name = swap_mode ? "swapped.png" : "restored.png";
    save_png(out, (fs::path(o.common.out) / name).string());
    log.finalize(cfg);
    return 0;
}

int run_sweep(const SweepOpts& o) {
    Config cfg = effective_config(o.common);
    if (o.steps) cfg.set_int("restore.steps", *o.steps);
    if (o.seed) cfg.set_int("restore.seed", *o.seed);
    RunLog log("sweep", o.common.out);
    for (const auto& p : o.lq) log.input(p);
    for (const auto& p : o.gt) log.input(p);
    log.input(o.ref);

    if (!o.gt.empty() && o.gt.size() != o.lq.size()) {
        throw InvalidArgument("sweep: --gt count must match --lq count");
    }
    ModelBundle model = load_model(cfg, o.ckpt, log);
    std::optional<Image> ref;
    if (!o.ref.empty()) ref = load_image(o.ref);

    std::vector<SweepRequest> requests;
    for (std::size_t i = 0; i < o.lq.size(); ++i) {
        SweepRequest sr;
        sr.id = fs::path(o.lq[i]).stem().string();
        sr.request = build_request(cfg, model, load_image(o.lq[i]), ref, {});
        if (!o.gt.empty()) sr.ground_truth = load_image(o.gt[i]);
        requests.push_back(std::move(sr));
    }

    const std::vector<double> values = parse_grid(o.grid);
    std::vector<GuidanceWeights> grid;
    for (double nq : values) {
        for (double na : values) grid.push_back(GuidanceWeights{nq, na});
    }

    std::vector<SweepCell> cells = lambda_sweep(requests, grid, model, o.common.out);
    write_sweep_report(cells, (fs::path(o.common.out) / "sweep.jsonl").string());
    std::cout << "sweep cells: " << cells.size() << "\n";
    log.finalize(cfg);
    return 0;
}

int run_eval(const EvalOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("eval", o.common.out);
    log.input(o.samples);

    std::vector<SampleRecord> records = read_sample_manifest(o.samples);
    ToyIdentityEmbedder embedder(cfg.get_int("identity.grid", 8));
    MetricReport report = evaluate_outputs(records, o.data, o.outputs, embedder, nullptr);
    write_report(report, (fs::path(o.common.out) / "report.jsonl").string(),
                 (fs::path(o.common.out) / "summary.txt").string());
    for (const auto& [name, value] : report.aggregate) {
        std::cout << name << ": " << value << "\n";
    }
    log.finalize(cfg);
    return 0;
}

int run_gallery(const GalleryOpts& o) {
    Config cfg = effective_config(o.common);
    RunLog log("gallery", o.common.out);
    log.input(o.samples);

    std::vector<SampleRecord> records = read_sample_manifest(o.samples);
    const fs::path assets = fs::path(o.common.out) / "assets";
    fs::create_directories(assets);

    const auto stage = [&](const std::string& src, const std::string& tag,
                           const std::string& id) -> std::string {
        if (src.empty() || !fs::exists(src)) return "";
        const std::string name = id + "_" + tag + fs::path(src).extension().string();
        fs::copy_file(src, assets / name, fs::copy_options::overwrite_existing);
        return "assets/" + name;
    };

    std::vector<GalleryRow> rows;
    for (const SampleRecord& rec : records) {
        GalleryRow row;
        row.id = rec.id;
        row.input = stage((fs::path(o.data) / rec.lq_path).string(), "input", rec.id);
        if (!o.no_ref_dir.empty()) {
            row.no_reference =
                stage((fs::path(o.no_ref_dir) / (rec.id + ".png")).string(), "noref", rec.id);
        }
        if (!o.with_ref_dir.empty()) {
            row.with_reference =
                stage((fs::path(o.with_ref_dir) / (rec.id + ".png")).string(), "ref", rec.id);
        }
        row.ground_truth = stage((fs::path(o.data) / rec.hq_path).string(), "gt", rec.id);
        rows.push_back(std::move(row));
    }
    write_gallery((fs::path(o.common.out) / "gallery.html").string(), o.title, rows);
    log.finalize(cfg);
    return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
    CLI::App app{"Multi-modal guided toy face restoration pipeline"};
    app.require_subcommand(1);

    GenDataOpts gen;
    CLI::App* c_gen = app.add_subcommand("gen-data", "Render the procedural toy face corpus");
    add_common(c_gen, gen.common);
    c_gen->add_option("--identities", gen.identities, "Number of identities");
    c_gen->add_option("--images", gen.images, "Images per identity");
    c_gen->add_option("--size", gen.size, "Square image side in pixels");
    c_gen->add_option("--seed", gen.seed, "Generation seed");

    CurateOpts cur;
    CLI::App* c_cur = app.add_subcommand("curate", "Filter the corpus and group it by identity");
    add_common(c_cur, cur.common);
    c_cur->add_option("--data", cur.data, "Dataset root directory")->required();
    c_cur->add_option("--manifest", cur.manifest, "Image manifest name inside --data");

    PromptOpts pr;
    CLI::App* c_pr = app.add_subcommand("prompts", "Render the guidance prompt triple");
    add_common(c_pr, pr.common);
    c_pr->add_option("--attr", pr.attrs, "Attribute value, e.g. --attr smiling=0.9");

    SynthOpts syn;
    CLI::App* c_syn = app.add_subcommand("synth-lq", "Degrade HQ images into training samples");
    add_common(c_syn, syn.common);
    c_syn->add_option("--data", syn.data, "Dataset root directory")->required();
    c_syn->add_option("--dataset", syn.dataset, "Image manifest name inside --data");
    c_syn->add_option("--groups", syn.groups, "Curated group manifest")->required();
    c_syn->add_option("--seed", syn.seed, "Degradation seed");
    c_syn->add_option("--variants", syn.variants, "LQ variants per image");
    c_syn->add_option("--negatives", syn.negatives, "Also make this many negative-quality images");

    TrainOpts tr1;
    CLI::App* c_tr1 = app.add_subcommand("train-stage1", "Train the LQ control branch");
    add_common(c_tr1, tr1.common);
    c_tr1->add_option("--data", tr1.data, "Root for manifest-relative paths")->required();
    c_tr1->add_option("--samples", tr1.samples, "Sample manifest")->required();
    c_tr1->add_option("--negatives", tr1.negatives, "Negative-quality manifest");
    c_tr1->add_option("--resume", tr1.resume, "Resume from a stage-1 checkpoint");

    TrainOpts tr2;
    CLI::App* c_tr2 =
        app.add_subcommand("train-stage2", "Train the reference branch, fusion and identity map");
    add_common(c_tr2, tr2.common);
    c_tr2->add_option("--data", tr2.data, "Root for manifest-relative paths")->required();
    c_tr2->add_option("--samples", tr2.samples, "Sample manifest")->required();
    c_tr2->add_option("--negatives", tr2.negatives, "Negative-quality manifest");
    c_tr2->add_option("--init", tr2.init, "Stage-1 checkpoint to start from");
    c_tr2->add_option("--resume", tr2.resume, "Resume from a stage-2 checkpoint");

    RestoreOpts res;
    CLI::App* c_res = app.add_subcommand("restore", "Restore one low-quality image");
    add_common(c_res, res.common);
    c_res->add_option("--lq", res.lq, "Low-quality input image")->required();
    c_res->add_option("--ref", res.ref, "Same-identity reference image");
    c_res->add_option("--ckpt", res.ckpt, "Checkpoint to load");
    c_res->add_option("--attr", res.attrs, "Attribute override, e.g. --attr male=0.9");
    c_res->add_option("--lambda-nq", res.lambda_nq, "Quality guidance weight");
    c_res->add_option("--lambda-na", res.lambda_na, "Attribute guidance weight");
    c_res->add_option("--steps", res.steps, "Sampler steps (0 = full schedule)");
    c_res->add_option("--seed", res.seed, "Sampling seed");
    c_res->add_option("--sampler", res.sampler, "ddim | ddpm");
    c_res->add_flag("--no-identity", res.no_identity, "Skip identity conditioning");
    c_res->add_flag("--no-reference", res.no_reference, "Ignore the reference branch");

    RestoreOpts swp;
    CLI::App* c_swp = app.add_subcommand("swap", "Restore guided by a different identity");
    add_common(c_swp, swp.common);
    c_swp->add_option("--lq", swp.lq, "Low-quality input image")->required();
    c_swp->add_option("--ref", swp.ref, "Donor reference image")->required();
    c_swp->add_option("--ckpt", swp.ckpt, "Checkpoint to load");
    c_swp->add_option("--attr", swp.attrs, "Attribute override");
    c_swp->add_option("--lambda-nq", swp.lambda_nq, "Quality guidance weight");
    c_swp->add_option("--lambda-na", swp.lambda_na, "Attribute guidance weight");
    c_swp->add_option("--steps", swp.steps, "Sampler steps (0 = full schedule)");
    c_swp->add_option("--seed", swp.seed, "Sampling seed");
    c_swp->add_option("--sampler", swp.sampler, "ddim | ddpm");

    SweepOpts swe;
    CLI::App* c_swe = app.add_subcommand("sweep", "Grid-sweep the guidance weights");
    add_common(c_swe, swe.common);
    c_swe->add_option("--lq", swe.lq, "Low-quality input image(s)")->required();
    c_swe->add_option("--gt", swe.gt, "Ground-truth image(s) aligned with --lq");
    c_swe->add_option("--ref", swe.ref, "Reference image applied to all inputs");
    c_swe->add_option("--ckpt", swe.ckpt, "Checkpoint to load");
    c_swe->add_option("--grid", swe.grid, "Comma-separated weight values");
    c_swe->add_option("--steps", swe.steps, "Sampler steps");
    c_swe->add_option("--seed", swe.seed, "Sampling seed");

    EvalOpts ev;
    CLI::App* c_ev = app.add_subcommand("eval", "Score restored outputs against ground truth");
    add_common(c_ev, ev.common);
    c_ev->add_option("--samples", ev.samples, "Sample manifest")->required();
    c_ev->add_option("--data", ev.data, "Root for manifest-relative paths")->required();
    c_ev->add_option("--outputs", ev.outputs, "Directory of restored <id>.png files")->required();

    GalleryOpts gal;
    CLI::App* c_gal = app.add_subcommand("gallery", "Build a static comparison gallery");
    add_common(c_gal, gal.common);
    c_gal->add_option("--samples", gal.samples, "Sample manifest")->required();
    c_gal->add_option("--data", gal.data, "Root for manifest-relative paths")->required();
    c_gal->add_option("--no-ref", gal.no_ref_dir, "Directory of no-reference outputs");
    c_gal->add_option("--with-ref", gal.with_ref_dir, "Directory of with-reference outputs");
    c_gal->add_option("--title", gal.title, "Gallery title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return 2;
    }

    try {
        if (c_gen->parsed()) return run_gen_data(gen);
        if (c_cur->parsed()) return run_curate(cur);
        if (c_pr->parsed()) return run_prompts(pr);
        if (c_syn->parsed()) return run_synth(syn);
        if (c_tr1->parsed()) return run_train(tr1, 1);
        if (c_tr2->parsed()) return run_train(tr2, 2);
        if (c_res->parsed()) return run_restore(res, false);
        if (c_swp->parsed()) return run_restore(swp, true);
        if (c_swe->parsed()) return run_sweep(swe);
        if (c_ev->parsed()) return run_eval(ev);
        if (c_gal->parsed()) return run_gallery(gal);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;  // unreachable with require_subcommand(1)
}

int cli_run(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("visage");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& s : full) argv.push_back(s.c_str());
    return cli_run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace visage
