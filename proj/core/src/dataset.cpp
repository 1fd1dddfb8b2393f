#include "visage/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "visage/digest.hpp"
#include "visage/errors.hpp"
#include "visage/toyface.hpp"

namespace fs = std::filesystem;

namespace visage {

namespace {

std::string identity_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "id%03d", index);
    return buf;
}

std::string image_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "img%02d", index);
    return buf;
}

double pixel_stddev(const Image& img) {
    double mean = 0.0;
    for (float v : img.data) mean += v;
    mean /= static_cast<double>(img.data.size());
    double var = 0.0;
    for (float v : img.data) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(img.data.size()));
}

// Deterministic Fisher-Yates built on the project rng helpers.
template <typename T>
void shuffle_indices(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rand_index(rng, i)]);
}

}  // namespace

std::vector<ImageRecord> generate_toy_dataset(int n_identities, int images_per_identity,
                                              int size, std::uint64_t seed,
                                              const std::string& out_dir) {
    if (n_identities < 1 || images_per_identity < 1)
        throw InvalidArgument("generate_toy_dataset: counts must be positive");
    if (size < 32) throw InvalidArgument("generate_toy_dataset: size must be >= 32");

    std::vector<ImageRecord> records;
    records.reserve(static_cast<std::size_t>(n_identities) * images_per_identity);
    for (int i = 0; i < n_identities; ++i) {
        const std::string ident = identity_name(i);
        fs::create_directories(fs::path(out_dir) / "images" / ident);
        Rng id_rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const ToyIdentitySpec spec = ToyIdentitySpec::draw(i, id_rng);
        for (int k = 0; k < images_per_identity; ++k) {
            Rng img_rng = make_rng(
                derive_seed(seed, (static_cast<std::uint64_t>(i) << 20) + 1000003ull + k));
            const ToyRenderJitter jitter = ToyRenderJitter::draw(img_rng);
            const Image img = render_toy_face(spec, jitter, size);

            ImageRecord r;
            r.id = ident + "_" + image_name(k);
            r.identity = ident;
            r.path = (fs::path("images") / ident / (image_name(k) + ".png")).string();
            r.attrs = toy_labels(spec, jitter);
            save_png(img, (fs::path(out_dir) / r.path).string());
            records.push_back(std::move(r));
        }
    }
    write_image_manifest((fs::path(out_dir) / "dataset.jsonl").string(), records);
    return records;
}

void CurationPolicy::validate() const {
    if (min_resolution < 1 || min_images_per_identity < 1 || min_pixel_stddev < 0.0)
        throw InvalidArgument("curation policy values must be positive");
}

CurationResult curate(const std::vector<ImageRecord>& records, const CurationPolicy& policy,
                      const std::string& base_dir) {
    policy.validate();
    CurationResult result;
    std::map<std::string, GroupRecord> by_identity;

    for (const auto& r : records) {
        Image img;
        try {
            img = load_image((fs::path(base_dir) / r.path).string());
        } catch (const IoError&) {
            result.excluded.push_back({r.id, "unreadable"});
            continue;
        }
        if (std::min(img.height, img.width) < policy.min_resolution) {
            result.excluded.push_back({r.id, "below-min-resolution"});
            continue;
        }
        if (policy.min_pixel_stddev > 0.0 && pixel_stddev(img) < policy.min_pixel_stddev) {
            result.excluded.push_back({r.id, "low-variance"});
            continue;
        }
        GroupRecord& g = by_identity[r.identity];
        g.identity = r.identity;
        g.image_ids.push_back(r.id);
        g.paths.push_back(r.path);
    }

    for (auto& [ident, group] : by_identity) {
        if (static_cast<int>(group.image_ids.size()) < policy.min_images_per_identity) {
            result.excluded.push_back({ident, "identity-below-min-images"});
            continue;
        }
        // Deterministic ordering inside the group.
        std::vector<std::size_t> order(group.image_ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return group.image_ids[a] < group.image_ids[b];
        });
        GroupRecord sorted;
        sorted.identity = group.identity;
        for (std::size_t i : order) {
            sorted.image_ids.push_back(group.image_ids[i]);
            sorted.paths.push_back(group.paths[i]);
        }
        result.groups.push_back(std::move(sorted));
    }
    // std::map iteration already sorts identities; keep it explicit anyway.
    std::sort(result.groups.begin(), result.groups.end(),
              [](const GroupRecord& a, const GroupRecord& b) { return a.identity < b.identity; });
    return result;
}

void split_identities(const std::vector<GroupRecord>& groups, double test_fraction,
                      std::uint64_t seed, std::vector<GroupRecord>* train,
                      std::vector<GroupRecord>* test) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InvalidArgument("split_identities: fraction must lie in (0,1)");
    const int n = static_cast<int>(groups.size());
    if (n < 2) throw InvalidArgument("split_identities: need at least 2 identities");
    if (!train || !test) throw InvalidArgument("split_identities: null outputs");

    std::vector<int> order(groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng = make_rng(seed);
    shuffle_indices(order, rng);

    int n_test = static_cast<int>(std::lround(test_fraction * n));
    n_test = std::clamp(n_test, 1, n - 1);

    train->clear();
    test->clear();
    for (int i = 0; i < n; ++i)
        (i < n_test ? test : train)->push_back(groups[static_cast<std::size_t>(order[i])]);
    auto by_identity = [](const GroupRecord& a, const GroupRecord& b) {
        return a.identity < b.identity;
    };
    std::sort(train->begin(), train->end(), by_identity);
    std::sort(test->begin(), test->end(), by_identity);
}

std::string pair_reference(const GroupRecord& group, const std::string& target_id, Rng& rng) {
    if (group.image_ids.size() < 2)
        throw InvalidState("pair_reference: group '" + group.identity +
                           "' has fewer than 2 images");
    std::vector<std::string> others;
    others.reserve(group.image_ids.size());
    for (const auto& id : group.image_ids)
        if (id != target_id) others.push_back(id);
    if (others.size() == group.image_ids.size())
        throw InvalidArgument("pair_reference: target '" + target_id + "' not in group");
    return others[rand_index(rng, others.size())];
}

std::vector<SampleRecord> synthesize_samples(const std::vector<GroupRecord>& groups,
                                             const std::vector<ImageRecord>& labels,
                                             const SynthOptions& opt,
                                             const std::string& base_dir,
                                             const std::string& out_dir) {
    if (opt.variants_per_image < 1)
        throw InvalidArgument("synthesize_samples: variants_per_image must be >= 1");
    opt.degradation.validate();

    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : labels) by_id[r.id] = &r;
    std::map<std::string, std::string> path_by_id;
    for (const auto& r : labels) path_by_id[r.id] = r.path;

    fs::create_directories(fs::path(out_dir) / "lq");
    // All manifest paths stay relative to base_dir so one root resolves them.
    const fs::path out_rel = fs::relative(fs::path(out_dir), fs::path(base_dir));

    std::vector<SampleRecord> samples;
    for (const auto& group : groups) {
        for (std::size_t k = 0; k < group.image_ids.size(); ++k) {
            const std::string& target_id = group.image_ids[k];
            auto it = by_id.find(target_id);
            if (it == by_id.end())
                throw NotFound("synthesize_samples: no labels for image '" + target_id + "'");
            const ImageRecord& label = *it->second;
            const Image hq = load_image((fs::path(base_dir) / label.path).string());

            for (int v = 0; v < opt.variants_per_image; ++v) {
                const std::string sample_id = target_id + "_v" + std::to_string(v);
                Rng rng = make_rng(derive_seed(opt.seed, fnv1a64(sample_id)));

                SampleRecord s;
                s.id = sample_id;
                s.identity = group.identity;
                s.hq_path = label.path;
                const Image lq = degrade(hq, opt.degradation, rng, &s.degradation);
                const std::string lq_file = sample_id + ".jpg";
                save_jpeg(lq, (fs::path(out_dir) / "lq" / lq_file).string());
                s.lq_path = (out_rel / "lq" / lq_file).lexically_normal().string();

                s.ref_id = pair_reference(group, target_id, rng);
                s.ref_path = path_by_id.at(s.ref_id);
                s.attrs = label.attrs;
                s.prompts = build_prompt_triple(label.attrs, opt.pos_thr, opt.neg_thr);
                samples.push_back(std::move(s));
            }
        }
    }
    return samples;
}

std::vector<NegativeQualityRecord> make_negative_quality_set(
    const std::vector<ImageRecord>& source, int n, const DegradationParams& params,
    std::uint64_t seed, const std::string& base_dir, const std::string& out_dir) {
    if (n < 0) throw InvalidArgument("make_negative_quality_set: n must be >= 0");
    std::vector<NegativeQualityRecord> records;
    if (n == 0) return records;
    if (source.empty())
        throw InvalidArgument("make_negative_quality_set: empty source dataset");
    params.validate();

    fs::create_directories(fs::path(out_dir) / "negatives");
    const fs::path out_rel = fs::relative(fs::path(out_dir), fs::path(base_dir));
    Rng pick_rng = make_rng(derive_seed(seed, 0x6e656761ull));
    for (int i = 0; i < n; ++i) {
        const ImageRecord& src = source[rand_index(pick_rng, source.size())];
        const Image hq = load_image((fs::path(base_dir) / src.path).string());
        Rng rng = make_rng(derive_seed(seed, 0xba000000ull + static_cast<std::uint64_t>(i)));
        const Image bad = degrade(hq, params, rng);

        char name[32];
        std::snprintf(name, sizeof(name), "neg_%05d.png", i);
        save_png(bad, (fs::path(out_dir) / "negatives" / name).string());

        NegativeQualityRecord r;
        r.path = (out_rel / "negatives" / name).lexically_normal().string();
        r.prompt = kNegativeQualityPrompt;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace visage
