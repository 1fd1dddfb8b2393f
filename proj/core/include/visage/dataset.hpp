#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "visage/degradation.hpp"
#include "visage/manifest.hpp"

namespace visage {

// ---------------------------------------------------------------------------
// Toy dataset generation
// ---------------------------------------------------------------------------

// Renders n_identities x images_per_identity procedural faces of the given
// square size under out_dir/images/, writes out_dir/dataset.jsonl, and
// returns the records.  Pure function of the seed.
std::vector<ImageRecord> generate_toy_dataset(int n_identities, int images_per_identity,
                                              int size, std::uint64_t seed,
                                              const std::string& out_dir);

// ---------------------------------------------------------------------------
// Curation
// ---------------------------------------------------------------------------

struct CurationPolicy {
    int min_resolution = 512;       // minimum of height and width
    int min_images_per_identity = 2;
    // Low-quality/outlier hook: images whose pixel standard deviation falls
    // below this are dropped (0 disables the check).
    double min_pixel_stddev = 0.0;

    void validate() const;
};

struct CurationExclusion {
    std::string id;      // image id, or identity id for group-level exclusions
    std::string reason;  // "unreadable" | "below-min-resolution" | "low-variance" |
                         // "identity-below-min-images"
};

struct CurationResult {
    std::vector<GroupRecord> groups;  // sorted by identity, images sorted by id
    std::vector<CurationExclusion> excluded;
};

// Applies the policy to a generated dataset.  `base_dir` resolves relative
// image paths.  Unreadable images are recorded and skipped, never fatal.
CurationResult curate(const std::vector<ImageRecord>& records, const CurationPolicy& policy,
                      const std::string& base_dir);

// Identity-disjoint split.  The test side receives round(fraction * n)
// identities, clamped to [1, n-1].  Deterministic in the seed.
void split_identities(const std::vector<GroupRecord>& groups, double test_fraction,
                      std::uint64_t seed, std::vector<GroupRecord>* train,
                      std::vector<GroupRecord>* test);

// Uniform draw of a same-group image id different from target_id.
std::string pair_reference(const GroupRecord& group, const std::string& target_id, Rng& rng);

// ---------------------------------------------------------------------------
// Sample synthesis
// ---------------------------------------------------------------------------

struct SynthOptions {
    DegradationParams degradation;
    std::uint64_t seed = 0;
    // How many independently degraded LQ variants to make per target image.
    int variants_per_image = 1;
    double pos_thr = 0.6;
    double neg_thr = 0.4;
};

// For every image in every group: degrade the HQ into one or more LQ variants
// under out_dir/lq/, pair a same-identity reference, build the prompt triple
// from the manifest labels, and return the sample records.
std::vector<SampleRecord> synthesize_samples(const std::vector<GroupRecord>& groups,
                                             const std::vector<ImageRecord>& labels,
                                             const SynthOptions& opt,
                                             const std::string& base_dir,
                                             const std::string& out_dir);

// n heavily degraded toy images paired with the canonical negative-quality
// prompt, written under out_dir/negatives/.
std::vector<NegativeQualityRecord> make_negative_quality_set(
    const std::vector<ImageRecord>& source, int n, const DegradationParams& params,
    std::uint64_t seed, const std::string& base_dir, const std::string& out_dir);

}  // namespace visage
