#pragma once

#include <string>
#include <vector>

#include "visage/conditioning.hpp"
#include "visage/degradation.hpp"

namespace visage {

// Line-delimited JSON manifests.  Line 1 is a header record carrying the
// schema version and the manifest kind; every following line is one record.
// Files always end with a newline — a missing final newline is treated as a
// truncated write and rejected with the offending line number.
inline constexpr int kManifestSchemaVersion = 1;

// One generated dataset image with its ground-truth labels.
struct ImageRecord {
    std::string id;        // unique image id, e.g. "id003_img05"
    std::string identity;  // identity id, e.g. "id003"
    std::string path;      // relative to the manifest directory
    AttributeVector attrs;
};

// One curated identity group (ids and paths are index-aligned).
struct GroupRecord {
    std::string identity;
    std::vector<std::string> image_ids;
    std::vector<std::string> paths;
};

// One training/eval sample: HQ target, synthesized LQ, optional reference.
struct SampleRecord {
    std::string id;
    std::string identity;
    std::string hq_path;
    std::string lq_path;
    std::string ref_path;  // empty = no reference
    std::string ref_id;
    bool swap_set = false;  // true when the reference identity deliberately differs
    AttributeVector attrs;
    PromptTriple prompts;
    DrawnDegradation degradation;
};

// One negative-quality training image (prompt is always the canonical
// negative-quality sentence).
struct NegativeQualityRecord {
    std::string path;
    std::string prompt;
};

void write_image_manifest(const std::string& path, const std::vector<ImageRecord>& records);
std::vector<ImageRecord> read_image_manifest(const std::string& path);

void write_group_manifest(const std::string& path, const std::vector<GroupRecord>& records);
std::vector<GroupRecord> read_group_manifest(const std::string& path);

void write_sample_manifest(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_sample_manifest(const std::string& path);

void write_negative_manifest(const std::string& path,
                             const std::vector<NegativeQualityRecord>& records);
std::vector<NegativeQualityRecord> read_negative_manifest(const std::string& path);

}  // namespace visage
