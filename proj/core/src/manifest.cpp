#include "visage/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "visage/errors.hpp"

namespace visage {

// ordered_json keeps the written field order stable so manifests are
// byte-reproducible across runs.
using json = nlohmann::ordered_json;

namespace {

void write_jsonl(const std::string& path, const std::string& kind,
                 const std::vector<json>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("manifest: cannot write " + path);
    json header;
    header["schema_version"] = kManifestSchemaVersion;
    header["kind"] = kind;
    out << header.dump() << "\n";
    for (const auto& r : records) out << r.dump() << "\n";
    if (!out) throw IoError("manifest: write failed for " + path);
}

std::vector<json> read_jsonl(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("manifest: cannot open " + path);

    std::vector<json> records;
    std::string line;
    long line_no = 0;
    bool saw_header = false;
    while (true) {
        const int peeked = in.peek();
        if (peeked == std::char_traits<char>::eof()) break;
        ++line_no;
        if (!std::getline(in, line))
            throw ParseError("manifest: unreadable line in " + path, line_no);
        if (in.eof())
            // getline consumed the last bytes without seeing '\n'.
            throw ParseError("manifest: truncated final line in " + path, line_no);
        json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (rec.is_discarded())
            throw ParseError("manifest: malformed record in " + path, line_no);
        if (!saw_header) {
            if (!rec.contains("schema_version") || !rec["schema_version"].is_number_integer())
                throw ParseError("manifest: missing schema_version header in " + path, line_no);
            const int version = rec["schema_version"].get<int>();
            if (version != kManifestSchemaVersion)
                throw InvalidState("manifest: unsupported schema version " +
                                   std::to_string(version) + " in " + path + " (expected " +
                                   std::to_string(kManifestSchemaVersion) + ")");
            const std::string kind = rec.value("kind", "");
            if (kind != expected_kind)
                throw InvalidState("manifest: kind '" + kind + "' in " + path + ", expected '" +
                                   expected_kind + "'");
            saw_header = true;
            continue;
        }
        records.push_back(std::move(rec));
    }
    if (!saw_header) throw ParseError("manifest: empty file " + path, 1);
    return records;
}

json attrs_to_json(const AttributeVector& attrs) {
    json out = json::object();
    for (const auto& name : attribute_vocabulary()) out[name] = attrs.get(name);
    return out;
}

AttributeVector attrs_from_json(const json& j, const std::string& path, long record_index) {
    if (!j.is_object())
        throw ParseError("manifest: attrs must be an object in " + path, record_index);
    AttributeVector v;
    for (auto it = j.begin(); it != j.end(); ++it) v.set(it.key(), it.value().get<double>());
    return v;
}

[[noreturn]] void field_error(const std::string& path, std::size_t index, const char* field) {
    // Records start on line 2 (after the header).
    throw ParseError("manifest: missing or invalid field '" + std::string(field) + "' in " + path,
                     static_cast<long>(index) + 2);
}

template <typename T>
T get_field(const json& rec, const char* field, const std::string& path, std::size_t index) {
    auto it = rec.find(field);
    if (it == rec.end()) field_error(path, index, field);
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        field_error(path, index, field);
    }
}

}  // namespace

void write_image_manifest(const std::string& path, const std::vector<ImageRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["identity"] = r.identity;
        j["path"] = r.path;
        j["attrs"] = attrs_to_json(r.attrs);
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "images", lines);
}

std::vector<ImageRecord> read_image_manifest(const std::string& path) {
    std::vector<ImageRecord> out;
    const auto lines = read_jsonl(path, "images");
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        ImageRecord r;
        r.id = get_field<std::string>(j, "id", path, i);
        r.identity = get_field<std::string>(j, "identity", path, i);
        r.path = get_field<std::string>(j, "path", path, i);
        if (!j.contains("attrs")) field_error(path, i, "attrs");
        r.attrs = attrs_from_json(j["attrs"], path, static_cast<long>(i) + 2);
        out.push_back(std::move(r));
    }
    return out;
}

void write_group_manifest(const std::string& path, const std::vector<GroupRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        json j;
        j["identity"] = r.identity;
        j["image_ids"] = r.image_ids;
        j["paths"] = r.paths;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "groups", lines);
}

std::vector<GroupRecord> read_group_manifest(const std::string& path) {
    std::vector<GroupRecord> out;
    const auto lines = read_jsonl(path, "groups");
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        GroupRecord r;
        r.identity = get_field<std::string>(j, "identity", path, i);
        r.image_ids = get_field<std::vector<std::string>>(j, "image_ids", path, i);
        r.paths = get_field<std::vector<std::string>>(j, "paths", path, i);
        if (r.image_ids.size() != r.paths.size()) field_error(path, i, "paths");
        out.push_back(std::move(r));
    }
    return out;
}

void write_sample_manifest(const std::string& path, const std::vector<SampleRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        json j;
        j["id"] = r.id;
        j["identity"] = r.identity;
        j["hq_path"] = r.hq_path;
        j["lq_path"] = r.lq_path;
        j["ref_path"] = r.ref_path;
        j["ref_id"] = r.ref_id;
        j["swap_set"] = r.swap_set;
        j["attrs"] = attrs_to_json(r.attrs);
        j["prompt_pos"] = r.prompts.pos;
        j["prompt_na"] = r.prompts.na;
        j["prompt_nq"] = r.prompts.nq;
        j["deg_blur_sigma"] = r.degradation.blur_sigma;
        j["deg_scale_factor"] = r.degradation.scale_factor;
        j["deg_noise_sigma"] = r.degradation.noise_sigma;
        j["deg_jpeg_quality"] = r.degradation.jpeg_quality;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "samples", lines);
}

std::vector<SampleRecord> read_sample_manifest(const std::string& path) {
    std::vector<SampleRecord> out;
    const auto lines = read_jsonl(path, "samples");
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        SampleRecord r;
        r.id = get_field<std::string>(j, "id", path, i);
        r.identity = get_field<std::string>(j, "identity", path, i);
        r.hq_path = get_field<std::string>(j, "hq_path", path, i);
        r.lq_path = get_field<std::string>(j, "lq_path", path, i);
        r.ref_path = get_field<std::string>(j, "ref_path", path, i);
        r.ref_id = get_field<std::string>(j, "ref_id", path, i);
        r.swap_set = get_field<bool>(j, "swap_set", path, i);
        if (!j.contains("attrs")) field_error(path, i, "attrs");
        r.attrs = attrs_from_json(j["attrs"], path, static_cast<long>(i) + 2);
        r.prompts.pos = get_field<std::string>(j, "prompt_pos", path, i);
        r.prompts.na = get_field<std::string>(j, "prompt_na", path, i);
        r.prompts.nq = get_field<std::string>(j, "prompt_nq", path, i);
        r.degradation.blur_sigma = get_field<double>(j, "deg_blur_sigma", path, i);
        r.degradation.scale_factor = get_field<int>(j, "deg_scale_factor", path, i);
        r.degradation.noise_sigma = get_field<double>(j, "deg_noise_sigma", path, i);
        r.degradation.jpeg_quality = get_field<int>(j, "deg_jpeg_quality", path, i);
        out.push_back(std::move(r));
    }
    return out;
}

void write_negative_manifest(const std::string& path,
                             const std::vector<NegativeQualityRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        json j;
        j["path"] = r.path;
        j["prompt"] = r.prompt;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, "negatives", lines);
}

std::vector<NegativeQualityRecord> read_negative_manifest(const std::string& path) {
    std::vector<NegativeQualityRecord> out;
    const auto lines = read_jsonl(path, "negatives");
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        NegativeQualityRecord r;
        r.path = get_field<std::string>(j, "path", path, i);
        r.prompt = get_field<std::string>(j, "prompt", path, i);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace visage
