#include "visage/conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "visage/digest.hpp"
#include "visage/errors.hpp"
#include "visage/rng.hpp"

namespace visage {

namespace {

// How an attribute is rendered inside the clause grammar.
enum class Role {
    adjective,    // precedes the person noun ("a smiling man")
    noun_gender,  // selects man/woman/person
    has,          // joins the "who has ..." list
    wearing,      // joins the "wearing ..." list
};

struct AttrDef {
    const char* name;    // vocabulary key (closed set)
    Role role;
    const char* phrase;  // rendered fragment for has/wearing roles
};

// Order is significant: it is both the resource-file order and the order in
// which positive attributes are rendered within each grammar slot.
constexpr AttrDef kAttrs[kAttributeCount] = {
    {"black hair", Role::has, "black hair"},
    {"blond hair", Role::has, "blond hair"},
    {"blurry", Role::adjective, "blurry"},
    {"brown hair", Role::has, "brown hair"},
    {"eyeglasses", Role::has, "eyeglasses"},
    {"gray hair", Role::has, "gray hair"},
    {"heavy makeup", Role::has, "heavy makeup"},
    {"mouth slightly open", Role::has, "mouth slightly open"},
    {"mustache", Role::has, "a mustache"},
    {"big eyes", Role::has, "big eyes"},
    {"no beard", Role::has, "no beard"},
    {"receding hairline", Role::has, "a receding hairline"},
    {"sideburns", Role::has, "sideburns"},
    {"smiling", Role::adjective, "smiling"},
    {"straight hair", Role::has, "straight hair"},
    {"wearing earrings", Role::wearing, "earrings"},
    {"wearing hat", Role::wearing, "a hat"},
    {"male", Role::noun_gender, ""},
    {"wearing necklace", Role::wearing, "a necklace"},
    {"big nose", Role::has, "a big nose"},
    {"wearing lipstick", Role::wearing, "lipstick"},
    {"young", Role::adjective, "young"},
    {"wavy hair", Role::has, "wavy hair"},
    {"big lips", Role::has, "big lips"},
    {"bald", Role::adjective, "bald"},
    {"bangs", Role::has, "bangs"},
    {"pale skin", Role::has, "pale skin"},
    {"goatee", Role::has, "a goatee"},
};

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
        out += items[i];
    }
    return out;
}

const char* kPosPrefix =
    "A high quality, high resolution, realistic and extremely detailed image in the "
    "description of ";
const char* kNaPrefix =
    "A high quality, high resolution, realistic and extremely detailed image not in the "
    "description of ";

}  // namespace

const char* const kNegativeQualityPrompt =
    "A low quality, low resolution, over smooth and deformation image.";
const char* const kEmptyClauseFallback = "a person";

const std::vector<std::string>& attribute_vocabulary() {
    static const std::vector<std::string> vocab = [] {
        std::vector<std::string> v;
        v.reserve(kAttributeCount);
        for (const auto& a : kAttrs) v.emplace_back(a.name);
        return v;
    }();
    return vocab;
}

int attribute_index(const std::string& name) {
    for (int i = 0; i < kAttributeCount; ++i)
        if (name == kAttrs[i].name) return i;
    throw InvalidArgument("unknown attribute '" + name + "' (the vocabulary is closed)");
}

AttributeVector::AttributeVector() { values_.fill(0.5); }

double AttributeVector::get(const std::string& name) const {
    return values_[static_cast<std::size_t>(attribute_index(name))];
}

void AttributeVector::set(const std::string& name, double value) {
    set_at(attribute_index(name), value);
}

void AttributeVector::set_at(int index, double value) {
    if (index < 0 || index >= kAttributeCount)
        throw InvalidArgument("attribute index out of range");
    if (!(value >= 0.0 && value <= 1.0))
        throw InvalidArgument("attribute confidence must lie in [0,1]");
    values_[static_cast<std::size_t>(index)] = value;
}

AttributeVector AttributeVector::from_map(const std::map<std::string, double>& m) {
    AttributeVector v;
    for (const auto& [k, val] : m) v.set(k, val);
    return v;
}

std::map<std::string, double> AttributeVector::to_map() const {
    std::map<std::string, double> m;
    for (int i = 0; i < kAttributeCount; ++i) m[kAttrs[i].name] = values_[i];
    return m;
}

std::string render_clause(const AttributeVector& attrs, double pos_thr, double neg_thr) {
    if (!(neg_thr >= 0.0 && neg_thr <= pos_thr && pos_thr <= 1.0))
        throw InvalidArgument("prompt thresholds must satisfy 0 <= neg <= pos <= 1");

    std::vector<std::string> adjectives, has_list, wearing_list;
    // Noun from the gender attribute; its negative side is the one negated
    // descriptor the grammar uses.
    std::string noun = "person";
    for (int i = 0; i < kAttributeCount; ++i) {
        const double v = attrs.at(i);
        const AttrDef& def = kAttrs[i];
        if (def.role == Role::noun_gender) {
            if (v > pos_thr)
                noun = "man";
            else if (v < neg_thr)
                noun = "woman";
            continue;
        }
        if (v <= pos_thr) continue;  // negative and uncertain attributes stay out
        switch (def.role) {
            case Role::adjective: adjectives.push_back(def.phrase); break;
            case Role::has: has_list.push_back(def.phrase); break;
            case Role::wearing: wearing_list.push_back(def.phrase); break;
            case Role::noun_gender: break;
        }
    }

    if (adjectives.empty() && has_list.empty() && wearing_list.empty() && noun == "person")
        return kEmptyClauseFallback;

    std::string body;
    for (const auto& a : adjectives) body += a + " ";
    body += noun;
    if (!has_list.empty()) body += " who has " + join_list(has_list);
    if (!wearing_list.empty()) body += " wearing " + join_list(wearing_list);

    const char first = body.empty() ? 'p' : static_cast<char>(std::tolower(body[0]));
    const bool vowel =
        first == 'a' || first == 'e' || first == 'i' || first == 'o' || first == 'u';
    return (vowel ? "an " : "a ") + body;
}

PromptTriple build_prompt_triple(const AttributeVector& attrs, double pos_thr, double neg_thr) {
    const std::string clause = render_clause(attrs, pos_thr, neg_thr);
    PromptTriple t;
    t.pos = std::string(kPosPrefix) + clause + ".";
    t.na = std::string(kNaPrefix) + clause + ".";
    t.nq = kNegativeQualityPrompt;
    return t;
}

PromptTriple fallback_prompt_triple() {
    PromptTriple t;
    t.pos = std::string(kPosPrefix) + kEmptyClauseFallback + ".";
    t.na = std::string(kNaPrefix) + kEmptyClauseFallback + ".";
    t.nq = kNegativeQualityPrompt;
    return t;
}

// ---------------------------------------------------------------------------
// Toy text encoder
// ---------------------------------------------------------------------------

ToyTextEncoder::ToyTextEncoder(std::uint64_t seed, int context_length, int width)
    : seed_(seed), context_length_(context_length), width_(width) {
    if (context_length < 1 || width < 1)
        throw InvalidArgument("text encoder dimensions must be positive");
}

Tensor ToyTextEncoder::encode(const std::string& text) const {
    if (text.empty()) throw InvalidArgument("encode_text: empty string");

    // Lowercased alphanumeric tokens.
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);

    Tensor out({context_length_, width_});
    const int n = std::min<int>(static_cast<int>(tokens.size()), context_length_);
    for (int i = 0; i < n; ++i) {
        const std::uint64_t token_hash = fnv1a64(tokens[static_cast<std::size_t>(i)]);
        Rng token_rng = make_rng(derive_seed(seed_, token_hash));
        Rng pos_rng = make_rng(derive_seed(seed_ ^ 0x706f73ull, static_cast<std::uint64_t>(i)));
        for (int d = 0; d < width_; ++d)
            out.at(i, d) = rand_normal(token_rng) + 0.25 * rand_normal(pos_rng);
    }
    // Remaining rows stay zero (padding).
    return out;
}

Tensor pool_embedding(const Tensor& embedding) {
    if (embedding.rank() != 2) throw InvalidArgument("pool_embedding: expected [L,D]");
    const int l = embedding.shape[0], d = embedding.shape[1];
    Tensor out({d});
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < l; ++i) acc += embedding.at(i, j);
        out.at(j) = acc / l;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy identity embedder
// ---------------------------------------------------------------------------

ToyIdentityEmbedder::ToyIdentityEmbedder(int grid) : grid_(grid) {
    if (grid < 1) throw InvalidArgument("identity embedder grid must be positive");
}

Tensor ToyIdentityEmbedder::embed(const Image& img) const {
    if (img.height < grid_ || img.width < grid_)
        throw InvalidArgument("embed_identity: image smaller than pooling grid");
    Tensor out({dim()});
    // Block average pool to grid x grid, channel-major output.
    for (int gy = 0; gy < grid_; ++gy) {
        const int y0 = gy * img.height / grid_, y1 = (gy + 1) * img.height / grid_;
        for (int gx = 0; gx < grid_; ++gx) {
            const int x0 = gx * img.width / grid_, x1 = (gx + 1) * img.width / grid_;
            double acc[3] = {0, 0, 0};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    for (int c = 0; c < 3; ++c) acc[c] += img.at(y, x, c);
            const double cnt = static_cast<double>(y1 - y0) * (x1 - x0);
            for (int c = 0; c < 3; ++c)
                out.at((c * grid_ + gy) * grid_ + gx) = acc[c] / cnt;
        }
    }
    // Mean-center so global brightness shifts do not register as identity.
    double mean = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(out.numel());
    for (double& v : out.data) v -= mean;
    return out;
}

// ---------------------------------------------------------------------------
// Manifest-backed classifier
// ---------------------------------------------------------------------------

ManifestAttributeClassifier::ManifestAttributeClassifier(
    std::map<std::string, AttributeVector> labels)
    : labels_(std::move(labels)) {}

AttributeVector ManifestAttributeClassifier::classify(const std::string& image_id,
                                                      const Image&) const {
    auto it = labels_.find(image_id);
    if (it == labels_.end())
        throw NotFound("attribute classifier: unknown image id '" + image_id + "'");
    return it->second;
}

AttributeVector classify_attributes(const std::string& image_id, const Image& img,
                                    const AttributeClassifier& classifier) {
    return classifier.classify(image_id, img);
}

}  // namespace visage
