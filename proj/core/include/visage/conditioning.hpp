#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "visage/image.hpp"
#include "visage/tensor.hpp"

namespace visage {

// ---------------------------------------------------------------------------
// Attribute vocabulary: 28 face attributes, order significant (it is the
// rendering order inside prompt clauses and the line order of the shipped
// resource file).  The vocabulary is closed; unknown keys are rejected.
// ---------------------------------------------------------------------------

inline constexpr int kAttributeCount = 28;
const std::vector<std::string>& attribute_vocabulary();
int attribute_index(const std::string& name);  // throws InvalidArgument for unknown names

class AttributeVector {
public:
    // All confidences start at 0.5 ("uncertain": enters no prompt clause).
    AttributeVector();

    double get(const std::string& name) const;
    void set(const std::string& name, double value);  // value must be in [0,1]
    double at(int index) const { return values_[static_cast<std::size_t>(index)]; }
    void set_at(int index, double value);

    static AttributeVector from_map(const std::map<std::string, double>& m);
    std::map<std::string, double> to_map() const;

private:
    std::array<double, kAttributeCount> values_;
};

// ---------------------------------------------------------------------------
// Prompt builder
// ---------------------------------------------------------------------------

struct PromptTriple {
    std::string pos;
    std::string na;
    std::string nq;
};

// The fixed sentence templates.  pos and na share one rendered clause and
// differ only by the "not " fragment; nq is a constant sentence.
extern const char* const kNegativeQualityPrompt;
extern const char* const kEmptyClauseFallback;  // "a person"

// Renders the descriptive clause for the attributes above `pos_thr`
// (strictly).  Attributes below `neg_thr` (strictly) act as negated
// descriptors: currently only the person noun consults them (male below the
// negative threshold renders "woman").  Values in [neg_thr, pos_thr] are
// uncertain and appear nowhere.
std::string render_clause(const AttributeVector& attrs, double pos_thr = 0.6,
                          double neg_thr = 0.4);

PromptTriple build_prompt_triple(const AttributeVector& attrs, double pos_thr = 0.6,
                                 double neg_thr = 0.4);

// The prompt triple used when no attribute information is available (and as
// the prompt-dropout replacement): the empty-clause fallback sentence.
PromptTriple fallback_prompt_triple();

// ---------------------------------------------------------------------------
// Text encoding
// ---------------------------------------------------------------------------

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int context_length() const = 0;
    virtual int width() const = 0;
    // Deterministic [context_length, width] embedding; empty string rejected.
    virtual Tensor encode(const std::string& text) const = 0;
};

// Seeded token-hash embedder: each lowercase token hashes to a deterministic
// Gaussian vector, mixed with a position signature; sequences are padded or
// truncated to the context length.
class ToyTextEncoder final : public TextEncoder {
public:
    explicit ToyTextEncoder(std::uint64_t seed = 0, int context_length = 16, int width = 64);
    int context_length() const override { return context_length_; }
    int width() const override { return width_; }
    Tensor encode(const std::string& text) const override;

private:
    std::uint64_t seed_;
    int context_length_;
    int width_;
};

// Mean over token rows: the pooled conditioning vector for feature-wise
// modulation sites.
Tensor pool_embedding(const Tensor& embedding);

// ---------------------------------------------------------------------------
// Identity embedding
// ---------------------------------------------------------------------------

class IdentityEmbedder {
public:
    virtual ~IdentityEmbedder() = default;
    virtual int dim() const = 0;
    virtual Tensor embed(const Image& img) const = 0;  // [dim]
};

// Downsampled channel-statistics signature: the image is average-pooled to an
// 8x8 RGB thumbnail (192 values) and mean-centered.  Deterministic, and
// separates the procedural identities by construction (they differ in layout
// and palette).
class ToyIdentityEmbedder final : public IdentityEmbedder {
public:
    explicit ToyIdentityEmbedder(int grid = 8);
    int dim() const override { return grid_ * grid_ * 3; }
    Tensor embed(const Image& img) const override;

private:
    int grid_;
};

// ---------------------------------------------------------------------------
// Attribute classification
// ---------------------------------------------------------------------------

class AttributeClassifier {
public:
    virtual ~AttributeClassifier() = default;
    // `image_id` keys manifest-backed classifiers; pixel-based plug-ins may
    // ignore it.
    virtual AttributeVector classify(const std::string& image_id, const Image& img) const = 0;
};

// Toy classifier: returns the ground-truth labels recorded in the dataset
// manifest.  Unknown ids are a NotFound error.
class ManifestAttributeClassifier final : public AttributeClassifier {
public:
    explicit ManifestAttributeClassifier(std::map<std::string, AttributeVector> labels);
    AttributeVector classify(const std::string& image_id, const Image& img) const override;

private:
    std::map<std::string, AttributeVector> labels_;
};

AttributeVector classify_attributes(const std::string& image_id, const Image& img,
                                    const AttributeClassifier& classifier);

}  // namespace visage
