#include <doctest.h>

#include <cmath>
#include <map>

#include "test_util.hpp"
#include "visage/conditioning.hpp"
#include "visage/errors.hpp"

using namespace visage;

TEST_CASE("attribute vocabulary is closed and ordered") {
    const auto& vocab = attribute_vocabulary();
    CHECK(vocab.size() == kAttributeCount);
    CHECK(vocab[0] == "black hair");
    CHECK(attribute_index("black hair") == 0);
    CHECK(attribute_index("eyeglasses") == 4);
    for (int i = 0; i < kAttributeCount; ++i)
        CHECK(attribute_index(vocab[static_cast<std::size_t>(i)]) == i);
    CHECK_THROWS_AS(attribute_index("tattoo"), InvalidArgument);
}

TEST_CASE("attribute vector defaults, setters, round trip") {
    AttributeVector v;
    for (int i = 0; i < kAttributeCount; ++i) CHECK(v.at(i) == 0.5);
    v.set("smiling", 0.9);
    CHECK(v.get("smiling") == 0.9);
    v.set_at(0, 0.0);
    CHECK(v.get("black hair") == 0.0);
    CHECK_THROWS_AS(v.set("smiling", 1.5), InvalidArgument);
    CHECK_THROWS_AS(v.set("smiling", -0.1), InvalidArgument);
    CHECK_THROWS_AS(v.set("unknown attr", 0.5), InvalidArgument);
    CHECK_THROWS_AS(v.set_at(28, 0.5), InvalidArgument);

    std::map<std::string, double> m{{"male", 1.0}, {"bangs", 0.75}};
    AttributeVector w = AttributeVector::from_map(m);
    CHECK(w.get("male") == 1.0);
    CHECK(w.get("bangs") == 0.75);
    CHECK(w.get("smiling") == 0.5);
    auto back = w.to_map();
    CHECK(back.size() == kAttributeCount);
    CHECK(back.at("bangs") == 0.75);
}

TEST_CASE("prompt triple golden: worked example") {
    AttributeVector attrs;
    for (int i = 0; i < kAttributeCount; ++i) attrs.set_at(i, 0.2);
    attrs.set("smiling", 0.9);
    attrs.set("male", 0.8);
    attrs.set("black hair", 0.7);
    attrs.set("eyeglasses", 0.75);

    PromptTriple t = build_prompt_triple(attrs);
    CHECK(t.pos ==
          "A high quality, high resolution, realistic and extremely detailed image in the "
          "description of a smiling man who has black hair and eyeglasses.");
    CHECK(t.na ==
          "A high quality, high resolution, realistic and extremely detailed image not in "
          "the description of a smiling man who has black hair and eyeglasses.");
    CHECK(t.nq == "A low quality, low resolution, over smooth and deformation image.");
}

TEST_CASE("prompt fallback when nothing is confident") {
    AttributeVector flat;  // everything at the uncertain 0.5
    PromptTriple t = build_prompt_triple(flat);
    CHECK(t.pos ==
          "A high quality, high resolution, realistic and extremely detailed image in the "
          "description of a person.");
    PromptTriple f = fallback_prompt_triple();
    CHECK(f.pos == t.pos);
    CHECK(f.na == t.na);
    CHECK(f.nq == t.nq);
    CHECK(render_clause(flat) == std::string(kEmptyClauseFallback));
}

TEST_CASE("threshold boundaries are strict") {
    AttributeVector attrs;
    attrs.set("smiling", 0.6);  // exactly at pos_thr: excluded
    CHECK(render_clause(attrs) == "a person");
    attrs.set("smiling", 0.6000001);
    CHECK(render_clause(attrs) == "a smiling person");

    AttributeVector g;
    g.set("male", 0.4);  // exactly at neg_thr: still uncertain
    CHECK(render_clause(g) == "a person");
    g.set("male", 0.3999999);
    CHECK(render_clause(g) == "a woman");
    g.set("male", 0.61);
    CHECK(render_clause(g) == "a man");

    CHECK_THROWS_AS(render_clause(attrs, 0.4, 0.6), InvalidArgument);
    CHECK_THROWS_AS(render_clause(attrs, 1.2, 0.4), InvalidArgument);
    CHECK_THROWS_AS(render_clause(attrs, 0.6, -0.1), InvalidArgument);
    CHECK_THROWS_AS(build_prompt_triple(attrs, 0.3, 0.5), InvalidArgument);

    // Custom thresholds move the boundary.
    AttributeVector c;
    c.set("smiling", 0.55);
    CHECK(render_clause(c, 0.5, 0.3) == "a smiling person");
    CHECK(render_clause(c, 0.6, 0.4) == "a person");
}

TEST_CASE("clause grammar slots and list joining") {
    AttributeVector attrs;
    attrs.set("mustache", 1.0);
    CHECK(render_clause(attrs) == "a person who has a mustache");

    attrs.set("big nose", 1.0);
    attrs.set("wavy hair", 1.0);
    // has-list keeps vocabulary order: mustache (8), big nose (19), wavy hair (22).
    CHECK(render_clause(attrs) == "a person who has a mustache, a big nose and wavy hair");

    AttributeVector wear;
    wear.set("wearing hat", 0.9);
    wear.set("wearing lipstick", 0.9);
    CHECK(render_clause(wear) == "a person wearing a hat and lipstick");

    AttributeVector all;
    all.set("young", 0.9);
    all.set("male", 0.9);
    all.set("bangs", 0.9);
    all.set("wearing earrings", 0.9);
    CHECK(render_clause(all) == "a young man who has bangs wearing earrings");
}

TEST_CASE("toy text encoder") {
    ToyTextEncoder enc(7, 16, 64);
    CHECK(enc.context_length() == 16);
    CHECK(enc.width() == 64);

    Tensor a = enc.encode("a smiling man");
    CHECK(a.shape == std::vector<int>{16, 64});
    Tensor b = enc.encode("a smiling man");
    CHECK(a.data == b.data);

    // The negation token is visible to the encoder.
    PromptTriple t = fallback_prompt_triple();
    Tensor pos = enc.encode(t.pos);
    Tensor na = enc.encode(t.na);
    CHECK(max_abs_diff(pos, na) > 0.0);

    // Tokenization is case/punctuation insensitive.
    CHECK(max_abs_diff(enc.encode("Hello, World!"), enc.encode("hello world")) == 0.0);

    // Rows past the token count stay zero padding.
    Tensor two = enc.encode("one two");
    for (int i = 2; i < 16; ++i)
        for (int d = 0; d < 64; ++d) CHECK(two.at(i, d) == 0.0);

    // Seed changes the embedding.
    ToyTextEncoder enc2(8, 16, 64);
    CHECK(max_abs_diff(enc2.encode("a smiling man"), a) > 0.0);

    CHECK_THROWS_AS(enc.encode(""), InvalidArgument);
    CHECK_THROWS_AS(ToyTextEncoder(1, 0, 64), InvalidArgument);
}

TEST_CASE("pool_embedding is the row mean") {
    Tensor e({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    Tensor p = pool_embedding(e);
    CHECK(p.shape == std::vector<int>{2});
    CHECK(p.at(0) == doctest::Approx(3.0));
    CHECK(p.at(1) == doctest::Approx(4.0));
    CHECK_THROWS_AS(pool_embedding(Tensor::zeros({4})), InvalidArgument);
}

TEST_CASE("toy identity embedder") {
    ToyIdentityEmbedder emb(8);
    CHECK(emb.dim() == 192);

    Image a(32, 32), b(32, 32);
    Rng rng = make_rng(3);
    for (auto& v : a.data) v = static_cast<float>(rand_uniform(rng));
    for (auto& v : b.data) v = static_cast<float>(rand_uniform(rng));

    Tensor ea = emb.embed(a);
    CHECK(ea.shape == std::vector<int>{192});
    CHECK(ea.data == emb.embed(a).data);
    CHECK(max_abs_diff(ea, emb.embed(b)) > 0.0);

    // Mean-centering: uniform brightness shifts cancel.
    double s = 0.0;
    for (double v : ea.data) s += v;
    CHECK(std::abs(s) < 1e-9);
    Image bright = a;
    for (auto& v : bright.data) v = std::min(1.0f, v + 0.1f);
    // (values near 1 clamp, so only check a dim image shifts exactly)
    Image dim_img(32, 32);
    for (std::size_t i = 0; i < dim_img.data.size(); ++i) dim_img.data[i] = a.data[i] * 0.5f;
    Image dim_shift = dim_img;
    for (auto& v : dim_shift.data) v += 0.25f;
    CHECK(max_abs_diff(emb.embed(dim_img), emb.embed(dim_shift)) < 1e-6);

    CHECK_THROWS_AS(emb.embed(Image(4, 4)), InvalidArgument);
    CHECK_THROWS_AS(ToyIdentityEmbedder(0), InvalidArgument);
}

TEST_CASE("manifest-backed attribute classifier") {
    AttributeVector truth;
    truth.set("eyeglasses", 1.0);
    truth.set("smiling", 0.0);
    ManifestAttributeClassifier cls({{"img7", truth}});

    Image any(8, 8);
    AttributeVector got = classify_attributes("img7", any, cls);
    CHECK(got.get("eyeglasses") == 1.0);
    CHECK(got.get("smiling") == 0.0);
    CHECK(got.get("bangs") == 0.5);
    CHECK_THROWS_AS(classify_attributes("missing", any, cls), NotFound);

    // A pixel-based plug-in stores fractional confidences untouched.
    struct Half : AttributeClassifier {
        AttributeVector classify(const std::string&, const Image&) const override {
            AttributeVector v;
            v.set("smiling", 0.55);
            return v;
        }
    } half;
    CHECK(classify_attributes("any", any, half).get("smiling") == 0.55);
}
