#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "test_util.hpp"
#include "visage/adapters.hpp"
#include "visage/backbone.hpp"
#include "visage/blocks.hpp"
#include "visage/errors.hpp"

using namespace visage;
using nn::Var;
using vtest::rand_tensor;

namespace {

BackboneConfig small_topology() {
    BackboneConfig t;
    t.latent_channels = 6;
    t.base_channels = 8;
    t.scale_multipliers = {1, 2};
    t.text_dim = 16;
    t.time_dim = 16;
    return t;
}

// A full module set over one registry, mirroring how the bundle wires them.
struct Rig {
    BackboneConfig topo = small_topology();
    AdapterConfig acfg;
    nn::ParamRegistry reg;
    std::unique_ptr<Backbone> trunk;
    std::unique_ptr<LqControlAdapter> lca;
    std::unique_ptr<RefControlAdapter> rca;
    std::unique_ptr<RefLqFusion> rlf;
    std::unique_ptr<IdentityProjection> proj;

    explicit Rig(AdapterConfig cfg = AdapterConfig{}, std::uint64_t seed = 77) : acfg(cfg) {
        acfg.identity_dim = 24;
        acfg.normalize();
        Rng r1 = make_rng(derive_seed(seed, 1));
        Rng r2 = make_rng(derive_seed(seed, 2));
        Rng r3 = make_rng(derive_seed(seed, 3));
        Rng r4 = make_rng(derive_seed(seed, 4));
        Rng r5 = make_rng(derive_seed(seed, 5));
        trunk = std::make_unique<Backbone>(topo, reg, "backbone", r1);
        lca = std::make_unique<LqControlAdapter>(topo, acfg, reg, "lca", r2);
        rca = std::make_unique<RefControlAdapter>(topo, acfg, reg, "rca", r3);
        rlf = std::make_unique<RefLqFusion>(topo.latent_channels, reg, "rlf", r4);
        proj = std::make_unique<IdentityProjection>(acfg.identity_dim, topo.time_dim, reg,
                                                    "id_proj", r5);
    }

    Var latent(std::uint64_t seed) const { return nn::leaf(rand_tensor({6, 8, 8}, seed, 0.5)); }
    Var tokens(std::uint64_t seed) const {
        return nn::constant(rand_tensor({4, topo.text_dim}, seed, 0.5));
    }
    Var id_vec(std::uint64_t seed) const {
        return nn::constant(rand_tensor({acfg.identity_dim}, seed, 0.5));
    }

    // Simulates training: fills every weight of the named module prefixes
    // with nonzero values (zero-projections included only if listed).
    void randomize_prefix(const std::string& prefix, std::uint64_t seed) {
        std::uint64_t k = 0;
        for (auto& p : reg.with_prefix(prefix))
            vtest::randomize(p->value, derive_seed(seed, ++k), 0.15);
    }
};

Tensor flatten_residuals(const ControlResiduals& r) {
    std::vector<double> all;
    for (const auto& s : r.scales)
        all.insert(all.end(), s->value.data.begin(), s->value.data.end());
    if (r.mid) all.insert(all.end(), r.mid->value.data.begin(), r.mid->value.data.end());
    return Tensor({static_cast<int>(all.size())}, all);
}

}  // namespace

TEST_CASE("norm_groups picks the largest divisor up to eight") {
    CHECK(nn::norm_groups(8) == 8);
    CHECK(nn::norm_groups(16) == 8);
    CHECK(nn::norm_groups(12) == 6);
    CHECK(nn::norm_groups(7) == 7);
    CHECK(nn::norm_groups(10) == 5);
    CHECK(nn::norm_groups(1) == 1);
    CHECK(nn::norm_groups(48) == 8);
    CHECK_THROWS_AS(nn::norm_groups(0), InvalidArgument);
}

TEST_CASE("sinusoidal timestep features") {
    Tensor e = nn::sinusoidal_embedding(0, 8);
    CHECK(e.shape == std::vector<int>{8});
    for (int i = 0; i < 4; ++i) CHECK(e.at(i) == doctest::Approx(0.0));   // sin half
    for (int i = 4; i < 8; ++i) CHECK(e.at(i) == doctest::Approx(1.0));   // cos half

    Tensor a = nn::sinusoidal_embedding(31, 16);
    Tensor b = nn::sinusoidal_embedding(32, 16);
    CHECK(max_abs_diff(a, b) > 0.0);
    for (double v : a.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(nn::sinusoidal_embedding(0, 7), InvalidArgument);
    CHECK_THROWS_AS(nn::sinusoidal_embedding(0, 0), InvalidArgument);
}

TEST_CASE("backbone config validation and attention defaults") {
    BackboneConfig t = small_topology();
    t.validate();
    CHECK(t.scales() == 2);
    CHECK(t.channels_at(0) == 8);
    CHECK(t.channels_at(1) == 16);
    // Empty flag list: attention at the two coarsest scales.
    CHECK(t.attention_at(0));
    CHECK(t.attention_at(1));
    BackboneConfig three = t;
    three.scale_multipliers = {1, 2, 4};
    CHECK_FALSE(three.attention_at(0));
    CHECK(three.attention_at(1));
    CHECK(three.attention_at(2));
    // Explicit flags win.
    three.cross_attention = {true, false, false};
    CHECK(three.attention_at(0));
    CHECK_FALSE(three.attention_at(2));

    BackboneConfig bad = t;
    bad.scale_multipliers = {1};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = t;
    bad.scale_multipliers = {1, 0};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = t;
    bad.cross_attention = {true};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    Config cfg = Config::from_json_text(R"({"backbone": {
        "latent_channels": 12, "base_channels": 4, "scale_multipliers": [1, 2, 2],
        "text_dim": 8, "time_dim": 8}})");
    BackboneConfig fc = BackboneConfig::from_config(cfg);
    CHECK(fc.latent_channels == 12);
    CHECK(fc.scales() == 3);
    CHECK(fc.channels_at(2) == 8);
}

TEST_CASE("backbone forward shapes and tap pyramid") {
    Rig rig;
    Var z = rig.latent(1);
    Var tok = rig.tokens(2);

    FeaturePyramid taps;
    Var eps = rig.trunk->forward(z, 3, tok, nullptr, &taps);
    CHECK(eps->value.shape == std::vector<int>{6, 8, 8});
    REQUIRE(taps.scales.size() == 2);
    CHECK(taps.scales[0]->value.shape == std::vector<int>{8, 8, 8});
    CHECK(taps.scales[1]->value.shape == std::vector<int>{16, 4, 4});
    REQUIRE(taps.mid);
    CHECK(taps.mid->value.shape == std::vector<int>{16, 4, 4});

    // Deterministic: same inputs, same output.
    Var eps2 = rig.trunk->forward(z, 3, tok);
    CHECK(eps->value.data == eps2->value.data);

    // Timestep and prompt both matter.
    CHECK(max_abs_diff(rig.trunk->forward(z, 4, tok)->value, eps->value) > 0.0);
    CHECK(max_abs_diff(rig.trunk->forward(z, 3, rig.tokens(9))->value, eps->value) > 0.0);
}

TEST_CASE("freeze flags flip trainability of the trunk only") {
    Rig rig;
    rig.trunk->set_frozen(rig.reg, true);
    CHECK(rig.trunk->frozen());
    for (const auto& p : rig.reg.with_prefix("backbone.")) CHECK_FALSE(p->trainable);
    for (const auto& p : rig.reg.with_prefix("lca.")) CHECK(p->trainable);
    rig.trunk->set_frozen(rig.reg, false);
    for (const auto& p : rig.reg.with_prefix("backbone.")) CHECK(p->trainable);
}

TEST_CASE("fresh adapters are exactly neutral") {
    Rig rig;
    // Simulate a partially trained adapter interior; only the zero-projected
    // outputs guard neutrality.
    rig.randomize_prefix("lca.enc", 100);
    rig.randomize_prefix("lca.mid", 101);
    rig.randomize_prefix("lca.stem", 102);
    rig.randomize_prefix("rca.enc", 103);
    rig.randomize_prefix("rlf.", 104);

    Var z = rig.latent(5);
    Var z_lq = rig.latent(6);
    Var z_ref = rig.latent(7);
    Var idv = rig.id_vec(8);
    Var tok = rig.tokens(9);

    FeaturePyramid taps;
    Var plain = rig.trunk->forward(z, 11, tok, nullptr, &taps);

    ControlResiduals res = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                        &z_ref, &idv, tok, 11, &taps);
    Tensor flat = flatten_residuals(res);
    for (double v : flat.data) CHECK(v == 0.0);

    Var controlled = rig.trunk->decode(rig.trunk->encode(z, 11, tok), &res);
    CHECK(max_abs_diff(controlled->value, plain->value) == 0.0);

    // Nudging one zero-projection weight breaks neutrality.
    rig.reg.find("lca.out0.w")->value.data[0] = 0.05;
    ControlResiduals res2 = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                         &z_ref, &idv, tok, 11, &taps);
    Var controlled2 = rig.trunk->decode(rig.trunk->encode(z, 11, tok), &res2);
    CHECK(max_abs_diff(controlled2->value, plain->value) > 0.0);
}

TEST_CASE("reference-free call degrades to the LQ-only path bitwise") {
    Rig rig;
    // Give every parameter nonzero values so the comparison is meaningful.
    std::uint64_t k = 0;
    for (auto& p : rig.reg.all()) vtest::randomize(p->value, derive_seed(42, ++k), 0.1);

    Var z = rig.latent(20), z_lq = rig.latent(21), tok = rig.tokens(22);
    FeaturePyramid taps;
    rig.trunk->forward(z, 5, tok, nullptr, &taps);

    auto direct = rig.lca->forward(z, z_lq, tok, 5, &taps, nullptr);
    ControlResiduals via_dual = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                             nullptr, nullptr, tok, 5, &taps);
    REQUIRE(via_dual.scales.size() == direct.residuals.scales.size());
    for (std::size_t s = 0; s < via_dual.scales.size(); ++s)
        CHECK(via_dual.scales[s]->value.data == direct.residuals.scales[s]->value.data);
    REQUIRE(via_dual.mid);
    CHECK(via_dual.mid->value.data == direct.residuals.mid->value.data);
}

TEST_CASE("severed exchange ignores the reference bitwise") {
    AdapterConfig severed;
    severed.enable_lr_exchange = false;
    Rig rig(severed);
    std::uint64_t k = 0;
    for (auto& p : rig.reg.all()) vtest::randomize(p->value, derive_seed(43, ++k), 0.1);

    Var z = rig.latent(30), z_lq = rig.latent(31), z_ref = rig.latent(32);
    Var idv = rig.id_vec(33), tok = rig.tokens(34);
    FeaturePyramid taps;
    rig.trunk->forward(z, 6, tok, nullptr, &taps);

    ControlResiduals with_ref = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                             &z_ref, &idv, tok, 6, &taps);
    ControlResiduals without = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                            nullptr, nullptr, tok, 6, &taps);
    REQUIRE(with_ref.scales.size() == without.scales.size());
    for (std::size_t s = 0; s < with_ref.scales.size(); ++s)
        CHECK(with_ref.scales[s]->value.data == without.scales[s]->value.data);
    CHECK(with_ref.mid->value.data == without.mid->value.data);
}

TEST_CASE("input contract violations") {
    Rig rig;
    Var z = rig.latent(40), z_lq = rig.latent(41), z_ref = rig.latent(42);
    Var idv = rig.id_vec(43), tok = rig.tokens(44);
    FeaturePyramid taps;
    rig.trunk->forward(z, 2, tok, nullptr, &taps);

    // Reference latent and identity vector travel together.
    CHECK_THROWS_AS(dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq, &z_ref,
                                 nullptr, tok, 2, &taps),
                    InvalidArgument);
    CHECK_THROWS_AS(dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq, nullptr,
                                 &idv, tok, 2, &taps),
                    InvalidArgument);

    // Taps enabled but absent.
    CHECK_THROWS_AS(rig.lca->forward(z, z_lq, tok, 2, nullptr, nullptr), InvalidArgument);
    CHECK_THROWS_AS(dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq, &z_ref,
                                 &idv, tok, 2, nullptr),
                    InvalidArgument);

    // Wrong-sized exchange feature list.
    std::vector<Var> short_list{rig.latent(45)};
    CHECK_THROWS_AS(rig.lca->forward(z, z_lq, tok, 2, &taps, &short_list), InvalidArgument);

    // Reference supplied while the branch is disabled entirely.
    AdapterConfig no_rca;
    no_rca.enable_rca = false;
    Rig off(no_rca);
    FeaturePyramid taps2;
    off.trunk->forward(z, 2, tok, nullptr, &taps2);
    CHECK_THROWS_AS(dual_forward(*off.lca, *off.rca, *off.rlf, *off.proj, z, z_lq, &z_ref,
                                 &idv, tok, 2, &taps2),
                    InvalidState);
    CHECK_THROWS_AS(off.rca->forward(z, nullptr, 2, {z, z}), InvalidState);

    // Exchange features handed to an adapter with the exchange disabled.
    AdapterConfig severed;
    severed.enable_lr_exchange = false;
    Rig sv(severed);
    FeaturePyramid taps3;
    sv.trunk->forward(z, 2, tok, nullptr, &taps3);
    std::vector<Var> fake{nn::constant(Tensor::zeros({8, 4, 4})),
                          nn::constant(Tensor::zeros({16, 4, 4}))};
    CHECK_THROWS_AS(sv.lca->forward(z, z_lq, tok, 2, &taps3, &fake), InvalidArgument);

    // Identity width mismatch.
    Var bad_id = nn::constant(rand_tensor({7}, 46));
    CHECK_THROWS_AS(rig.proj->project(bad_id), InvalidArgument);
}

TEST_CASE("interleaved schedule matches its factored closed-form passes") {
    Rig rig;
    std::uint64_t k = 0;
    for (auto& p : rig.reg.all()) vtest::randomize(p->value, derive_seed(91, ++k), 0.12);

    Var z = rig.latent(50), z_lq = rig.latent(51), z_ref = rig.latent(52);
    Var idv = rig.id_vec(53), tok = rig.tokens(54);
    const int t = 4;
    FeaturePyramid taps;
    rig.trunk->forward(z, t, tok, nullptr, &taps);

    // Reference pass through the library.
    ControlResiduals lib = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                        &z_ref, &idv, tok, t, &taps);

    // Manual mirror of the interleaved schedule via the block-level methods.
    const int S = rig.topo.scales();
    Var t_lq = rig.lca->embed_time(t);
    Var pooled = nn::mean_rows(tok);
    Var e_f = rig.proj->project(idv);
    Var t_ref = rig.rca->embed_time(t, &e_f);
    Var ref_tok = rig.rca->neutral_tokens();
    Var ref_pooled = nn::mean_rows(ref_tok);

    std::vector<Var> residuals, intermediates, emissions;
    Var x = rig.lca->stem(z, z_lq);
    Var g = rig.rca->stem(rig.rlf->fuse(z_lq, z_ref));
    for (int s = 0; s < S; ++s) {
        if (s > 0) {
            x = rig.lca->down(s - 1, x);
            x = nn::add(x, emissions[static_cast<std::size_t>(s - 1)]);
            g = rig.rca->down(s - 1, g);
        }
        x = rig.lca->run_block(s, x, t_lq, tok, pooled);
        x = rig.lca->apply_tap(s, x, &taps);
        intermediates.push_back(x);
        residuals.push_back(rig.lca->residual_at(s, x));
        g = rig.rca->run_block(s, g, t_ref, ref_tok, ref_pooled);
        g = nn::add(g, x);
        emissions.push_back(rig.rca->emit(s, g));
    }
    Var m = rig.lca->run_mid(nn::add(x, emissions.back()), t_lq, tok, pooled);
    Var mid_res = rig.lca->residual_at(S, m);

    REQUIRE(lib.scales.size() == residuals.size());
    for (int s = 0; s < S; ++s)
        CHECK(lib.scales[static_cast<std::size_t>(s)]->value.data ==
              residuals[static_cast<std::size_t>(s)]->value.data);
    CHECK(lib.mid->value.data == mid_res->value.data);

    // Fixed point, LQ side: feeding the realized emissions back through the
    // single-branch entry point reproduces the same residuals.
    auto closed = rig.lca->forward(z, z_lq, tok, t, &taps, &emissions);
    for (int s = 0; s < S; ++s)
        CHECK(closed.residuals.scales[static_cast<std::size_t>(s)]->value.data ==
              lib.scales[static_cast<std::size_t>(s)]->value.data);
    CHECK(closed.residuals.mid->value.data == lib.mid->value.data);

    // Fixed point, reference side: the realized intermediates regenerate the
    // realized emissions.
    Var fused = rig.rlf->fuse(z_lq, z_ref);
    auto regen = rig.rca->forward(fused, &e_f, t, intermediates, &tok);
    REQUIRE(regen.size() == emissions.size());
    for (std::size_t s = 0; s < regen.size(); ++s)
        CHECK(regen[s]->value.data == emissions[s]->value.data);
}

TEST_CASE("reference inputs steer the residuals once projections are live") {
    Rig rig;
    std::uint64_t k = 0;
    for (auto& p : rig.reg.all()) vtest::randomize(p->value, derive_seed(92, ++k), 0.12);

    Var z = rig.latent(60), z_lq = rig.latent(61);
    Var ref_a = rig.latent(62), ref_b = rig.latent(63);
    Var id_a = rig.id_vec(64), id_b = rig.id_vec(65);
    Var tok = rig.tokens(66);
    FeaturePyramid taps;
    rig.trunk->forward(z, 3, tok, nullptr, &taps);

    auto run = [&](Var* zr, Var* iv) {
        return flatten_residuals(dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                              zr, iv, tok, 3, &taps));
    };
    Tensor base = run(&ref_a, &id_a);
    CHECK(max_abs_diff(run(&ref_b, &id_a), base) > 0.0);  // reference pixels matter
    CHECK(max_abs_diff(run(&ref_a, &id_b), base) > 0.0);  // identity vector matters
    CHECK(max_abs_diff(run(nullptr, nullptr), base) > 0.0);

    // With the text flag on, the prompt reaches the reference branch too.
    AdapterConfig with_text;
    with_text.rca_text = true;
    Rig rt(with_text, 77);  // same init seed: identical parameter values
    std::uint64_t k2 = 0;
    for (auto& p : rt.reg.all()) vtest::randomize(p->value, derive_seed(92, ++k2), 0.12);
    FeaturePyramid taps2;
    rt.trunk->forward(z, 3, tok, nullptr, &taps2);
    Tensor with_text_res =
        flatten_residuals(dual_forward(*rt.lca, *rt.rca, *rt.rlf, *rt.proj, z, z_lq, &ref_a,
                                       &id_a, tok, 3, &taps2));
    CHECK(max_abs_diff(with_text_res, base) > 0.0);
}

TEST_CASE("fusion is order-sensitive and validates shapes") {
    Rig rig;
    std::uint64_t k = 0;
    for (auto& p : rig.reg.with_prefix("rlf.")) vtest::randomize(p->value, ++k, 0.2);

    Var a = rig.latent(70), b = rig.latent(71);
    Var ab = rig.rlf->fuse(a, b);
    CHECK(ab->value.shape == std::vector<int>{6, 8, 8});
    Var ba = rig.rlf->fuse(b, a);
    CHECK(max_abs_diff(ab->value, ba->value) > 0.0);

    Var small = nn::constant(rand_tensor({6, 4, 4}, 72));
    CHECK_THROWS_AS(rig.rlf->fuse(a, small), InvalidArgument);
    Var wrong = nn::constant(rand_tensor({3, 8, 8}, 73));
    CHECK_THROWS_AS(rig.rlf->fuse(wrong, wrong), InvalidArgument);
}

TEST_CASE("identity projection is affine") {
    Rig rig;
    Var x = rig.id_vec(80);
    Var y = rig.id_vec(81);
    Var zero = nn::constant(Tensor::zeros({rig.acfg.identity_dim}));

    Tensor fx = rig.proj->project(x)->value;
    Tensor fy = rig.proj->project(y)->value;
    Tensor fz = rig.proj->project(zero)->value;
    Var xy = nn::add(x, y);
    Tensor fxy = rig.proj->project(xy)->value;

    // f(x+y) - f(x) - f(y) + f(0) == 0 for affine maps.
    for (std::size_t i = 0; i < fx.numel(); ++i)
        CHECK(fxy.data[i] - fx.data[i] - fy.data[i] + fz.data[i] ==
              doctest::Approx(0.0).epsilon(1e-9));
    CHECK(fx.shape == std::vector<int>{rig.topo.time_dim});
}

TEST_CASE("gradients reach every module through the dual pass") {
    Rig rig;
    // Live projections so gradients flow across the exchange.
    std::uint64_t k = 0;
    for (auto& p : rig.reg.all()) vtest::randomize(p->value, derive_seed(93, ++k), 0.1);

    Tensor z_val = rand_tensor({6, 8, 8}, 90, 0.5);
    Tensor lq_val = rand_tensor({6, 8, 8}, 91, 0.5);
    Tensor ref_val = rand_tensor({6, 8, 8}, 92, 0.5);
    Tensor id_val = rand_tensor({24}, 93, 0.5);
    Tensor tok_val = rand_tensor({4, 16}, 94, 0.5);
    Tensor target = rand_tensor({6, 8, 8}, 95, 0.3);
    const int t = 3;

    auto forward_loss = [&]() -> Var {
        Var z = nn::constant(z_val), z_lq = nn::constant(lq_val);
        Var z_ref = nn::constant(ref_val), idv = nn::constant(id_val);
        Var tok = nn::constant(tok_val);
        FeaturePyramid taps;
        Backbone::Encoded enc = rig.trunk->encode(z, t, tok);
        ControlResiduals res = dual_forward(*rig.lca, *rig.rca, *rig.rlf, *rig.proj, z, z_lq,
                                            &z_ref, &idv, tok, t, &enc.taps);
        Var eps = rig.trunk->decode(enc, &res);
        return nn::mse(eps, nn::constant(target));
    };

    rig.reg.zero_grad();
    nn::backward(forward_loss());

    auto loss_value = [&]() {
        nn::NoGradGuard guard;
        return forward_loss()->value.at(0);
    };

    // One representative parameter from every module family.
    for (const char* name :
         {"lca.stem.w", "lca.enc1.res.conv1.w", "lca.mid.res.conv2.w", "lca.out0.w",
          "lca.out_mid.w", "rca.enc0.res.conv1.w", "rca.emit0.w", "rlf.proj.w", "id_proj.w",
          "backbone.dec0.res.conv1.w", "backbone.head.w"}) {
        Var p = rig.reg.find(name);
        REQUIRE(p->has_grad());
        auto rep = vtest::fd_check_sampled(p, loss_value, 6, 1e-5);
        INFO("param ", name, " max_rel=", rep.max_rel, " max_abs=", rep.max_abs);
        CHECK(rep.max_rel < 5e-3);
    }
}
