#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "tvase/model.hpp"

using namespace tvase;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

WeightStore<double> f64_store(const ModelWeights& w) { return w.store.cast<double>(); }

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// closed-form parameter count from the configured channel lists; kept
// independent of build()/count_params()
int64_t expected_params(const ModelConfig& c) {
    auto conv2d_p = [](int64_t cin, int64_t cout, int64_t kt, int64_t kf) {
        return cin * cout * kt * kf + cout;
    };
    auto bn_prelu_p = [](int64_t ch) { return 3 * ch; }; // gamma, beta, slope
    int64_t total = 0;
    for (int enc = 0; enc < 2; ++enc) {
        int64_t cin = 2;
        for (int i = 0; i < 4; ++i) {
            total += conv2d_p(cin, c.enc_channels[i], c.enc_kt, c.enc_kf) + bn_prelu_p(c.enc_channels[i]);
            cin = c.enc_channels[i];
        }
    }
    total += conv2d_p(2 * c.enc_channels[3], c.fuse_channels, c.enc_kt, c.enc_kf) +
             bn_prelu_p(c.fuse_channels);
    const int64_t width = c.latent_width();
    int64_t per_module = 0;
    per_module += width * c.tcm_channels[0] + c.tcm_channels[0] + bn_prelu_p(c.tcm_channels[0]);
    per_module += c.tcm_channels[0] * c.tcm_dw_kernel + c.tcm_channels[1] + bn_prelu_p(c.tcm_channels[1]);
    per_module += c.tcm_channels[1] * c.tcm_channels[2] + c.tcm_channels[2] + bn_prelu_p(c.tcm_channels[2]);
    per_module += c.attn_groups * 3 *
                  (c.attn_qkv_channels * c.attn_qkv_channels + c.attn_qkv_channels +
                   bn_prelu_p(c.attn_qkv_channels));
    per_module += width * width + width + bn_prelu_p(width);
    if (c.dkg == DkgVariant::non_separable) {
        per_module += c.latent_freq * (c.latent_channels * c.dkg_nonsep_channels + c.dkg_nonsep_channels);
    } else if (c.dkg == DkgVariant::separable) {
        per_module += width * c.dkg_k0_channels[0] + c.dkg_k0_channels[0] + bn_prelu_p(c.dkg_k0_channels[0]);
        per_module += c.dkg_k0_channels[0] * c.dkg_k0_channels[1] + c.dkg_k0_channels[1] +
                      bn_prelu_p(c.dkg_k0_channels[1]);
        per_module += c.dkg_k0_channels[1] * c.dkg_k0_channels[2] + c.dkg_k0_channels[2];
        per_module += width * c.dkg_ks_channels + c.dkg_ks_channels;
    }
    total += per_module * c.num_tvase;
    int64_t cin = c.latent_channels;
    for (int i = 0; i < 4; ++i) {
        total += conv2d_p(2 * cin, cin, 1, 1);                            // gate
        total += conv2d_p(cin, c.dec_channels[i], c.dec_kt, c.dec_kf);    // deconv
        if (i < 3) total += bn_prelu_p(c.dec_channels[i]);
        cin = c.dec_channels[i];
    }
    total += conv2d_p(c.final_channels, c.final_channels, c.dec_kt, c.dec_kf);
    return total;
}

} // namespace

TEST_CASE("build is deterministic and validates config") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::separable;
    ModelWeights a = build(cfg, 123);
    ModelWeights b = build(cfg, 123);
    REQUIRE(a.store.entries.size() == b.store.entries.size());
    for (size_t i = 0; i < a.store.entries.size(); ++i) {
        CHECK(a.store.entries[i].first == b.store.entries[i].first);
        CHECK(a.store.entries[i].second.data == b.store.entries[i].second.data);
    }
    ModelWeights c = build(cfg, 124);
    CHECK(a.store.get("enc_mic.0.conv.w").data != c.store.get("enc_mic.0.conv.w").data);
    CHECK(a.store.has("dec.final.conv.w"));

    ModelConfig bad;
    bad.attn_groups = 7; // does not divide 320
    CHECK_THROWS_AS(build(bad, 0), ValueError);
}

TEST_CASE("parameter counts: closed form, variants and DKG deltas") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::none;
    const int64_t none = count_params(build(cfg, 0));
    CHECK(none == expected_params(cfg));

    cfg.dkg = DkgVariant::non_separable;
    const int64_t nonsep = count_params(build(cfg, 0));
    CHECK(nonsep == expected_params(cfg));

    cfg.dkg = DkgVariant::separable;
    const int64_t sep = count_params(build(cfg, 0));
    CHECK(sep == expected_params(cfg));

    // per-group kernel conv adds 64*640+640 = 41600; x5 groups x4 modules
    CHECK(nonsep - none == 41600 * 5 * 4);
    // K0 chain + Ks convs: 130230 per module, plus BN+PReLU on the first two
    // K0 stages (240 + 60 per module)
    CHECK(sep - none == 130230 * 4 + 300 * 4);

    // buffers (BN running stats) are serialized but not counted
    ModelWeights w = build(cfg, 0);
    int64_t buffers = 0;
    for (const auto& row : param_report(w))
        if (row.buffer) buffers += row.numel;
    CHECK(buffers > 0);
}

TEST_CASE("encoder ladder shapes and zero-input behaviour") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 5);
    auto store = f64_store(w);
    Rng rng(17);
    auto spec = random_tensor({6, 2, 161}, rng);
    auto outs = encoder_forward(spec, store, "enc_mic", cfg);
    REQUIRE(outs.size() == 4);
    CHECK(outs[0].shape == std::vector<int64_t>{6, 16, 161});
    CHECK(outs[1].shape == std::vector<int64_t>{6, 32, 41});
    CHECK(outs[2].shape == std::vector<int64_t>{6, 64, 11});
    CHECK(outs[3].shape == std::vector<int64_t>{6, 64, 5});

    // zero input: each frame beyond the first sees the same all-zero history,
    // so outputs are frame-constant from frame kt-1 on
    Tensor<double> zeros({6, 2, 161});
    auto z = encoder_forward(zeros, store, "enc_mic", cfg);
    for (int64_t t = 2; t < 6; ++t)
        for (int64_t c = 0; c < 16; ++c)
            for (int64_t f = 0; f < 161; ++f) CHECK(z[0].at3(t, c, f) == z[0].at3(1, c, f));

    Tensor<double> wrong({6, 2, 129});
    CHECK_THROWS_AS(encoder_forward(wrong, store, "enc_mic", cfg), ShapeError);
}

TEST_CASE("fuse: shape, asymmetry, merge bijection") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 6);
    auto store = f64_store(w);
    Rng rng(3);
    auto em = random_tensor({5, 64, 5}, rng);
    auto ef = random_tensor({5, 64, 5}, rng);
    auto fused = fuse(em, ef, store, cfg);
    CHECK(fused.shape == std::vector<int64_t>{5, 320});
    auto swapped = fuse(ef, em, store, cfg);
    CHECK(fused.data != swapped.data);

    auto x = random_tensor({4, 64, 5}, rng);
    auto back = unmerge_freq_channels(merge_freq_channels(x), 64, 5);
    CHECK(back.data == x.data);
    // frequency-major blocks: block f holds the channels of frequency bin f
    auto merged = merge_freq_channels(x);
    CHECK(merged.at2(2, 3 * 64 + 10) == x.at3(2, 10, 3));
}

TEST_CASE("tcm: shape, residual path, bounded look-back") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 8);
    SUBCASE("zeroed convolutions reduce to the residual") {
        for (auto& [name, t] : w.store.entries)
            if (name.starts_with("tvase.0.tcm.") && name.ends_with(".conv.w"))
                std::fill(t.data.begin(), t.data.end(), 0.0f);
        auto store = f64_store(w);
        Rng rng(9);
        auto x = random_tensor({5, 320}, rng);
        auto y = tcm_forward(x, store, "tvase.0.tcm", cfg);
        CHECK(y.data == x.data);
    }
    SUBCASE("shape and two-frame look-back") {
        auto store = f64_store(w);
        Rng rng(10);
        auto x = random_tensor({7, 320}, rng);
        auto y = tcm_forward(x, store, "tvase.0.tcm", cfg);
        CHECK(y.shape == std::vector<int64_t>{7, 320});
        auto poked = x;
        for (int64_t c = 0; c < 320; ++c) poked.at2(4, c) += 1.0;
        auto y2 = tcm_forward(poked, store, "tvase.0.tcm", cfg);
        for (int64_t t = 0; t < 4; ++t)
            for (int64_t c = 0; c < 320; ++c) CHECK(y2.at2(t, c) == y.at2(t, c));
        bool changed = false;
        for (int64_t c = 0; c < 320; ++c) changed |= y2.at2(4, c) != y.at2(4, c);
        CHECK(changed);
    }
}

TEST_CASE("attention: single-frame case is the V projection") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 11);
    // make the output merge conv the identity (weight = I, PReLU slope = 1)
    auto& ow = const_cast<Tensor<float>&>(w.store.get("tvase.0.attn.out.conv.w"));
    std::fill(ow.data.begin(), ow.data.end(), 0.0f);
    for (int64_t i = 0; i < 320; ++i) ow.data[static_cast<size_t>((i * 320 + i))] = 1.0f;
    auto& ob = const_cast<Tensor<float>&>(w.store.get("tvase.0.attn.out.conv.b"));
    std::fill(ob.data.begin(), ob.data.end(), 0.0f);
    auto& oslope = const_cast<Tensor<float>&>(w.store.get("tvase.0.attn.out.prelu.slope"));
    std::fill(oslope.data.begin(), oslope.data.end(), 1.0f);

    auto store = f64_store(w);
    Rng rng(12);
    auto x = random_tensor({1, 320}, rng);
    auto y = attention_forward(x, store, "tvase.0.attn", cfg);
    // expected: per group, v = prelu(bn(conv(x_g))); softmax over one frame is 1
    for (int64_t g = 0; g < 5; ++g) {
        const std::string gp = "tvase.0.attn.g" + std::to_string(g);
        Tensor<double> xg({1, 64});
        for (int64_t c = 0; c < 64; ++c) xg.at2(0, c) = x.at2(0, g * 64 + c);
        ConvSpec s{64, 64, 1};
        auto v = oracle::conv1d(xg, s, store.get(gp + ".v.conv.w"), store.get(gp + ".v.conv.b"));
        auto vb = batchnorm_infer(v, store.get(gp + ".v.bn.gamma"), store.get(gp + ".v.bn.beta"),
                                  store.get(gp + ".v.bn.mean"), store.get(gp + ".v.bn.var"),
                                  cfg.bn_eps);
        auto vp = prelu(vb, store.get(gp + ".v.prelu.slope"));
        // the identity merge conv is still followed by its BN (gamma=1, var=1)
        const double bn_scale = 1.0 / std::sqrt(1.0 + cfg.bn_eps);
        for (int64_t c = 0; c < 64; ++c)
            CHECK(y.at2(0, g * 64 + c) ==
                  doctest::Approx(vp.at2(0, c) * bn_scale).epsilon(1e-9));
    }
}

TEST_CASE("attention matches a direct per-frame loop oracle") {
    ModelConfig cfg;
    cfg.attn_window = 4; // exercise window eviction within 7 frames
    ModelWeights w = build(cfg, 13);
    auto store = f64_store(w);
    Rng rng(14);
    auto x = random_tensor({7, 320}, rng);
    auto got = attention_forward(x, store, "tvase.0.attn", cfg);

    // oracle: full QKV via conv oracle, full score matrix through
    // masked_softmax, dense matmul, then the merge conv
    Tensor<double> cat({7, 320});
    for (int64_t g = 0; g < 5; ++g) {
        const std::string gp = "tvase.0.attn.g" + std::to_string(g);
        Tensor<double> xg({7, 64});
        for (int64_t t = 0; t < 7; ++t)
            for (int64_t c = 0; c < 64; ++c) xg.at2(t, c) = x.at2(t, g * 64 + c);
        ConvSpec s{64, 64, 1};
        auto proj = [&](const char* name) {
            auto p = oracle::conv1d(xg, s, store.get(gp + "." + name + ".conv.w"),
                                    store.get(gp + "." + name + ".conv.b"));
            auto pb = batchnorm_infer(p, store.get(gp + "." + name + ".bn.gamma"),
                                      store.get(gp + "." + name + ".bn.beta"),
                                      store.get(gp + "." + name + ".bn.mean"),
                                      store.get(gp + "." + name + ".bn.var"), cfg.bn_eps);
            return prelu(pb, store.get(gp + "." + name + ".prelu.slope"));
        };
        auto q = proj("q"), k = proj("k"), v = proj("v");
        Tensor<double> scores({7, 7});
        for (int64_t i = 0; i < 7; ++i)
            for (int64_t j = 0; j < 7; ++j) {
                double acc = 0;
                for (int64_t c = 0; c < 64; ++c) acc += q.at2(i, c) * k.at2(j, c);
                scores.at2(i, j) = acc / std::sqrt(64.0);
            }
        auto probs = oracle::masked_softmax(scores, cfg.attn_window);
        for (int64_t i = 0; i < 7; ++i)
            for (int64_t c = 0; c < 64; ++c) {
                double acc = 0;
                for (int64_t j = 0; j < 7; ++j) acc += probs.at2(i, j) * v.at2(j, c);
                cat.at2(i, g * 64 + c) = acc;
            }
    }
    ConvSpec os{320, 320, 1};
    auto merged = oracle::conv1d(cat, os, store.get("tvase.0.attn.out.conv.w"),
                                 store.get("tvase.0.attn.out.conv.b"));
    auto mb = batchnorm_infer(merged, store.get("tvase.0.attn.out.bn.gamma"),
                              store.get("tvase.0.attn.out.bn.beta"),
                              store.get("tvase.0.attn.out.bn.mean"),
                              store.get("tvase.0.attn.out.bn.var"), cfg.bn_eps);
    auto want = prelu(mb, store.get("tvase.0.attn.out.prelu.slope"));
    for (size_t i = 0; i < want.data.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
}

TEST_CASE("non-separable DKG kernels") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::non_separable;
    ModelWeights w = build(cfg, 15);
    SUBCASE("zero weights emit the bias in every kernel row") {
        for (int g = 0; g < 5; ++g) {
            auto& gw = const_cast<Tensor<float>&>(
                w.store.get("tvase.0.dkg.g" + std::to_string(g) + ".conv.w"));
            std::fill(gw.data.begin(), gw.data.end(), 0.0f);
            auto& gb = const_cast<Tensor<float>&>(
                w.store.get("tvase.0.dkg.g" + std::to_string(g) + ".conv.b"));
            for (int64_t i = 0; i < gb.numel(); ++i)
                gb.data[static_cast<size_t>(i)] = static_cast<float>(g * 1000 + i);
        }
        auto store = f64_store(w);
        Rng rng(16);
        auto x = random_tensor({3, 320}, rng);
        auto kernel = dkg_generate_nonseparable(x, store, "tvase.0.dkg", cfg);
        REQUIRE(kernel.shape == std::vector<int64_t>{3, 320, 10});
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t g = 0; g < 5; ++g)
                for (int64_t c = 0; c < 64; ++c)
                    for (int64_t m = 0; m < 10; ++m)
                        CHECK(kernel.at3(t, g * 64 + c, m) ==
                              doctest::Approx(static_cast<double>(g * 1000 + c * 10 + m)));
    }
    SUBCASE("random case equals a per-frame matrix multiply oracle") {
        auto store = f64_store(w);
        Rng rng(17);
        auto x = random_tensor({4, 320}, rng);
        auto kernel = dkg_generate_nonseparable(x, store, "tvase.0.dkg", cfg);
        for (int64_t g = 0; g < 5; ++g) {
            const auto& gw = store.get("tvase.0.dkg.g" + std::to_string(g) + ".conv.w");
            const auto& gb = store.get("tvase.0.dkg.g" + std::to_string(g) + ".conv.b");
            for (int64_t t = 0; t < 4; ++t)
                for (int64_t o = 0; o < 640; ++o) {
                    double acc = gb.data[static_cast<size_t>(o)];
                    for (int64_t ci = 0; ci < 64; ++ci)
                        acc += gw.data[static_cast<size_t>(o * 64 + ci)] * x.at2(t, g * 64 + ci);
                    CHECK(kernel.at3(t, g * 64 + o / 10, o % 10) ==
                          doctest::Approx(acc).epsilon(1e-9));
                }
        }
    }
}

TEST_CASE("separable DKG kernels") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::separable;
    ModelWeights w = build(cfg, 18);
    auto store = f64_store(w);
    Rng rng(19);
    auto x = random_tensor({4, 320}, rng);
    auto kernel = dkg_generate_separable(x, store, "tvase.0.dkg", cfg);
    REQUIRE(kernel.shape == std::vector<int64_t>{4, 320, 10});
    SUBCASE("kernels are rank-1 per frame") {
        for (int64_t t = 0; t < 4; ++t)
            for (int64_t c = 1; c < 320; ++c) {
                // rows are proportional: K(c,t,.)*K(0,t,m) == K(0,t,.)*K(c,t,m)
                for (int64_t m = 1; m < 10; ++m)
                    CHECK(kernel.at3(t, c, m) * kernel.at3(t, 0, 0) ==
                          doctest::Approx(kernel.at3(t, 0, m) * kernel.at3(t, c, 0))
                              .epsilon(1e-6)
                              .scale(std::abs(kernel.at3(t, 0, m)) + 1.0));
            }
    }
    SUBCASE("unit channel weights share one filter across channels") {
        auto& ksw = const_cast<Tensor<float>&>(w.store.get("tvase.0.dkg.ks.conv.w"));
        std::fill(ksw.data.begin(), ksw.data.end(), 0.0f);
        auto& ksb = const_cast<Tensor<float>&>(w.store.get("tvase.0.dkg.ks.conv.b"));
        std::fill(ksb.data.begin(), ksb.data.end(), 1.0f); // Ks == 1
        auto store1 = f64_store(w);
        auto k1 = dkg_generate_separable(x, store1, "tvase.0.dkg", cfg);
        for (int64_t t = 0; t < 4; ++t)
            for (int64_t c = 1; c < 320; ++c)
                for (int64_t m = 0; m < 10; ++m)
                    CHECK(k1.at3(t, c, m) == doctest::Approx(k1.at3(t, 0, m)).epsilon(1e-12));
    }
}

TEST_CASE("dkg_apply") {
    SUBCASE("identity kernel passes features through") {
        Rng rng(20);
        auto x = random_tensor({6, 8}, rng);
        Tensor<double> kernel({6, 8, 10});
        for (int64_t t = 0; t < 6; ++t)
            for (int64_t c = 0; c < 8; ++c) kernel.at3(t, c, 9) = 1.0;
        auto y = dkg_apply(x, kernel);
        CHECK(y.data == x.data);
    }
    SUBCASE("unit-delay kernel shifts by one frame") {
        Rng rng(21);
        auto x = random_tensor({6, 4}, rng);
        Tensor<double> kernel({6, 4, 10});
        for (int64_t t = 0; t < 6; ++t)
            for (int64_t c = 0; c < 4; ++c) kernel.at3(t, c, 8) = 1.0;
        auto y = dkg_apply(x, kernel);
        for (int64_t c = 0; c < 4; ++c) {
            CHECK(y.at2(0, c) == 0.0);
            for (int64_t t = 1; t < 6; ++t) CHECK(y.at2(t, c) == x.at2(t - 1, c));
        }
    }
    SUBCASE("random case equals the double-loop oracle exactly") {
        Rng rng(22);
        auto x = random_tensor({12, 3}, rng);
        auto kernel = random_tensor({12, 3, 4}, rng);
        auto got = dkg_apply(x, kernel);
        for (int64_t t = 0; t < 12; ++t)
            for (int64_t c = 0; c < 3; ++c) {
                double want = 0;
                for (int64_t m = 0; m < 4; ++m) {
                    const int64_t src = t - 3 + m;
                    if (src >= 0) want += kernel.at3(t, c, m) * x.at2(src, c);
                }
                CHECK(got.at2(t, c) == want); // identical operation order in f64
            }
    }
    SUBCASE("bilinear in kernel and features") {
        Rng rng(23);
        auto x1 = random_tensor({5, 2}, rng);
        auto x2 = random_tensor({5, 2}, rng);
        auto k1 = random_tensor({5, 2, 3}, rng);
        auto k2 = random_tensor({5, 2, 3}, rng);
        auto sum_x = x1;
        for (size_t i = 0; i < sum_x.data.size(); ++i) sum_x.data[i] += x2.data[i];
        auto a = dkg_apply(sum_x, k1);
        auto b = dkg_apply(x1, k1);
        auto c = dkg_apply(x2, k1);
        for (size_t i = 0; i < a.data.size(); ++i)
            CHECK(a.data[i] == doctest::Approx(b.data[i] + c.data[i]).epsilon(1e-12));
        auto sum_k = k1;
        for (size_t i = 0; i < sum_k.data.size(); ++i) sum_k.data[i] += k2.data[i];
        auto d = dkg_apply(x1, sum_k);
        auto e = dkg_apply(x1, k2);
        for (size_t i = 0; i < d.data.size(); ++i)
            CHECK(d.data[i] == doctest::Approx(b.data[i] + e.data[i]).epsilon(1e-12));
    }
    SUBCASE("shape mismatch rejected") {
        Tensor<double> x({4, 3});
        Tensor<double> kernel({4, 2, 5});
        CHECK_THROWS_AS(dkg_apply(x, kernel), ShapeError);
    }
}

TEST_CASE("tvase stack: shape preservation and the none-variant shortcut") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::none;
    ModelWeights w = build(cfg, 25);
    auto store = f64_store(w);
    Rng rng(26);
    auto x = random_tensor({6, 320}, rng, 0.5);
    Tensor<double> cur = x;
    for (int j = 0; j < 4; ++j) {
        cur = tvase_forward(cur, store, j, cfg);
        CHECK(cur.shape == std::vector<int64_t>{6, 320});
    }
    auto direct = attention_forward(tcm_forward(x, store, "tvase.0.tcm", cfg), store,
                                    "tvase.0.attn", cfg);
    auto via_module = tvase_forward(x, store, 0, cfg);
    CHECK(via_module.data == direct.data);
}

TEST_CASE("gated block behaviour") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 27);
    Rng rng(28);
    auto skip = random_tensor({3, 64, 5}, rng);
    auto dec = random_tensor({3, 64, 5}, rng);
    auto& gw = const_cast<Tensor<float>&>(w.store.get("dec.0.gate.conv.w"));
    auto& gb = const_cast<Tensor<float>&>(w.store.get("dec.0.gate.conv.b"));
    SUBCASE("strongly negative gate bias passes the decoder feature") {
        std::fill(gw.data.begin(), gw.data.end(), 0.0f);
        std::fill(gb.data.begin(), gb.data.end(), -40.0f);
        auto out = gated_block(skip, dec, f64_store(w), "dec.0.gate");
        for (size_t i = 0; i < out.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(dec.data[i]).epsilon(1e-12));
    }
    SUBCASE("strongly positive gate bias adds the full skip") {
        std::fill(gw.data.begin(), gw.data.end(), 0.0f);
        std::fill(gb.data.begin(), gb.data.end(), 40.0f);
        auto out = gated_block(skip, dec, f64_store(w), "dec.0.gate");
        for (size_t i = 0; i < out.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(dec.data[i] + skip.data[i]).epsilon(1e-12));
    }
    SUBCASE("random case matches the formula oracle") {
        auto store = f64_store(w);
        auto out = gated_block(skip, dec, store, "dec.0.gate");
        const auto& cw = store.get("dec.0.gate.conv.w");
        const auto& cb = store.get("dec.0.gate.conv.b");
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t c = 0; c < 64; ++c)
                for (int64_t f = 0; f < 5; ++f) {
                    double acc = cb.data[static_cast<size_t>(c)];
                    for (int64_t ci = 0; ci < 128; ++ci) {
                        const double in =
                            ci < 64 ? skip.at3(t, ci, f) : dec.at3(t, ci - 64, f);
                        acc += cw.data[static_cast<size_t>(c * 128 + ci)] * in;
                    }
                    const double g = 1.0 / (1.0 + std::exp(-acc));
                    CHECK(out.at3(t, c, f) ==
                          doctest::Approx(dec.at3(t, c, f) + g * skip.at3(t, c, f)).epsilon(1e-9));
                }
    }
    SUBCASE("shape mismatch rejected") {
        auto bad = random_tensor({3, 32, 5}, rng);
        CHECK_THROWS_AS(gated_block(bad, dec, f64_store(w), "dec.0.gate"), ShapeError);
    }
}

TEST_CASE("decoder shapes and model forward") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 30);
    auto store = f64_store(w);
    Rng rng(31);
    auto mic = random_tensor({5, 2, 161}, rng, 0.3);
    auto far = random_tensor({5, 2, 161}, rng, 0.3);
    auto out = model_forward(mic, far, store, cfg);
    CHECK(out.shape == std::vector<int64_t>{5, 2, 161});

    // identical weights and inputs: bit-identical outputs
    auto again = model_forward(mic, far, store, cfg);
    CHECK(again.data == out.data);

    auto far_short = random_tensor({4, 2, 161}, rng);
    CHECK_THROWS_AS(model_forward(mic, far_short, store, cfg), ShapeError);
}

TEST_CASE("model forward is causal end to end") {
    ModelConfig cfg;
    ModelWeights w = build(cfg, 32);
    auto store = f64_store(w);
    Rng rng(33);
    const int64_t frames = 12;
    auto mic = random_tensor({frames, 2, 161}, rng, 0.3);
    auto far = random_tensor({frames, 2, 161}, rng, 0.3);
    auto full = model_forward(mic, far, store, cfg);
    for (int64_t cut : {int64_t(1), int64_t(5), frames - 1}) {
        Tensor<double> mic_cut({cut, 2, 161});
        Tensor<double> far_cut({cut, 2, 161});
        std::copy(mic.data.begin(), mic.data.begin() + cut * 2 * 161, mic_cut.data.begin());
        std::copy(far.data.begin(), far.data.begin() + cut * 2 * 161, far_cut.data.begin());
        auto part = model_forward(mic_cut, far_cut, store, cfg);
        for (int64_t i = 0; i < cut * 2 * 161; ++i) CHECK(part.data[static_cast<size_t>(i)] == full.data[static_cast<size_t>(i)]);
    }
}

TEST_CASE("weight serialization") {
    ModelConfig cfg;
    cfg.dkg = DkgVariant::separable;
    ModelWeights w = build(cfg, 40);
    const std::string path = temp_path("tvase_weights_test.bin");
    save_weights(w, path);
    ModelWeights r = load_weights(path);
    CHECK(dkg_variant_name(r.config.dkg) == std::string("separable"));
    REQUIRE(r.store.entries.size() == w.store.entries.size());
    for (size_t i = 0; i < w.store.entries.size(); ++i) {
        CHECK(r.store.entries[i].first == w.store.entries[i].first);
        CHECK(r.store.entries[i].second.data == w.store.entries[i].second.data);
    }
    CHECK(count_params(r) == count_params(w));

    SUBCASE("bad magic") {
        const std::string bad = temp_path("tvase_weights_bad.bin");
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE this is not a weight file";
        os.close();
        CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("bad magic"), IoError);
    }
    SUBCASE("unsupported version") {
        std::ifstream is(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        bytes[4] = 9;
        const std::string bad = temp_path("tvase_weights_badver.bin");
        std::ofstream os(bad, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os.close();
        CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("version"), IoError);
    }
    SUBCASE("truncated file") {
        std::ifstream is(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        const std::string bad = temp_path("tvase_weights_trunc.bin");
        std::ofstream os(bad, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
        os.close();
        CHECK_THROWS_WITH_AS(load_weights(bad), doctest::Contains("truncated"), IoError);
    }
    std::filesystem::remove(path);
}
