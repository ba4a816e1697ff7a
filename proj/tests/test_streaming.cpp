#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tvase/pipeline.hpp"
#include "tvase/streaming.hpp"

using namespace tvase;

namespace {

std::vector<float> random_clip(int64_t n, uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    std::vector<float> x(static_cast<size_t>(n));
    for (auto& v : x) v = static_cast<float>(rng.uniform(-scale, scale));
    return x;
}

double max_rel_dev(const std::vector<float>& a, const std::vector<float>& b) {
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) /
                                    std::max(std::abs(static_cast<double>(a[i])), 1e-3));
    return worst;
}

} // namespace

TEST_CASE("fresh streams are identical and process frame 0 like batch") {
    ModelWeights w = build(ModelConfig{}, 3);
    auto mic = random_clip(640, 1);
    auto far = random_clip(640, 2);

    StreamState<float> s1 = stream_create(w);
    StreamState<float> s2 = stream_create(w);
    CHECK(s1.frames_processed() == 0);
    std::optional<std::vector<float>> o1, o2;
    for (int64_t pos = 0; pos < 320; pos += 160) {
        o1 = s1.push(mic.data() + pos, far.data() + pos, 160);
        o2 = s2.push(mic.data() + pos, far.data() + pos, 160);
    }
    REQUIRE(o1.has_value());
    REQUIRE(o2.has_value());
    CHECK(*o1 == *o2);
    CHECK(s1.frames_processed() == 1);

    // batch output over the same two hops starts with the same samples
    std::vector<float> mic2(mic.begin(), mic.begin() + 320);
    std::vector<float> far2(far.begin(), far.begin() + 320);
    auto batch = enhance_batch(mic2, far2, w);
    for (size_t i = 0; i < o1->size(); ++i) CHECK((*o1)[i] == batch[i]);
}

TEST_CASE("stream equals batch on whole clips") {
    ModelWeights w = build(ModelConfig{}, 4);
    for (uint64_t seed : {10u, 11u, 12u}) {
        auto mic = random_clip(8000, seed);
        auto far = random_clip(8000, seed + 100);
        auto batch = enhance_batch(mic, far, w);
        auto streamed = enhance_stream(mic, far, w);
        REQUIRE(batch.size() == streamed.size());
        CHECK(max_rel_dev(batch, streamed) <= 1e-4);
    }
}

TEST_CASE("stream equals batch in 64-bit oracle mode") {
    ModelWeights w = build(ModelConfig{}, 5);
    const WeightStore<double> store = w.store.cast<double>();
    Rng rng(77);
    std::vector<double> mic(6400), far(6400);
    for (auto& v : mic) v = rng.uniform(-0.3, 0.3);
    for (auto& v : far) v = rng.uniform(-0.3, 0.3);
    auto batch = enhance_batch(mic, far, store, w.config);
    auto streamed = enhance_stream(mic, far, store, w.config);
    double worst = 0;
    for (size_t i = 0; i < batch.size(); ++i)
        worst = std::max(worst, std::abs(batch[i] - streamed[i]) /
                                    std::max(std::abs(batch[i]), 1e-3));
    CHECK(worst <= 1e-9);
}

TEST_CASE("zero input produces the deterministic batch output") {
    ModelWeights w = build(ModelConfig{}, 6);
    std::vector<float> zeros(3200, 0.0f);
    auto batch = enhance_batch(zeros, zeros, w);
    auto streamed = enhance_stream(zeros, zeros, w);
    CHECK(batch == streamed);
}

TEST_CASE("interleaved independent streams match isolated runs") {
    ModelWeights w = build(ModelConfig{}, 7);
    auto mic_a = random_clip(1600, 20), far_a = random_clip(1600, 21);
    auto mic_b = random_clip(1600, 22), far_b = random_clip(1600, 23);

    auto run_isolated = [&](const std::vector<float>& mic, const std::vector<float>& far) {
        StreamState<float> s = stream_create(w);
        std::vector<float> out;
        for (int64_t pos = 0; pos < 1600; pos += 160) {
            auto c = s.push(mic.data() + pos, far.data() + pos, 160);
            if (c) out.insert(out.end(), c->begin(), c->end());
        }
        auto tail = s.flush();
        out.insert(out.end(), tail.begin(), tail.end());
        return out;
    };
    auto ya = run_isolated(mic_a, far_a);
    auto yb = run_isolated(mic_b, far_b);

    StreamState<float> sa = stream_create(w);
    StreamState<float> sb = stream_create(w);
    std::vector<float> ia, ib;
    for (int64_t pos = 0; pos < 1600; pos += 160) {
        auto ca = sa.push(mic_a.data() + pos, far_a.data() + pos, 160);
        auto cb = sb.push(mic_b.data() + pos, far_b.data() + pos, 160);
        if (ca) ia.insert(ia.end(), ca->begin(), ca->end());
        if (cb) ib.insert(ib.end(), cb->begin(), cb->end());
    }
    auto ta = sa.flush();
    ia.insert(ia.end(), ta.begin(), ta.end());
    auto tb = sb.flush();
    ib.insert(ib.end(), tb.begin(), tb.end());
    CHECK(ia == ya);
    CHECK(ib == yb);
}

TEST_CASE("flush accounting") {
    ModelWeights w = build(ModelConfig{}, 8);
    StreamState<float> s = stream_create(w);
    auto mic = random_clip(800, 30), far = random_clip(800, 31);
    int64_t emitted = 0;
    for (int64_t pos = 0; pos < 800; pos += 160) {
        auto c = s.push(mic.data() + pos, far.data() + pos, 160);
        if (c) emitted += static_cast<int64_t>(c->size());
    }
    CHECK(emitted == 800 - 160); // warm-up swallows one hop
    auto tail = s.flush();
    CHECK(tail.size() == 160);
    CHECK(emitted + static_cast<int64_t>(tail.size()) == 800);
    CHECK(s.flush().empty());
}

TEST_CASE("wrong hop size poisons the stream") {
    ModelWeights w = build(ModelConfig{}, 9);
    StreamState<float> s = stream_create(w);
    std::vector<float> buf(100, 0.0f);
    CHECK_THROWS_AS(s.push(buf.data(), buf.data(), 100), ValueError);
    std::vector<float> hop(160, 0.0f);
    CHECK_THROWS_AS(s.push(hop.data(), hop.data(), 160), StateError);
    CHECK_THROWS_AS(s.flush(), StateError);
}

TEST_CASE("state footprint is constant in stream length") {
    ModelWeights w = build(ModelConfig{}, 10);
    StreamState<float> s = stream_create(w);
    std::vector<float> hop(160, 0.01f);
    for (int i = 0; i < 10; ++i) s.push(hop.data(), hop.data(), 160);
    const size_t bytes_short = s.state_bytes();
    for (int i = 0; i < 200; ++i) s.push(hop.data(), hop.data(), 160);
    CHECK(s.state_bytes() == bytes_short);
    CHECK(bytes_short > 0);
}

TEST_CASE("attention cache eviction leaves outputs unchanged") {
    // T_w = 4 with a long stream: outputs depend only on the last T_w frames
    ModelConfig cfg;
    cfg.attn_window = 4;
    ModelWeights w = build(cfg, 11);
    auto mic = random_clip(3200, 40), far = random_clip(3200, 41);
    auto batch = enhance_batch(mic, far, w);
    auto streamed = enhance_stream(mic, far, w);
    CHECK(batch == streamed);
}
