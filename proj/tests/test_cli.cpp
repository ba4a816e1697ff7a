#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "../src/cli.hpp"
#include "tvase/rng.hpp"
#include "tvase/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> storage{"tvase"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : storage) argv.push_back(s.c_str());
    return tvase::cli::run(static_cast<int>(argv.size()), argv.data());
}

std::vector<float> sine(int64_t n, double freq, double amp = 0.5) {
    std::vector<float> x(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        x[static_cast<size_t>(i)] =
            static_cast<float>(amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / 16000.0));
    return x;
}

std::vector<float> noise(int64_t n, uint64_t seed, double amp = 0.3) {
    tvase::Rng rng(seed);
    std::vector<float> x(static_cast<size_t>(n));
    for (auto& v : x) v = static_cast<float>(rng.uniform(-amp, amp));
    return x;
}

struct TempTree {
    fs::path root;
    explicit TempTree(const char* name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string operator/(const char* leaf) const { return (root / leaf).string(); }
};

json read_json(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    json j;
    is >> j;
    return j;
}

} // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli({"bogus-subcommand"}) == 1);
    CHECK(run_cli({"enhance", "--definitely-unknown-flag"}) == 1);
    TempTree tmp("tvase_cli_usage");
    tvase::write_wav(tmp / "a.wav", sine(1600, 300.0));
    CHECK(run_cli({"synth", "--scenario", "no-such-scenario", "--out", tmp / "out",
                   "--nearend-dir", tmp.root.string(), "--farend-dir", tmp.root.string(),
                   "--noise-dir", tmp.root.string()}) == 1);
}

TEST_CASE("io errors exit 2") {
    TempTree tmp("tvase_cli_io");
    tvase::write_wav(tmp / "mic.wav", sine(1600, 300.0));
    CHECK(run_cli({"init", "--dkg", "separable", "--seed", "3", "--out", tmp / "w.bin"}) == 0);
    // missing far-end file
    CHECK(run_cli({"enhance", "--weights", tmp / "w.bin", "--mic", tmp / "mic.wav", "--far",
                   tmp / "missing.wav", "--out", tmp / "out.wav"}) == 2);
    // wrong sample rate is rejected, never resampled
    tvase::write_wav(tmp / "sr8k.wav", sine(800, 300.0), 8000);
    CHECK(run_cli({"enhance", "--weights", tmp / "w.bin", "--mic", tmp / "sr8k.wav", "--far",
                   tmp / "mic.wav", "--out", tmp / "out.wav"}) == 2);
}

TEST_CASE("init + enhance: batch and stream agree; random weights give a valid WAV") {
    TempTree tmp("tvase_cli_enhance");
    const auto mic = noise(4000, 1);
    const auto far = noise(4000, 2);
    tvase::write_wav(tmp / "mic.wav", mic);
    tvase::write_wav(tmp / "far.wav", far);
    REQUIRE(run_cli({"init", "--dkg", "separable", "--seed", "0", "--out", tmp / "w.bin"}) == 0);
    REQUIRE(run_cli({"enhance", "--weights", tmp / "w.bin", "--mic", tmp / "mic.wav", "--far",
                     tmp / "far.wav", "--out", tmp / "batch.wav"}) == 0);
    REQUIRE(run_cli({"enhance", "--weights", tmp / "w.bin", "--mic", tmp / "mic.wav", "--far",
                     tmp / "far.wav", "--out", tmp / "stream.wav", "--stream"}) == 0);
    auto batch = tvase::read_wav(tmp / "batch.wav");
    auto stream = tvase::read_wav(tmp / "stream.wav");
    REQUIRE(batch.samples.size() == mic.size()); // output length == input length
    REQUIRE(stream.samples.size() == mic.size());
    double worst = 0;
    for (size_t i = 0; i < batch.samples.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(batch.samples[i]) - stream.samples[i]) /
                                    std::max(std::abs(static_cast<double>(batch.samples[i])), 1e-3));
    CHECK(worst <= 1e-4);
    // f64 oracle path also produces a full-length file
    REQUIRE(run_cli({"enhance", "--weights", tmp / "w.bin", "--mic", tmp / "mic.wav", "--far",
                     tmp / "far.wav", "--out", tmp / "f64.wav", "--f64"}) == 0);
    CHECK(tvase::read_wav(tmp / "f64.wav").samples.size() == mic.size());
}

TEST_CASE("params and gradcheck subcommands") {
    CHECK(run_cli({"params", "--dkg", "separable"}) == 0);
    CHECK(run_cli({"params"}) == 0);
    CHECK(run_cli({"gradcheck", "--seed", "1", "--probes", "100"}) == 0);
}

TEST_CASE("synth + evaluate round trip with known enhanced signals") {
    TempTree tmp("tvase_cli_eval");
    const fs::path src = tmp.root / "src";
    fs::create_directories(src);
    tvase::write_wav((src / "near.wav").string(), sine(8000, 320.0, 0.5));
    tvase::write_wav((src / "far.wav").string(), noise(16000, 9, 0.4));
    tvase::write_wav((src / "noise.wav").string(), noise(16000, 10, 0.15));
    const std::string set_dir = tmp / "set";
    REQUIRE(run_cli({"synth", "--scenario", "time-invariant", "--seed", "5", "--out", set_dir,
                     "--nearend-dir", src.string(), "--farend-dir", src.string(), "--noise-dir",
                     src.string(), "--pairs", "2", "--clip-seconds", "2", "--ser", "0,7"}) == 0);
    const std::string manifest = (fs::path(set_dir) / "manifest.json").string();
    REQUIRE(fs::exists(manifest));

    const json mj = read_json(manifest);
    REQUIRE(mj.at("clips").size() == 4);

    SUBCASE("passthrough enhancement scores 0 dB mean ERLE") {
        const std::string enh = tmp / "enh_pass";
        fs::create_directories(enh);
        for (const auto& clip : mj.at("clips")) {
            auto mic = tvase::read_wav(clip.at("files").at("mic").get<std::string>());
            char name[64];
            std::snprintf(name, sizeof(name), "clip_%06lld_enhanced.wav",
                          static_cast<long long>(clip.at("clip_id").get<int64_t>()));
            tvase::write_wav((fs::path(enh) / name).string(), mic.samples);
        }
        const std::string report_path = tmp / "report_pass.json";
        REQUIRE(run_cli({"evaluate", "--manifest", manifest, "--enhanced-dir", enh, "--out",
                         report_path}) == 0);
        const json report = read_json(report_path);
        CHECK(std::abs(report.at("aggregate").at("erle_mean_db").get<double>()) < 1e-9);

        // aggregation oracle: recompute mean/std from the per-clip rows
        double sum = 0, sq = 0;
        int64_t n = 0;
        for (const auto& row : report.at("clips")) {
            if (row.at("erle_db").is_null()) continue;
            const double v = row.at("erle_db").get<double>();
            sum += v;
            sq += v * v;
            ++n;
        }
        REQUIRE(n == report.at("aggregate").at("erle_clips").get<int64_t>());
        const double mean = sum / static_cast<double>(n);
        const double stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
        CHECK(report.at("aggregate").at("erle_mean_db").get<double>() ==
              doctest::Approx(mean).epsilon(1e-12));
        CHECK(report.at("aggregate").at("erle_std_db").get<double>() ==
              doctest::Approx(stddev).epsilon(1e-12));
    }

    SUBCASE("silent enhancement hits the 100 dB cap") {
        const std::string enh = tmp / "enh_silent";
        fs::create_directories(enh);
        for (const auto& clip : mj.at("clips")) {
            auto mic = tvase::read_wav(clip.at("files").at("mic").get<std::string>());
            std::vector<float> silent(mic.samples.size(), 0.0f);
            char name[64];
            std::snprintf(name, sizeof(name), "clip_%06lld_enhanced.wav",
                          static_cast<long long>(clip.at("clip_id").get<int64_t>()));
            tvase::write_wav((fs::path(enh) / name).string(), silent);
        }
        const std::string report_path = tmp / "report_silent.json";
        REQUIRE(run_cli({"evaluate", "--manifest", manifest, "--enhanced-dir", enh, "--out",
                         report_path}) == 0);
        const json report = read_json(report_path);
        for (const auto& row : report.at("clips")) {
            if (row.at("erle_db").is_null()) continue;
            CHECK(row.at("erle_db").get<double>() == 100.0);
        }
    }

    SUBCASE("manifest/audio mismatch is an error") {
        const std::string enh = tmp / "enh_bad";
        fs::create_directories(enh);
        CHECK(run_cli({"evaluate", "--manifest", manifest, "--enhanced-dir", enh, "--out",
                       tmp / "report_bad.json"}) == 2);
    }
}
