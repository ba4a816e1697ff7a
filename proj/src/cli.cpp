#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tvase/gradcheck.hpp"
#include "tvase/metrics.hpp"
#include "tvase/model.hpp"
#include "tvase/pipeline.hpp"
#include "tvase/scenario.hpp"
#include "tvase/threading.hpp"
#include "tvase/wav.hpp"

namespace tvase {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kIo = 2;
constexpr int kVerification = 3;

void echo_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "config " << cmd;
    for (const auto& [k, v] : kv) os << " " << k << "=" << v;
    std::cout << os.str() << "\n";
}

std::vector<std::string> list_wavs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("source directory '" + dir + "' does not exist");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<float> load_clip(const std::string& path) {
    WavData wav = read_wav(path);
    if (wav.sample_rate != 16000)
        throw IoError("'" + path + "': sample rate " + std::to_string(wav.sample_rate) +
                      " Hz; this tool requires 16 kHz and never resamples");
    return std::move(wav.samples);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

int cmd_synth(const std::string& scenario_name, uint64_t seed, const std::string& out_dir,
              const std::string& near_dir, const std::string& far_dir, const std::string& noise_dir,
              int pairs, double clip_seconds, std::vector<double> sers,
              std::pair<double, double> snr_range, double nonlinear_frac) {
    scenario::SynthSpec spec;
    spec.kind = scenario::kind_from_name(scenario_name);
    spec.pairs = pairs;
    if (!sers.empty()) spec.sers = std::move(sers);
    spec.snr_lo = snr_range.first;
    spec.snr_hi = snr_range.second;
    spec.clip_seconds = clip_seconds;
    spec.nonlinear_fraction = nonlinear_frac;
    spec.out_dir = out_dir;
    echo_config("synth", {{"scenario", scenario_name},
                          {"seed", std::to_string(seed)},
                          {"out", out_dir},
                          {"nearend-dir", near_dir},
                          {"farend-dir", far_dir},
                          {"noise-dir", noise_dir},
                          {"pairs", std::to_string(pairs)},
                          {"clip-seconds", fmt(clip_seconds)},
                          {"sers", [&] {
                               std::string s;
                               for (double v : spec.sers) s += (s.empty() ? "" : ",") + fmt(v);
                               return s;
                           }()},
                          {"snr-range", fmt(spec.snr_lo) + ".." + fmt(spec.snr_hi)},
                          {"nonlinear-frac", fmt(nonlinear_frac)}});
    scenario::SourcePool sources;
    sources.nearend = list_wavs(near_dir);
    sources.farend = list_wavs(far_dir);
    sources.noise = list_wavs(noise_dir);
    const auto clips = scenario::synth_set(spec, sources, seed);
    std::cout << "wrote " << clips.size() << " clips and manifest to " << out_dir << "\n";
    return kOk;
}

int cmd_init(const std::string& dkg, uint64_t seed, const std::string& out_path) {
    echo_config("init", {{"dkg", dkg}, {"seed", std::to_string(seed)}, {"out", out_path}});
    ModelConfig cfg;
    cfg.dkg = dkg_variant_from_name(dkg);
    ModelWeights w = build(cfg, seed);
    save_weights(w, out_path);
    std::cout << "wrote " << count_params(w) << " parameters to " << out_path << "\n";
    return kOk;
}

int cmd_enhance(const std::string& weights_path, const std::string& mic_path,
                const std::string& far_path, const std::string& out_path, bool stream, bool f64) {
    echo_config("enhance", {{"weights", weights_path},
                            {"mic", mic_path},
                            {"far", far_path},
                            {"out", out_path},
                            {"stream", stream ? "true" : "false"},
                            {"f64", f64 ? "true" : "false"}});
    ModelWeights w = load_weights(weights_path);
    std::vector<float> mic = load_clip(mic_path);
    std::vector<float> far = load_clip(far_path);
    std::vector<float> out;
    if (f64) {
        const WeightStore<double> store = w.store.cast<double>();
        std::vector<double> micd(mic.begin(), mic.end());
        std::vector<double> fard(far.begin(), far.end());
        std::vector<double> y = stream ? enhance_stream(micd, fard, store, w.config)
                                       : enhance_batch(micd, fard, store, w.config);
        out.assign(y.begin(), y.end());
    } else {
        out = stream ? enhance_stream(mic, far, w) : enhance_batch(mic, far, w);
    }
    write_wav(out_path, out);
    std::cout << "wrote " << out.size() << " samples to " << out_path << "\n";
    return kOk;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& enhanced_dir,
                 const std::string& out_path, double p) {
    echo_config("evaluate", {{"manifest", manifest_path},
                             {"enhanced-dir", enhanced_dir},
                             {"out", out_path},
                             {"p", fmt(p)}});
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot open manifest '" + manifest_path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    const auto clips = scenario::manifest_from_json(buf.str());
    if (clips.empty()) throw ValueError("manifest contains no clips");

    struct Row {
        int64_t id;
        std::optional<double> erle;
        double mse;
        int64_t frames_used;
    };
    std::vector<Row> rows(clips.size());
    std::mutex io_mu;
    parallel_for(static_cast<int64_t>(clips.size()), [&](int64_t i) {
        const auto& clip = clips[static_cast<size_t>(i)];
        char name[64];
        std::snprintf(name, sizeof(name), "clip_%06lld_enhanced.wav",
                      static_cast<long long>(clip.clip_id));
        const std::string enhanced_path = (fs::path(enhanced_dir) / name).string();
        std::vector<float> micf, enhf, tgtf;
        {
            std::lock_guard<std::mutex> lock(io_mu);
            micf = load_clip(clip.mic_path);
            enhf = load_clip(enhanced_path);
            tgtf = load_clip(clip.target_path);
        }
        if (micf.size() != enhf.size())
            throw ValueError("clip " + std::to_string(clip.clip_id) +
                             ": enhanced length does not match mic length");
        std::vector<double> mic(micf.begin(), micf.end());
        std::vector<double> enh(enhf.begin(), enhf.end());
        std::vector<double> tgt(tgtf.begin(), tgtf.end());
        Row row{clip.clip_id, std::nullopt, 0.0, 0};
        for (uint8_t l : clip.single_talk) row.frames_used += l ? 1 : 0;
        if (row.frames_used > 0) row.erle = metrics::erle_db(mic, enh, clip.single_talk);
        row.mse = metrics::compressed_mse(stft<double>(enh), stft<double>(tgt), p);
        rows[static_cast<size_t>(i)] = std::move(row);
    });

    double erle_sum = 0, erle_sq = 0, mse_sum = 0, mse_sq = 0;
    int64_t erle_n = 0;
    json clip_rows = json::array();
    for (const auto& r : rows) {
        json jr{{"clip_id", r.id}, {"compressed_mse", r.mse}, {"frames_used", r.frames_used}};
        if (r.erle) {
            jr["erle_db"] = *r.erle;
            erle_sum += *r.erle;
            erle_sq += *r.erle * *r.erle;
            ++erle_n;
        } else {
            jr["erle_db"] = nullptr;
        }
        mse_sum += r.mse;
        mse_sq += r.mse * r.mse;
        clip_rows.push_back(std::move(jr));
    }
    const auto n = static_cast<double>(rows.size());
    const double erle_mean = erle_n ? erle_sum / static_cast<double>(erle_n) : 0.0;
    const double erle_std =
        erle_n ? std::sqrt(std::max(0.0, erle_sq / static_cast<double>(erle_n) - erle_mean * erle_mean))
               : 0.0;
    const double mse_mean = mse_sum / n;
    const double mse_std = std::sqrt(std::max(0.0, mse_sq / n - mse_mean * mse_mean));
    json report{{"p", p},
                {"clips", clip_rows},
                {"aggregate",
                 {{"erle_mean_db", erle_mean},
                  {"erle_std_db", erle_std},
                  {"erle_clips", erle_n},
                  {"mse_mean", mse_mean},
                  {"mse_std", mse_std},
                  {"clips", rows.size()}}}};
    std::ofstream os(out_path);
    if (!os) throw IoError("cannot write report '" + out_path + "'");
    os << report.dump(1);
    std::cout << "ERLE " << erle_mean << " +- " << erle_std << " dB over " << erle_n
              << " clips; compressed MSE " << mse_mean << " +- " << mse_std << "\n";
    return kOk;
}

int cmd_gradcheck(uint64_t seed, int64_t probes, const std::string& out_path) {
    echo_config("gradcheck", {{"seed", std::to_string(seed)},
                              {"probes", std::to_string(probes)},
                              {"out", out_path.empty() ? "-" : out_path}});
    const auto reports = gradcheck::run_gradcheck(seed, probes);
    bool all_pass = true;
    for (const auto& r : reports) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.op << " max_rel_err=" << r.max_rel_err
                  << " tol=" << r.tolerance << " probes=" << r.probes << "\n";
        all_pass &= r.pass;
    }
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot write report '" + out_path + "'");
        os << gradcheck::reports_to_json(reports);
    }
    return all_pass ? kOk : kVerification;
}

int cmd_params(const std::string& dkg, bool per_layer) {
    echo_config("params", {{"dkg", dkg.empty() ? "all" : dkg},
                           {"per-layer", per_layer ? "true" : "false"}});
    const auto variants = dkg.empty()
                              ? std::vector<std::string>{"none", "non_separable", "separable"}
                              : std::vector<std::string>{dkg};
    for (const auto& v : variants) {
        ModelConfig cfg;
        cfg.dkg = dkg_variant_from_name(v);
        ModelWeights w = build(cfg, 0);
        int64_t params = 0, buffers = 0;
        for (const auto& row : param_report(w)) {
            if (per_layer)
                std::printf("%-40s %10lld %s\n", row.name.c_str(),
                            static_cast<long long>(row.numel), row.buffer ? "buffer" : "param");
            (row.buffer ? buffers : params) += row.numel;
        }
        std::printf("dkg=%-14s parameters=%lld buffers=%lld\n", v.c_str(),
                    static_cast<long long>(params), static_cast<long long>(buffers));
    }
    return kOk;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"causal joint echo-cancellation and noise-suppression engine"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize a time-variant evaluation set");
    std::string scenario_name, out_dir, near_dir, far_dir, noise_dir;
    uint64_t seed = 0;
    int pairs = 300;
    double clip_seconds = 10.0, nonlinear_frac = 0.5;
    std::vector<double> sers;
    std::pair<double, double> snr_range{-5.0, 20.0};
    synth->add_option("--scenario", scenario_name,
                      "time-invariant | variant-delay-only | variant-RIR-only | variant-delay-and-RIR")
        ->required();
    synth->add_option("--seed", seed, "master seed")->default_val(0);
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--nearend-dir", near_dir, "near-end speech WAV directory")->required();
    synth->add_option("--farend-dir", far_dir, "far-end speech WAV directory")->required();
    synth->add_option("--noise-dir", noise_dir, "noise WAV directory")->required();
    synth->add_option("--pairs", pairs, "source pairs per scenario")->default_val(300);
    synth->add_option("--clip-seconds", clip_seconds)->default_val(10.0);
    synth->add_option("--ser", sers, "SER levels in dB (default 0,3.5,7)")->delimiter(',');
    synth->add_option("--snr-range", snr_range, "SNR range in dB (default -5 20)");
    synth->add_option("--nonlinear-frac", nonlinear_frac, "fraction of nonlinearly distorted far-end")
        ->default_val(0.5);

    // init
    auto* init = app.add_subcommand("init", "write Xavier-initialized weights");
    std::string init_dkg = "separable", init_out;
    uint64_t init_seed = 0;
    init->add_option("--dkg", init_dkg, "none | non_separable | separable")->default_val("separable");
    init->add_option("--seed", init_seed)->default_val(0);
    init->add_option("--out", init_out, "weight file path")->required();

    // enhance
    auto* enh = app.add_subcommand("enhance", "enhance one clip (batch or streaming)");
    std::string w_path, mic_path, far_path, enh_out;
    bool use_stream = false, use_f64 = false;
    enh->add_option("--weights", w_path)->required();
    enh->add_option("--mic", mic_path)->required();
    enh->add_option("--far", far_path)->required();
    enh->add_option("--out", enh_out)->required();
    enh->add_flag("--stream", use_stream, "drive the hop-by-hop streaming engine");
    enh->add_flag("--f64", use_f64, "64-bit oracle mode");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "score enhanced clips against a manifest");
    std::string manifest_path, enhanced_dir, report_path;
    double p = 0.3;
    eval->add_option("--manifest", manifest_path)->required();
    eval->add_option("--enhanced-dir", enhanced_dir)->required();
    eval->add_option("--out", report_path)->required();
    eval->add_option("--p", p, "power-law compression exponent")->default_val(0.3);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the dynamic-kernel ops");
    uint64_t gc_seed = 1;
    int64_t gc_probes = 400;
    std::string gc_out;
    gc->add_option("--seed", gc_seed)->default_val(1);
    gc->add_option("--probes", gc_probes, "probed coordinates per op")->default_val(400);
    gc->add_option("--out", gc_out, "write the JSON report here");

    // params
    auto* par = app.add_subcommand("params", "parameter counts per DKG variant");
    std::string par_dkg;
    bool per_layer = false;
    par->add_option("--dkg", par_dkg, "none | non_separable | separable (default: all)");
    par->add_flag("--per-layer", per_layer, "print every tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (synth->parsed())
            return cmd_synth(scenario_name, seed, out_dir, near_dir, far_dir, noise_dir, pairs,
                             clip_seconds, sers, snr_range, nonlinear_frac);
        if (init->parsed()) return cmd_init(init_dkg, init_seed, init_out);
        if (enh->parsed()) return cmd_enhance(w_path, mic_path, far_path, enh_out, use_stream, use_f64);
        if (eval->parsed()) return cmd_evaluate(manifest_path, enhanced_dir, report_path, p);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_probes, gc_out);
        if (par->parsed()) return cmd_params(par_dkg, per_layer);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

} // namespace cli
} // namespace tvase
