#include "tvase/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <tuple>

#include <json.hpp>

#include "tvase/metrics.hpp"
#include "tvase/threading.hpp"
#include "tvase/wav.hpp"

namespace tvase {
namespace scenario {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Vec3> room_grid() {
    std::vector<Vec3> rooms;
    for (double a : {5.0, 7.0, 9.0, 11.0, 13.0})
        for (double b : {4.0, 6.0, 8.0, 10.0})
            for (double c : {2.5, 3.5, 4.5}) rooms.push_back({a, b, c});
    return rooms;
}

Trajectory make_trajectory(const Room& room, Rng& rng, int64_t count) {
    Trajectory tr;
    tr.step_a = rng.uniform(-0.025, 0.025);
    tr.step_b = rng.uniform(-0.025, 0.025);
    double da = tr.step_a;
    double db = tr.step_b;
    Vec3 pos = room.source();
    tr.positions.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        double na = pos[0] + da;
        if (na <= 0.0 || na >= room.dims[0]) {
            da = -da;
            na = pos[0] + da;
        }
        double nb = pos[1] + db;
        if (nb <= 0.0 || nb >= room.dims[1]) {
            db = -db;
            nb = pos[1] + db;
        }
        pos = {na, nb, pos[2]};
        tr.positions.push_back(pos);
    }
    return tr;
}

namespace {

constexpr int kSincTaps = 64;
constexpr int kSincHalf = 31; // taps cover offsets [-31, 32]
constexpr int kSincPhases = 512;

// Polyphase windowed-sinc interpolation table; row p holds the 64 taps for a
// fractional delay of p/512 samples.
const std::vector<double>& sinc_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t(static_cast<size_t>((kSincPhases + 1) * kSincTaps));
        constexpr double pi = 3.14159265358979323846;
        for (int p = 0; p <= kSincPhases; ++p) {
            const double frac = static_cast<double>(p) / kSincPhases;
            for (int i = 0; i < kSincTaps; ++i) {
                const double x = (i - kSincHalf) - frac;
                const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(pi * x) / (pi * x);
                const double u = x / (kSincTaps / 2.0);
                const double win = std::abs(u) <= 1.0 ? 0.5 * (1.0 + std::cos(pi * u)) : 0.0;
                t[static_cast<size_t>(p * kSincTaps + i)] = sinc * win;
            }
        }
        return t;
    }();
    return table;
}

struct AxisImage {
    double delta; // image coordinate minus mic coordinate
    int refl;
};

std::vector<AxisImage> axis_images(double src, double mic, double dim, double max_dist) {
    std::vector<AxisImage> out;
    const int n_max = static_cast<int>(max_dist / (2.0 * dim)) + 2;
    for (int n = -n_max; n <= n_max; ++n) {
        for (int q = 0; q < 2; ++q) {
            const double coord = (q ? -src : src) + 2.0 * n * dim;
            const double delta = coord - mic;
            if (std::abs(delta) > max_dist) continue;
            out.push_back({delta, std::abs(n - q) + std::abs(n)});
        }
    }
    return out;
}

void check_inside(const Vec3& p, const Vec3& dims, const char* what) {
    for (int i = 0; i < 3; ++i)
        if (!(p[static_cast<size_t>(i)] > 0.0 && p[static_cast<size_t>(i)] < dims[static_cast<size_t>(i)]))
            throw ValueError(std::string(what) + " position outside the room");
}

} // namespace

std::vector<double> image_rir(const Vec3& dims, const Vec3& source, const Vec3& mic, double beta,
                              int64_t len, int fs) {
    check_inside(source, dims, "source");
    check_inside(mic, dims, "microphone");
    double d2 = 0;
    for (int i = 0; i < 3; ++i) {
        const double d = source[static_cast<size_t>(i)] - mic[static_cast<size_t>(i)];
        d2 += d * d;
    }
    if (d2 < 1e-18) throw ValueError("simulate_rir: source and microphone coincide");

    const double max_dist = kSpeedOfSound * static_cast<double>(len) / fs;
    const auto ax = axis_images(source[0], mic[0], dims[0], max_dist);
    const auto ay = axis_images(source[1], mic[1], dims[1], max_dist);
    const auto az = axis_images(source[2], mic[2], dims[2], max_dist);

    int max_refl = 0;
    for (const auto& v : {ax, ay, az}) {
        int m = 0;
        for (const auto& im : v) m = std::max(m, im.refl);
        max_refl += m;
    }
    std::vector<double> beta_pow(static_cast<size_t>(max_refl + 1));
    beta_pow[0] = 1.0;
    for (size_t i = 1; i < beta_pow.size(); ++i) beta_pow[i] = beta_pow[i - 1] * beta;

    const std::vector<double>& table = sinc_table();
    std::vector<double> h(static_cast<size_t>(len), 0.0);
    const double max_dist2 = max_dist * max_dist;
    const double fs_over_c = static_cast<double>(fs) / kSpeedOfSound;
    constexpr double inv4pi = 1.0 / (4.0 * 3.14159265358979323846);
    for (const auto& ix : ax) {
        const double dx2 = ix.delta * ix.delta;
        if (dx2 > max_dist2) continue;
        for (const auto& iy : ay) {
            const double dxy2 = dx2 + iy.delta * iy.delta;
            if (dxy2 > max_dist2) continue;
            const int rxy = ix.refl + iy.refl;
            for (const auto& iz : az) {
                const double dist2 = dxy2 + iz.delta * iz.delta;
                if (dist2 > max_dist2) continue;
                const double dist = std::sqrt(dist2);
                if (dist < 1e-9) continue;
                const double amp = beta_pow[static_cast<size_t>(rxy + iz.refl)] * inv4pi / dist;
                const double pos = dist * fs_over_c;
                const auto ipos = static_cast<int64_t>(pos);
                const int phase = static_cast<int>(std::lround((pos - static_cast<double>(ipos)) * kSincPhases));
                const double* taps = table.data() + static_cast<size_t>(phase) * kSincTaps;
                const int64_t base = ipos - kSincHalf;
                const int64_t lo = std::max<int64_t>(0, -base);
                const int64_t hi = std::min<int64_t>(kSincTaps, len - base);
                double* dst = h.data() + base;
                for (int64_t k = lo; k < hi; ++k) dst[k] += amp * taps[k];
            }
        }
    }
    return h;
}

double schroeder_decay_time(const std::vector<double>& h, int fs) {
    std::vector<double> edc(h.size());
    double acc = 0;
    for (int64_t i = static_cast<int64_t>(h.size()) - 1; i >= 0; --i) {
        acc += h[static_cast<size_t>(i)] * h[static_cast<size_t>(i)];
        edc[static_cast<size_t>(i)] = acc;
    }
    const double total = edc.empty() ? 0.0 : edc[0];
    if (total <= 0) return 0.0;
    auto crossing = [&](double db) {
        const double target = total * std::pow(10.0, db / 10.0);
        for (size_t i = 0; i < edc.size(); ++i)
            if (edc[i] <= target) return static_cast<double>(i) / fs;
        return static_cast<double>(edc.size()) / fs;
    };
    return 3.0 * (crossing(-25.0) - crossing(-5.0));
}

namespace {

double sabine_beta(const Vec3& dims, double decay_time) {
    const double volume = dims[0] * dims[1] * dims[2];
    const double surface =
        2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
    double alpha = 0.161 * volume / (surface * decay_time);
    alpha = std::min(alpha, 0.9999);
    return std::sqrt(1.0 - alpha);
}

// The Sabine coefficient alone overshoots the measured decay badly in small
// strongly-absorbent rooms (low-order axial images dominate the Schroeder
// tail), so the reflection coefficient is calibrated per (room, rt60) against
// the Schroeder estimate at a fixed probe position. Pure in its inputs;
// cached because every trajectory position of a clip shares the calibration.
double calibrated_beta(const Vec3& dims, double rt60, int fs) {
    struct Key {
        double a, b, c, rt;
        bool operator<(const Key& o) const {
            return std::tie(a, b, c, rt) < std::tie(o.a, o.b, o.c, o.rt);
        }
    };
    static std::mutex mu;
    static std::map<Key, double> cache;
    const Key key{dims[0], dims[1], dims[2], rt60};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    const Vec3 source{dims[0] / 2, dims[1] / 2, dims[2] / 2};
    // probe at a ~1 m listener offset: the decay estimate is distance
    // dependent in dead rooms, so calibrate where it will be measured
    const Vec3 probe{source[0] + std::min(0.9, dims[0] / 4), source[1] + std::min(0.6, dims[1] / 4),
                     source[2]};
    const int64_t len = static_cast<int64_t>(std::ceil(rt60 * fs)) + kSincTaps;
    auto measure = [&](double b) {
        return schroeder_decay_time(image_rir(dims, source, probe, b, len, fs), fs);
    };
    // measured decay is monotone in beta: safeguarded secant/bisection,
    // seeded by the Sabine coefficient
    double lo = 0.02, hi = 0.999;
    double beta = std::clamp(sabine_beta(dims, rt60), lo, hi);
    for (int iter = 0; iter < 12; ++iter) {
        const double measured = measure(beta);
        if (measured > 0 && std::abs(measured - rt60) <= 0.04 * rt60) break;
        if (measured > rt60)
            hi = beta;
        else
            lo = beta;
        double next = beta;
        if (measured > 0) {
            // decay time scales roughly like -1/ln(beta)
            const double x = -std::log(beta) * measured / rt60;
            next = std::exp(-x);
        }
        beta = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
    }
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, beta).first->second;
}

} // namespace

std::vector<double> simulate_rir(const Room& room, const Vec3& source, const Vec3& mic,
                                 double rt60, int fs) {
    if (!(rt60 >= 0.3 && rt60 <= 1.3))
        throw ValueError("simulate_rir: rt60 must lie in [0.3, 1.3] s");
    const double beta = calibrated_beta(room.dims, rt60, fs);
    const int64_t len = static_cast<int64_t>(std::ceil(rt60 * fs)) + kSincTaps;
    return image_rir(room.dims, source, mic, beta, len, fs);
}

std::vector<double> nonlinear_distort(const std::vector<double>& farend, double clip_ratio) {
    if (!(clip_ratio > 0.0 && clip_ratio <= 1.0))
        throw ValueError("nonlinear_distort: clip ratio must lie in (0, 1]");
    double peak = 0;
    for (double v : farend) peak = std::max(peak, std::abs(v));
    if (peak <= 0) return farend;
    const double thr = clip_ratio * peak;
    std::vector<double> out(farend.size());
    for (size_t i = 0; i < farend.size(); ++i) {
        const double xc = std::clamp(farend[i], -thr, thr);
        const double b = 1.5 * xc - 0.3 * xc * xc;
        const double a = b > 0 ? 4.0 : 0.5;
        out[i] = 4.0 * (2.0 / (1.0 + std::exp(-a * b)) - 1.0);
    }
    return out;
}

std::vector<double> render_echo(const std::vector<double>& farend,
                                const std::vector<std::vector<double>>& segment_rirs,
                                const std::vector<int64_t>& segment_delays, int64_t out_len) {
    if (segment_rirs.size() != segment_delays.size())
        throw ValueError("render_echo: one delay per RIR segment required");
    const int64_t covered = static_cast<int64_t>(segment_rirs.size()) * kSegmentLen;
    if (covered < out_len)
        throw ValueError("render_echo: schedule covers " + std::to_string(covered) +
                         " samples, clip needs " + std::to_string(out_len));
    std::vector<double> echo(static_cast<size_t>(out_len), 0.0);
    const int64_t far_len = static_cast<int64_t>(farend.size());
    for (size_t s = 0; s < segment_rirs.size(); ++s) {
        const int64_t t0 = static_cast<int64_t>(s) * kSegmentLen;
        const int64_t t1 = std::min<int64_t>(out_len, t0 + kSegmentLen);
        if (t0 >= t1) break;
        const int64_t d = segment_delays[s];
        if (d < 0) throw ValueError("render_echo: negative delay");
        const std::vector<double>& rir = segment_rirs[s];
        const int64_t rlen = static_cast<int64_t>(rir.size());
        for (int64_t n = t0; n < t1; ++n) {
            const int64_t src = n - d;
            if (src < 0 || src >= far_len) continue;
            const double x = farend[static_cast<size_t>(src)];
            if (x == 0.0) continue;
            const int64_t klen = std::min(rlen, out_len - n);
            double* dst = echo.data() + n;
            const double* rp = rir.data();
            for (int64_t k = 0; k < klen; ++k) dst[k] += x * rp[k];
        }
    }
    return echo;
}

MixResult mix(const std::vector<double>& nearend, const std::vector<double>& echo,
              const std::vector<double>& noise, double ser_db, double snr_db) {
    const size_t n = std::max({nearend.size(), echo.size(), noise.size()});
    if (n == 0) throw ValueError("mix: empty inputs");
    auto padded = [n](const std::vector<double>& x) {
        std::vector<double> out = x;
        out.resize(n, 0.0);
        return out;
    };
    MixResult r;
    r.target = padded(nearend);
    r.echo_scaled = padded(echo);
    r.noise_scaled = padded(noise);

    const std::vector<uint8_t> active = metrics::active_frames(r.target);
    double ps_active = 0, pd_active = 0;
    int64_t n_active = 0;
    for (size_t f = 0; f < active.size(); ++f) {
        if (!active[f]) continue;
        const size_t lo = f * metrics::kFrameLen;
        const size_t hi = std::min(n, lo + metrics::kFrameLen);
        for (size_t i = lo; i < hi; ++i) {
            ps_active += r.target[i] * r.target[i];
            pd_active += r.echo_scaled[i] * r.echo_scaled[i];
        }
        n_active += static_cast<int64_t>(hi - lo);
    }
    if (n_active == 0 || ps_active <= 0)
        throw ValueError("mix: near-end signal has no active frames");
    if (pd_active <= 0) throw ValueError("mix: echo power is zero over near-end-active frames");
    r.echo_gain = std::sqrt(ps_active / pd_active * std::pow(10.0, -ser_db / 10.0));
    for (double& v : r.echo_scaled) v *= r.echo_gain;

    if (std::isinf(snr_db) && snr_db > 0) {
        r.noise_gain = 0.0;
        std::fill(r.noise_scaled.begin(), r.noise_scaled.end(), 0.0);
    } else {
        double ps_full = 0, pn_full = 0;
        for (size_t i = 0; i < n; ++i) {
            ps_full += r.target[i] * r.target[i];
            pn_full += r.noise_scaled[i] * r.noise_scaled[i];
        }
        if (pn_full <= 0) throw ValueError("mix: noise power is zero with finite SNR requested");
        r.noise_gain = std::sqrt(ps_full / pn_full * std::pow(10.0, -snr_db / 10.0));
        for (double& v : r.noise_scaled) v *= r.noise_gain;
    }

    r.mic.resize(n);
    for (size_t i = 0; i < n; ++i) r.mic[i] = r.target[i] + r.echo_scaled[i] + r.noise_scaled[i];
    r.single_talk = metrics::far_single_talk_labels(r.target, r.echo_scaled);
    return r;
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::time_invariant: return "time-invariant";
        case Kind::variant_delay: return "variant-delay-only";
        case Kind::variant_rir: return "variant-RIR-only";
        case Kind::variant_delay_rir: return "variant-delay-and-RIR";
    }
    return "time-invariant";
}

Kind kind_from_name(const std::string& name) {
    for (Kind k : {Kind::time_invariant, Kind::variant_delay, Kind::variant_rir,
                   Kind::variant_delay_rir})
        if (name == kind_name(k)) return k;
    throw ValueError("unknown scenario '" + name + "' (expected time-invariant, "
                     "variant-delay-only, variant-RIR-only or variant-delay-and-RIR)");
}

namespace {

bool has_varying_rir(Kind k) { return k == Kind::variant_rir || k == Kind::variant_delay_rir; }
bool has_dynamic_delay(Kind k) { return k == Kind::variant_delay || k == Kind::variant_delay_rir; }

// source file cache shared by synthesis workers
class WavCache {
public:
    std::shared_ptr<const std::vector<double>> get(const std::string& path) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(path);
            if (it != cache_.end()) return it->second;
        }
        WavData wav = read_wav(path);
        if (wav.sample_rate != kFs)
            throw IoError("source '" + path + "' is not 16 kHz");
        auto data = std::make_shared<std::vector<double>>(wav.samples.begin(), wav.samples.end());
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.emplace(path, std::move(data)).first->second;
    }

private:
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<const std::vector<double>>> cache_;
};

std::vector<double> tile_to(const std::vector<double>& src, int64_t len) {
    if (src.empty()) throw ValueError("scenario: empty source signal");
    std::vector<double> out(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) out[static_cast<size_t>(i)] = src[static_cast<size_t>(i % static_cast<int64_t>(src.size()))];
    return out;
}

std::vector<double> place_at(const std::vector<double>& src, int64_t len, int64_t offset,
                             int64_t max_len) {
    std::vector<double> out(static_cast<size_t>(len), 0.0);
    const int64_t n = std::min<int64_t>({static_cast<int64_t>(src.size()), max_len, len - offset});
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(offset + i)] = src[static_cast<size_t>(i)];
    return out;
}

int64_t clip_len(const SynthSpec& spec) {
    return static_cast<int64_t>(std::llround(spec.clip_seconds * kFs));
}

int64_t num_segments(int64_t len) { return (len + kSegmentLen - 1) / kSegmentLen; }

std::string clip_path(const std::string& dir, int64_t id, const char* what) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "clip_%06lld_%s.wav", static_cast<long long>(id), what);
    return (fs::path(dir) / buf).string();
}

ClipManifest plan_clip(const SynthSpec& spec, const SourcePool& sources, uint64_t master_seed,
                       int64_t clip_id) {
    const int64_t nser = static_cast<int64_t>(spec.sers.size());
    const int64_t pair = clip_id / nser;
    const int64_t si = clip_id % nser;
    Rng rng = Rng(master_seed).fork(static_cast<uint64_t>(pair));

    ClipManifest m;
    m.clip_id = clip_id;
    m.pair_id = pair;
    m.scenario = kind_name(spec.kind);
    m.master_seed = master_seed;
    m.nearend_source = sources.nearend[rng.next_below(sources.nearend.size())];
    m.farend_source = sources.farend[rng.next_below(sources.farend.size())];
    m.noise_source = sources.noise[rng.next_below(sources.noise.size())];
    const int64_t len = clip_len(spec);
    m.nearend_offset = static_cast<int64_t>(std::llround((0.3 + 0.2 * rng.uniform()) * static_cast<double>(len)));

    const auto grid = room_grid();
    m.room_id = static_cast<int64_t>(rng.next_below(grid.size()));
    m.room_dims = grid[static_cast<size_t>(m.room_id)];
    m.rt60 = rng.uniform(0.3, 1.3);
    m.trajectory_seed = rng.next_u64();
    m.static_position = static_cast<int64_t>(rng.next_below(400));
    const int64_t nseg = num_segments(len);
    const int64_t start_span = std::max<int64_t>(1, 400 - nseg + 1);
    m.rir_start = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(start_span)));
    m.base_delay_ms = rng.uniform(spec.base_delay_ms_lo, spec.base_delay_ms_hi);
    m.nonlinear = rng.uniform() < spec.nonlinear_fraction;
    m.snr_db = rng.uniform(spec.snr_lo, spec.snr_hi);
    m.extra_delay_ms.resize(static_cast<size_t>(nseg));
    for (auto& e : m.extra_delay_ms) e = rng.uniform(-spec.extra_delay_ms, spec.extra_delay_ms);
    if (!has_dynamic_delay(spec.kind)) m.extra_delay_ms.clear();

    m.delay_samples.resize(static_cast<size_t>(nseg));
    for (int64_t s = 0; s < nseg; ++s) {
        double ms = m.base_delay_ms;
        if (has_dynamic_delay(spec.kind)) ms += m.extra_delay_ms[static_cast<size_t>(s)];
        m.delay_samples[static_cast<size_t>(s)] =
            std::max<int64_t>(0, std::llround(ms * kFs / 1000.0));
    }
    m.ser_db = spec.sers[static_cast<size_t>(si)];
    m.farend_path = clip_path(spec.out_dir, clip_id, "farend");
    m.echo_path = clip_path(spec.out_dir, clip_id, "echo");
    m.nearend_path = clip_path(spec.out_dir, clip_id, "nearend");
    m.noise_path = clip_path(spec.out_dir, clip_id, "noise");
    m.mic_path = clip_path(spec.out_dir, clip_id, "mic");
    m.target_path = clip_path(spec.out_dir, clip_id, "target");
    return m;
}

WavCache& wav_cache() {
    static WavCache cache;
    return cache;
}

} // namespace

ClipAudio synth_clip(const ClipManifest& m, const SynthSpec& spec, const SourcePool&) {
    const int64_t len = clip_len(spec);
    auto near_src = wav_cache().get(m.nearend_source);
    auto far_src = wav_cache().get(m.farend_source);
    auto noise_src = wav_cache().get(m.noise_source);

    ClipAudio a;
    a.farend = tile_to(*far_src, len);
    a.nearend = place_at(*near_src, len, std::min<int64_t>(m.nearend_offset, len - 1), len / 2);
    a.noise = tile_to(*noise_src, len);

    const Room room{m.room_dims, m.rt60};
    Rng traj_rng(m.trajectory_seed);
    const Trajectory traj = make_trajectory(room, traj_rng);
    const Kind kind = kind_from_name(m.scenario);
    const int64_t nseg = num_segments(len);
    std::vector<std::vector<double>> rirs(static_cast<size_t>(nseg));
    if (has_varying_rir(kind)) {
        for (int64_t s = 0; s < nseg; ++s) {
            const int64_t idx = std::min<int64_t>(m.rir_start + s, 399);
            rirs[static_cast<size_t>(s)] =
                simulate_rir(room, room.source(), traj.positions[static_cast<size_t>(idx)], m.rt60);
        }
    } else {
        const std::vector<double> rir = simulate_rir(
            room, room.source(), traj.positions[static_cast<size_t>(m.static_position)], m.rt60);
        for (auto& r : rirs) r = rir;
    }

    const std::vector<double> far_feed = m.nonlinear ? nonlinear_distort(a.farend) : a.farend;
    a.echo = render_echo(far_feed, rirs, m.delay_samples, len);

    MixResult mixed = mix(a.nearend, a.echo, a.noise, m.ser_db, m.snr_db);
    a.mic = std::move(mixed.mic);
    a.target = std::move(mixed.target);
    a.echo = std::move(mixed.echo_scaled);
    a.noise = std::move(mixed.noise_scaled);
    return a;
}

std::vector<ClipManifest> synth_set(const SynthSpec& spec, const SourcePool& sources,
                                    uint64_t master_seed) {
    if (sources.nearend.empty() || sources.farend.empty() || sources.noise.empty())
        throw ValueError("synth_set: near-end, far-end and noise source lists must be non-empty");
    if (spec.pairs < 1 || spec.sers.empty())
        throw ValueError("synth_set: need at least one pair and one SER level");
    if (clip_len(spec) < metrics::kFrameLen)
        throw ValueError("synth_set: clip too short");
    fs::create_directories(spec.out_dir);
    const int64_t n_clips = static_cast<int64_t>(spec.pairs) * static_cast<int64_t>(spec.sers.size());
    std::vector<ClipManifest> clips(static_cast<size_t>(n_clips));
    parallel_for(n_clips, [&](int64_t i) {
        ClipManifest m = plan_clip(spec, sources, master_seed, i);
        ClipAudio a = synth_clip(m, spec, sources);
        m.single_talk = metrics::far_single_talk_labels(a.target, a.echo);
        auto to_f32 = [](const std::vector<double>& x) {
            return std::vector<float>(x.begin(), x.end());
        };
        write_wav(m.farend_path, to_f32(a.farend));
        write_wav(m.echo_path, to_f32(a.echo));
        write_wav(m.nearend_path, to_f32(a.nearend));
        write_wav(m.noise_path, to_f32(a.noise));
        write_wav(m.mic_path, to_f32(a.mic));
        write_wav(m.target_path, to_f32(a.target));
        clips[static_cast<size_t>(i)] = std::move(m);
    });
    const std::string manifest = manifest_to_json(clips, spec, master_seed);
    std::ofstream os(fs::path(spec.out_dir) / "manifest.json");
    if (!os) throw IoError("cannot write manifest in '" + spec.out_dir + "'");
    os << manifest;
    return clips;
}

// ---- manifest JSON -----------------------------------------------------------

namespace {

std::string labels_to_string(const std::vector<uint8_t>& labels) {
    std::string s(labels.size(), '0');
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) s[i] = '1';
    return s;
}

std::vector<uint8_t> labels_from_string(const std::string& s) {
    std::vector<uint8_t> out(s.size());
    for (size_t i = 0; i < s.size(); ++i) out[i] = s[i] == '1' ? 1 : 0;
    return out;
}

json clip_to_json(const ClipManifest& m) {
    json j;
    j["clip_id"] = m.clip_id;
    j["pair_id"] = m.pair_id;
    j["scenario"] = m.scenario;
    j["master_seed"] = std::to_string(m.master_seed);
    j["room_id"] = m.room_id;
    j["room_dims"] = {m.room_dims[0], m.room_dims[1], m.room_dims[2]};
    j["rt60"] = m.rt60;
    j["trajectory_seed"] = std::to_string(m.trajectory_seed);
    j["static_position"] = m.static_position;
    j["rir_start"] = m.rir_start;
    j["base_delay_ms"] = m.base_delay_ms;
    j["extra_delay_ms"] = m.extra_delay_ms;
    j["delay_samples"] = m.delay_samples;
    j["nonlinear"] = m.nonlinear;
    j["ser_db"] = m.ser_db;
    j["snr_db"] = m.snr_db;
    j["nearend_source"] = m.nearend_source;
    j["farend_source"] = m.farend_source;
    j["noise_source"] = m.noise_source;
    j["nearend_offset"] = m.nearend_offset;
    j["files"] = {{"farend", m.farend_path}, {"echo", m.echo_path},
                  {"nearend", m.nearend_path}, {"noise", m.noise_path},
                  {"mic", m.mic_path},       {"target", m.target_path}};
    j["single_talk"] = labels_to_string(m.single_talk);
    return j;
}

ClipManifest clip_from_json(const json& j) {
    ClipManifest m;
    m.clip_id = j.at("clip_id").get<int64_t>();
    m.pair_id = j.at("pair_id").get<int64_t>();
    m.scenario = j.at("scenario").get<std::string>();
    m.master_seed = std::stoull(j.at("master_seed").get<std::string>());
    m.room_id = j.at("room_id").get<int64_t>();
    const auto dims = j.at("room_dims");
    m.room_dims = {dims.at(0).get<double>(), dims.at(1).get<double>(), dims.at(2).get<double>()};
    m.rt60 = j.at("rt60").get<double>();
    m.trajectory_seed = std::stoull(j.at("trajectory_seed").get<std::string>());
    m.static_position = j.at("static_position").get<int64_t>();
    m.rir_start = j.at("rir_start").get<int64_t>();
    m.base_delay_ms = j.at("base_delay_ms").get<double>();
    m.extra_delay_ms = j.at("extra_delay_ms").get<std::vector<double>>();
    m.delay_samples = j.at("delay_samples").get<std::vector<int64_t>>();
    m.nonlinear = j.at("nonlinear").get<bool>();
    m.ser_db = j.at("ser_db").get<double>();
    m.snr_db = j.at("snr_db").get<double>();
    m.nearend_source = j.at("nearend_source").get<std::string>();
    m.farend_source = j.at("farend_source").get<std::string>();
    m.noise_source = j.at("noise_source").get<std::string>();
    m.nearend_offset = j.at("nearend_offset").get<int64_t>();
    const auto& files = j.at("files");
    m.farend_path = files.at("farend").get<std::string>();
    m.echo_path = files.at("echo").get<std::string>();
    m.nearend_path = files.at("nearend").get<std::string>();
    m.noise_path = files.at("noise").get<std::string>();
    m.mic_path = files.at("mic").get<std::string>();
    m.target_path = files.at("target").get<std::string>();
    m.single_talk = labels_from_string(j.at("single_talk").get<std::string>());
    return m;
}

} // namespace

std::string manifest_to_json(const std::vector<ClipManifest>& clips, const SynthSpec& spec,
                             uint64_t master_seed) {
    json j;
    j["scenario"] = kind_name(spec.kind);
    j["master_seed"] = std::to_string(master_seed);
    j["spec"] = {{"pairs", spec.pairs},
                 {"sers", spec.sers},
                 {"snr_range", {spec.snr_lo, spec.snr_hi}},
                 {"clip_seconds", spec.clip_seconds},
                 {"nonlinear_fraction", spec.nonlinear_fraction},
                 {"base_delay_ms", {spec.base_delay_ms_lo, spec.base_delay_ms_hi}},
                 {"extra_delay_ms", spec.extra_delay_ms}};
    json arr = json::array();
    for (const auto& c : clips) arr.push_back(clip_to_json(c));
    j["clips"] = std::move(arr);
    return j.dump(1);
}

std::vector<ClipManifest> manifest_from_json(const std::string& text) {
    json j = json::parse(text);
    std::vector<ClipManifest> clips;
    for (const auto& c : j.at("clips")) clips.push_back(clip_from_json(c));
    return clips;
}

} // namespace scenario
} // namespace tvase
