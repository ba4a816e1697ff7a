#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvase/rng.hpp"
#include "tvase/tensor.hpp"

namespace tvase {
namespace scenario {

constexpr int kFs = 16000;
constexpr int64_t kSegmentLen = 8000; // 500 ms
constexpr double kSpeedOfSound = 343.0;

using Vec3 = std::array<double, 3>;

struct Room {
    Vec3 dims;   // a, b, c in meters
    double rt60; // seconds

    Vec3 source() const { return {dims[0] / 2, dims[1] / 2, dims[2] / 2}; }
};

// The 60-room evaluation grid: a in {5..13}, b in {4..10}, c in {2.5..4.5}.
std::vector<Vec3> room_grid();

struct Trajectory {
    std::vector<Vec3> positions; // 400 mic positions, fixed height
    double step_a = 0;
    double step_b = 0;
};

// Moving microphone starting one step away from the loudspeaker; step signs
// flip only when the next move would leave the room.
Trajectory make_trajectory(const Room& room, Rng& rng, int64_t count = 400);

// Image-method shoebox RIR. The uniform reflection coefficient starts from
// Sabine absorption and is calibrated per (room, rt60) so the Schroeder-
// measured decay of the rendered response hits the requested RT60.
// Fractional image delays use a 64-tap windowed-sinc interpolator.
std::vector<double> simulate_rir(const Room& room, const Vec3& source, const Vec3& mic,
                                 double rt60, int fs = kFs);

// Raw mirror-source renderer with an explicit uniform reflection coefficient
// (beta = 0 gives the free-field direct path only).
std::vector<double> image_rir(const Vec3& dims, const Vec3& source, const Vec3& mic, double beta,
                              int64_t len, int fs = kFs);

// T20 estimate: 3x the -5 dB to -25 dB span of the backward-integrated
// energy decay curve.
double schroeder_decay_time(const std::vector<double>& h, int fs);

// Hard clip at clip_ratio*max|x| followed by the asymmetric sigmoid
// loudspeaker model; silence passes through unchanged.
std::vector<double> nonlinear_distort(const std::vector<double>& farend,
                                      double clip_ratio = 0.8);

// Per-500-ms segment delays (samples) and RIRs, overlap-added across segment
// joins. Schedules must cover the clip.
std::vector<double> render_echo(const std::vector<double>& farend,
                                const std::vector<std::vector<double>>& segment_rirs,
                                const std::vector<int64_t>& segment_delays, int64_t out_len);

struct MixResult {
    std::vector<double> mic;
    std::vector<double> target;
    std::vector<double> echo_scaled;
    std::vector<double> noise_scaled;
    double echo_gain = 0;
    double noise_gain = 0;
    std::vector<uint8_t> single_talk; // far-end single-talk frame labels
};

// Scales echo to the requested SER (powers over near-end-active frames) and
// noise to the requested SNR (powers over the full clip). snr_db may be
// +infinity to omit noise.
MixResult mix(const std::vector<double>& nearend, const std::vector<double>& echo,
              const std::vector<double>& noise, double ser_db, double snr_db);

enum class Kind { time_invariant, variant_delay, variant_rir, variant_delay_rir };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct SynthSpec {
    Kind kind = Kind::time_invariant;
    int pairs = 300;
    std::vector<double> sers{0.0, 3.5, 7.0};
    double snr_lo = -5.0;
    double snr_hi = 20.0;
    double clip_seconds = 10.0;
    double nonlinear_fraction = 0.5;
    double base_delay_ms_lo = 0.0;
    double base_delay_ms_hi = 100.0;
    double extra_delay_ms = 20.0; // dynamic delay bound per 500 ms
    std::string out_dir;
};

struct SourcePool {
    std::vector<std::string> nearend;
    std::vector<std::string> farend;
    std::vector<std::string> noise;
};

struct ClipManifest {
    int64_t clip_id = 0;
    int64_t pair_id = 0;
    std::string scenario;
    uint64_t master_seed = 0;
    int64_t room_id = 0;
    Vec3 room_dims{};
    double rt60 = 0;
    uint64_t trajectory_seed = 0;
    int64_t static_position = 0; // trajectory index for static-RIR scenarios
    int64_t rir_start = 0;       // first trajectory index for varying-RIR scenarios
    double base_delay_ms = 0;
    std::vector<double> extra_delay_ms;   // per segment, empty when static
    std::vector<int64_t> delay_samples;   // effective per-segment delays
    bool nonlinear = false;
    double ser_db = 0;
    double snr_db = 0;
    std::string nearend_source, farend_source, noise_source;
    int64_t nearend_offset = 0; // placement of near-end speech in the clip
    std::string farend_path, echo_path, nearend_path, noise_path, mic_path, target_path;
    std::vector<uint8_t> single_talk;
};

std::string manifest_to_json(const std::vector<ClipManifest>& clips, const SynthSpec& spec,
                             uint64_t master_seed);
std::vector<ClipManifest> manifest_from_json(const std::string& text);

// Renders every clip of the set (pairs x SER levels), writes WAVs and the
// manifest JSON into spec.out_dir, and returns the manifests. Deterministic
// in master_seed; clips are independent and rendered in parallel.
std::vector<ClipManifest> synth_set(const SynthSpec& spec, const SourcePool& sources,
                                    uint64_t master_seed);

// Re-renders one clip from its manifest; bit-identical to the original.
struct ClipAudio {
    std::vector<double> farend, echo, nearend, noise, mic, target;
};
ClipAudio synth_clip(const ClipManifest& m, const SynthSpec& spec, const SourcePool& sources);

} // namespace scenario
} // namespace tvase
