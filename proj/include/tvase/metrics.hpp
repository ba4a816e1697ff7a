#pragma once

#include <cstdint>
#include <vector>

#include "tvase/stft.hpp"

namespace tvase {

namespace metrics {

// 10 ms frames at 16 kHz.
constexpr int64_t kFrameLen = 160;
// -60 dBFS RMS activity threshold.
constexpr double kActiveRms = 1e-3;
constexpr double kErleCapDb = 100.0;

// Per-frame activity: RMS >= -60 dBFS.
std::vector<uint8_t> active_frames(const std::vector<double>& x);

// Far-end single talk: near-end silent and echo active in the same frame.
std::vector<uint8_t> far_single_talk_labels(const std::vector<double>& nearend,
                                            const std::vector<double>& echo);

// Echo return loss enhancement over labeled single-talk frames:
// 10*log10(mean(mic^2)/mean(enhanced^2)), capped at 100 dB.
double erle_db(const std::vector<double>& mic, const std::vector<double>& enhanced,
               const std::vector<uint8_t>& single_talk_labels);

// MSE between power-law compressed spectra; the estimate is passed through
// the consistency projection first.
double compressed_mse(const Spectrogram<double>& estimate, const Spectrogram<double>& reference,
                      double p);

struct Levels {
    double ser_db;
    double snr_db;
};

// Inverse of the scenario mixing: SER over near-end-active frames, SNR over
// the whole clip.
Levels measure_levels(const std::vector<double>& nearend, const std::vector<double>& echo,
                      const std::vector<double>& noise);

// Argmax of normalized cross-correlation over lags [0, max_lag]; the window
// [start, start+len) is taken from `echo` and matched against `farend`.
int64_t estimate_delay(const std::vector<double>& farend, const std::vector<double>& echo,
                       int64_t start, int64_t len, int64_t max_lag);

} // namespace metrics

} // namespace tvase
