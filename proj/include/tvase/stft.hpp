#pragma once

#include <cstdint>
#include <vector>

#include "tvase/tensor.hpp"

namespace tvase {

// 16 kHz analysis/synthesis filterbank: 20 ms periodic Hann window, 10 ms hop,
// 320-point DFT, 161 bins.
struct StftConfig {
    int sample_rate = 16000;
    int win_len = 320;
    int hop = 160;
    int dft_size = 320;

    int bins() const { return dft_size / 2 + 1; }
    void validate() const;
    bool operator==(const StftConfig&) const = default;
};

// Complex STFT stored frame-major: frames {T, 2, F} with plane 0 = real,
// plane 1 = imaginary.
template <typename T>
struct Spectrogram {
    Tensor<T> frames;
    StftConfig config;

    Spectrogram() = default;
    Spectrogram(int64_t t, const StftConfig& cfg) : frames({t, 2, cfg.bins()}), config(cfg) {}

    int64_t num_frames() const { return frames.numel() ? frames.dim(0) : 0; }
    int64_t num_bins() const { return frames.numel() ? frames.dim(2) : 0; }
    T& re(int64_t t, int64_t f) { return frames.at3(t, 0, f); }
    T re(int64_t t, int64_t f) const { return frames.at3(t, 0, f); }
    T& im(int64_t t, int64_t f) { return frames.at3(t, 1, f); }
    T im(int64_t t, int64_t f) const { return frames.at3(t, 1, f); }

    template <typename U>
    Spectrogram<U> cast() const {
        Spectrogram<U> out;
        out.frames = frames.template cast<U>();
        out.config = config;
        return out;
    }
};

// Precomputed window/twiddle tables for one configuration. The per-frame
// entry points are shared by the batch transforms and the streaming engine.
template <typename T>
class StftPlan {
public:
    explicit StftPlan(StftConfig cfg = {});

    const StftConfig& config() const { return cfg_; }
    const std::vector<T>& window() const { return window_; }

    // T = 1 + floor((len - win_len)/hop); errors when len < win_len.
    Spectrogram<T> stft(const std::vector<T>& signal) const;

    // Weighted overlap-add with per-sample COLA normalization. out_len may
    // not exceed (T-1)*hop + win_len.
    std::vector<T> istft(const Spectrogram<T>& spec, int64_t out_len) const;

    // stft(istft(spec)): projection onto attainable spectrograms.
    Spectrogram<T> consistency_project(const Spectrogram<T>& spec) const;

    int64_t synth_len(int64_t frames) const {
        return frames < 1 ? 0 : (frames - 1) * cfg_.hop + cfg_.win_len;
    }

    // samples -> one spectral frame (applies the analysis window).
    void analyze_frame(const T* samples, T* re, T* im) const;
    // one spectral frame -> win_len time samples, synthesis-windowed but not
    // yet COLA-normalized.
    void synth_frame(const T* re, const T* im, T* out) const;

private:
    StftConfig cfg_;
    std::vector<T> window_;
    std::vector<T> fwd_cos_, fwd_sin_; // [F][N]
    std::vector<T> inv_cos_, inv_sin_; // [N][F], includes 1/N and Hermitian doubling
};

// Convenience wrappers over a cached default-config plan.
template <typename T>
Spectrogram<T> stft(const std::vector<T>& signal, const StftConfig& cfg = {});

template <typename T>
std::vector<T> istft(const Spectrogram<T>& spec, int64_t out_len);

template <typename T>
Spectrogram<T> consistency_project(const Spectrogram<T>& spec);

// |X|^p with phase preserved; p in (0, 1]; zero maps to zero.
template <typename T>
Spectrogram<T> power_law_compress(const Spectrogram<T>& spec, double p);

} // namespace tvase
