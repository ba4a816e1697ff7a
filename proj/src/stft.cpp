#include "tvase/stft.hpp"

#include <cmath>

#include "tvase/nn.hpp"

namespace tvase {

void StftConfig::validate() const {
    if (sample_rate != 16000) throw ValueError("stft: only 16 kHz is supported");
    if (win_len < 1 || hop < 1 || dft_size < win_len)
        throw ValueError("stft: dft_size must be >= win_len and sizes positive");
    if (win_len % hop != 0)
        throw ValueError("stft: hop must divide win_len for constant overlap-add");
    if (dft_size % 2 != 0) throw ValueError("stft: dft_size must be even");
}

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

template <typename T>
StftPlan<T>::StftPlan(StftConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int n = cfg_.dft_size;
    const int win = cfg_.win_len;
    const int bins = cfg_.bins();
    window_.resize(static_cast<size_t>(win));
    for (int i = 0; i < win; ++i)
        window_[static_cast<size_t>(i)] =
            static_cast<T>(0.5 - 0.5 * std::cos(kTwoPi * i / static_cast<double>(win)));
    fwd_cos_.resize(static_cast<size_t>(bins) * n);
    fwd_sin_.resize(static_cast<size_t>(bins) * n);
    inv_cos_.resize(static_cast<size_t>(n) * bins);
    inv_sin_.resize(static_cast<size_t>(n) * bins);
    for (int k = 0; k < bins; ++k) {
        for (int i = 0; i < n; ++i) {
            const double ang = kTwoPi * k * i / static_cast<double>(n);
            fwd_cos_[static_cast<size_t>(k) * n + i] = static_cast<T>(std::cos(ang));
            fwd_sin_[static_cast<size_t>(k) * n + i] = static_cast<T>(-std::sin(ang));
            // Hermitian inverse: interior bins appear twice in the full DFT.
            const double coef = (k == 0 || k == n / 2) ? 1.0 : 2.0;
            inv_cos_[static_cast<size_t>(i) * bins + k] =
                static_cast<T>(coef * std::cos(ang) / static_cast<double>(n));
            inv_sin_[static_cast<size_t>(i) * bins + k] =
                static_cast<T>(-coef * std::sin(ang) / static_cast<double>(n));
        }
    }
}

template <typename T>
void StftPlan<T>::analyze_frame(const T* samples, T* re, T* im) const {
    const int n = cfg_.dft_size;
    const int win = cfg_.win_len;
    const int bins = cfg_.bins();
    std::vector<T> buf(static_cast<size_t>(n), T(0));
    for (int i = 0; i < win; ++i) buf[static_cast<size_t>(i)] = samples[i] * window_[static_cast<size_t>(i)];
    for (int k = 0; k < bins; ++k) {
        re[k] = dot_strict(buf.data(), fwd_cos_.data() + static_cast<size_t>(k) * n, n);
        im[k] = dot_strict(buf.data(), fwd_sin_.data() + static_cast<size_t>(k) * n, n);
    }
}

template <typename T>
void StftPlan<T>::synth_frame(const T* re, const T* im, T* out) const {
    const int win = cfg_.win_len;
    const int bins = cfg_.bins();
    for (int i = 0; i < win; ++i) {
        const T v = dot_strict(re, inv_cos_.data() + static_cast<size_t>(i) * bins, bins) +
                    dot_strict(im, inv_sin_.data() + static_cast<size_t>(i) * bins, bins);
        out[i] = v * window_[static_cast<size_t>(i)];
    }
}

template <typename T>
Spectrogram<T> StftPlan<T>::stft(const std::vector<T>& signal) const {
    const int64_t len = static_cast<int64_t>(signal.size());
    if (len < cfg_.win_len)
        throw ValueError("stft: signal length " + std::to_string(len) + " shorter than window " +
                         std::to_string(cfg_.win_len));
    const int64_t frames = 1 + (len - cfg_.win_len) / cfg_.hop;
    Spectrogram<T> spec(frames, cfg_);
    const int bins = cfg_.bins();
    for (int64_t t = 0; t < frames; ++t) {
        T* frame = spec.frames.ptr() + t * 2 * bins;
        analyze_frame(signal.data() + t * cfg_.hop, frame, frame + bins);
    }
    return spec;
}

template <typename T>
std::vector<T> StftPlan<T>::istft(const Spectrogram<T>& spec, int64_t out_len) const {
    if (spec.frames.rank() != 3 || spec.frames.dim(1) != 2 || spec.frames.dim(2) != cfg_.bins())
        throw ShapeError("istft: spectrogram frames must be {T, 2, " + std::to_string(cfg_.bins()) +
                         "}, got " + shape_str(spec.frames.shape));
    const int64_t frames = spec.num_frames();
    const int64_t total = synth_len(frames);
    if (out_len < 0 || out_len > total)
        throw ValueError("istft: out_len " + std::to_string(out_len) +
                         " exceeds synthesizable span " + std::to_string(total));
    const int win = cfg_.win_len;
    const int hop = cfg_.hop;
    const int bins = cfg_.bins();
    std::vector<T> num(static_cast<size_t>(total), T(0));
    std::vector<T> den(static_cast<size_t>(total), T(0));
    std::vector<T> buf(static_cast<size_t>(win));
    for (int64_t t = 0; t < frames; ++t) {
        const T* frame = spec.frames.ptr() + t * 2 * bins;
        synth_frame(frame, frame + bins, buf.data());
        T* np = num.data() + t * hop;
        T* dp = den.data() + t * hop;
        for (int i = 0; i < win; ++i) {
            np[i] += buf[static_cast<size_t>(i)];
            dp[i] += window_[static_cast<size_t>(i)] * window_[static_cast<size_t>(i)];
        }
    }
    std::vector<T> out(static_cast<size_t>(out_len));
    for (int64_t i = 0; i < out_len; ++i)
        out[static_cast<size_t>(i)] = den[static_cast<size_t>(i)] > T(1e-12)
                                          ? num[static_cast<size_t>(i)] / den[static_cast<size_t>(i)]
                                          : T(0);
    return out;
}

template <typename T>
Spectrogram<T> StftPlan<T>::consistency_project(const Spectrogram<T>& spec) const {
    return stft(istft(spec, synth_len(spec.num_frames())));
}

namespace {

template <typename T>
const StftPlan<T>& default_plan() {
    static const StftPlan<T> plan{};
    return plan;
}

} // namespace

template <typename T>
Spectrogram<T> stft(const std::vector<T>& signal, const StftConfig& cfg) {
    if (cfg == StftConfig{}) return default_plan<T>().stft(signal);
    return StftPlan<T>(cfg).stft(signal);
}

template <typename T>
std::vector<T> istft(const Spectrogram<T>& spec, int64_t out_len) {
    if (spec.config == StftConfig{}) return default_plan<T>().istft(spec, out_len);
    return StftPlan<T>(spec.config).istft(spec, out_len);
}

template <typename T>
Spectrogram<T> consistency_project(const Spectrogram<T>& spec) {
    if (spec.config == StftConfig{}) return default_plan<T>().consistency_project(spec);
    return StftPlan<T>(spec.config).consistency_project(spec);
}

template <typename T>
Spectrogram<T> power_law_compress(const Spectrogram<T>& spec, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw ValueError("power_law_compress: p must be in (0, 1]");
    Spectrogram<T> out = spec;
    const int64_t frames = spec.num_frames();
    const int64_t bins = spec.num_bins();
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t f = 0; f < bins; ++f) {
            const double re = static_cast<double>(spec.re(t, f));
            const double im = static_cast<double>(spec.im(t, f));
            const double mag = std::hypot(re, im);
            if (mag > 0.0) {
                const double scale = std::pow(mag, p - 1.0);
                out.re(t, f) = static_cast<T>(re * scale);
                out.im(t, f) = static_cast<T>(im * scale);
            } else {
                out.re(t, f) = T(0);
                out.im(t, f) = T(0);
            }
        }
    }
    return out;
}

#define TVASE_INSTANTIATE_STFT(T)                                              \
    template class StftPlan<T>;                                                \
    template Spectrogram<T> stft<T>(const std::vector<T>&, const StftConfig&); \
    template std::vector<T> istft<T>(const Spectrogram<T>&, int64_t);          \
    template Spectrogram<T> consistency_project<T>(const Spectrogram<T>&);     \
    template Spectrogram<T> power_law_compress<T>(const Spectrogram<T>&, double);

TVASE_INSTANTIATE_STFT(float)
TVASE_INSTANTIATE_STFT(double)

#undef TVASE_INSTANTIATE_STFT

} // namespace tvase
