#include "tvase/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace tvase {
namespace metrics {

namespace {

double mean_sq(const std::vector<double>& x, int64_t lo, int64_t hi) {
    double acc = 0;
    for (int64_t i = lo; i < hi; ++i) acc += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    return hi > lo ? acc / static_cast<double>(hi - lo) : 0.0;
}

// mean of x^2 over samples whose frame is labeled
double labeled_mean_sq(const std::vector<double>& x, const std::vector<uint8_t>& labels) {
    double acc = 0;
    int64_t n = 0;
    const int64_t frames = static_cast<int64_t>(labels.size());
    for (int64_t fidx = 0; fidx < frames; ++fidx) {
        if (!labels[static_cast<size_t>(fidx)]) continue;
        const int64_t lo = fidx * kFrameLen;
        const int64_t hi = std::min<int64_t>(lo + kFrameLen, static_cast<int64_t>(x.size()));
        for (int64_t i = lo; i < hi; ++i) acc += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        n += hi - lo;
    }
    if (n == 0) throw ValueError("metrics: no labeled samples");
    return acc / static_cast<double>(n);
}

} // namespace

std::vector<uint8_t> active_frames(const std::vector<double>& x) {
    const int64_t frames = (static_cast<int64_t>(x.size()) + kFrameLen - 1) / kFrameLen;
    std::vector<uint8_t> out(static_cast<size_t>(frames), 0);
    for (int64_t fidx = 0; fidx < frames; ++fidx) {
        const int64_t lo = fidx * kFrameLen;
        const int64_t hi = std::min<int64_t>(lo + kFrameLen, static_cast<int64_t>(x.size()));
        const double rms = std::sqrt(mean_sq(x, lo, hi));
        out[static_cast<size_t>(fidx)] = rms >= kActiveRms ? 1 : 0;
    }
    return out;
}

std::vector<uint8_t> far_single_talk_labels(const std::vector<double>& nearend,
                                            const std::vector<double>& echo) {
    if (nearend.size() != echo.size())
        throw ValueError("labels: near-end and echo lengths differ");
    std::vector<uint8_t> near_act = active_frames(nearend);
    std::vector<uint8_t> echo_act = active_frames(echo);
    std::vector<uint8_t> out(near_act.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (!near_act[i] && echo_act[i]) ? 1 : 0;
    return out;
}

double erle_db(const std::vector<double>& mic, const std::vector<double>& enhanced,
               const std::vector<uint8_t>& labels) {
    if (mic.size() != enhanced.size())
        throw ValueError("erle: mic and enhanced lengths differ");
    bool any = false;
    for (uint8_t l : labels) any |= (l != 0);
    if (!any) throw ValueError("erle: no single-talk frames labeled");
    const double py = labeled_mean_sq(mic, labels);
    const double ps = labeled_mean_sq(enhanced, labels);
    const double erle = 10.0 * std::log10(py / std::max(ps, 1e-12));
    return std::min(erle, kErleCapDb);
}

double compressed_mse(const Spectrogram<double>& estimate, const Spectrogram<double>& reference,
                      double p) {
    if (estimate.frames.shape != reference.frames.shape)
        throw ShapeError("compressed_mse: spectrogram shapes differ: " +
                         shape_str(estimate.frames.shape) + " vs " +
                         shape_str(reference.frames.shape));
    Spectrogram<double> projected = consistency_project(estimate);
    Spectrogram<double> ce = power_law_compress(projected, p);
    Spectrogram<double> cr = power_law_compress(reference, p);
    double acc = 0;
    for (size_t i = 0; i < ce.frames.data.size(); ++i) {
        const double d = ce.frames.data[i] - cr.frames.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(ce.frames.data.size());
}

Levels measure_levels(const std::vector<double>& nearend, const std::vector<double>& echo,
                      const std::vector<double>& noise) {
    if (nearend.size() != echo.size() || nearend.size() != noise.size())
        throw ValueError("measure_levels: component lengths differ");
    std::vector<uint8_t> active = active_frames(nearend);
    const double ps_active = labeled_mean_sq(nearend, active);
    const double pd_active = labeled_mean_sq(echo, active);
    if (ps_active <= 0) throw ValueError("measure_levels: near-end power is zero");
    if (pd_active <= 0) throw ValueError("measure_levels: echo power is zero");
    const double ps_full = mean_sq(nearend, 0, static_cast<int64_t>(nearend.size()));
    const double pn_full = mean_sq(noise, 0, static_cast<int64_t>(noise.size()));
    if (pn_full <= 0) throw ValueError("measure_levels: noise power is zero");
    return {10.0 * std::log10(ps_active / pd_active), 10.0 * std::log10(ps_full / pn_full)};
}

int64_t estimate_delay(const std::vector<double>& farend, const std::vector<double>& echo,
                       int64_t start, int64_t len, int64_t max_lag) {
    if (start < 0 || len < 1 || start + len > static_cast<int64_t>(echo.size()))
        throw ValueError("estimate_delay: window outside echo signal");
    if (start + len > static_cast<int64_t>(farend.size()))
        throw ValueError("estimate_delay: window outside far-end signal");
    const double pe = mean_sq(echo, start, start + len);
    if (pe < 1e-14) throw ValueError("estimate_delay: silent window");
    double best = -1.0;
    int64_t best_lag = 0;
    for (int64_t lag = 0; lag <= max_lag; ++lag) {
        double dot = 0, pf = 0;
        for (int64_t i = start; i < start + len; ++i) {
            const int64_t j = i - lag;
            if (j < 0) continue;
            const double f = farend[static_cast<size_t>(j)];
            dot += f * echo[static_cast<size_t>(i)];
            pf += f * f;
        }
        if (pf < 1e-14) continue;
        const double score = dot / std::sqrt(pf);
        if (score > best) {
            best = score;
            best_lag = lag;
        }
    }
    if (best < 0) throw ValueError("estimate_delay: silent far-end in window");
    return best_lag;
}

} // namespace metrics
} // namespace tvase
