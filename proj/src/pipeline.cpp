#include "tvase/pipeline.hpp"

namespace tvase {

namespace {

int64_t padded_len(int64_t n) {
    const StftConfig cfg{};
    const int64_t hops = (n + cfg.hop - 1) / cfg.hop;
    return std::max<int64_t>(cfg.win_len, hops * cfg.hop);
}

template <typename T>
void check_pair(const std::vector<T>& mic, const std::vector<T>& far) {
    if (mic.size() != far.size())
        throw ValueError("enhance: mic and far-end lengths differ (" +
                         std::to_string(mic.size()) + " vs " + std::to_string(far.size()) + ")");
    if (mic.empty()) throw ValueError("enhance: empty input");
}

} // namespace

template <typename T>
std::vector<T> enhance_batch(const std::vector<T>& mic, const std::vector<T>& far,
                             const WeightStore<T>& w, const ModelConfig& cfg) {
    check_pair(mic, far);
    const int64_t n = static_cast<int64_t>(mic.size());
    const int64_t padded = padded_len(n);
    std::vector<T> m = mic, f = far;
    m.resize(static_cast<size_t>(padded), T(0));
    f.resize(static_cast<size_t>(padded), T(0));
    Spectrogram<T> sm = stft<T>(m);
    Spectrogram<T> sf = stft<T>(f);
    Spectrogram<T> out = model_forward(sm, sf, w, cfg);
    std::vector<T> y = istft<T>(out, padded);
    y.resize(static_cast<size_t>(n));
    return y;
}

template <typename T>
std::vector<T> enhance_stream(const std::vector<T>& mic, const std::vector<T>& far,
                              const WeightStore<T>& w, const ModelConfig& cfg) {
    check_pair(mic, far);
    const int64_t n = static_cast<int64_t>(mic.size());
    const int64_t padded = padded_len(n);
    std::vector<T> m = mic, f = far;
    m.resize(static_cast<size_t>(padded), T(0));
    f.resize(static_cast<size_t>(padded), T(0));
    StreamState<T> state(cfg, std::make_shared<const WeightStore<T>>(w));
    const int hop = StftConfig{}.hop;
    std::vector<T> y;
    y.reserve(static_cast<size_t>(padded));
    for (int64_t pos = 0; pos < padded; pos += hop) {
        auto chunk = state.push(m.data() + pos, f.data() + pos, hop);
        if (chunk) y.insert(y.end(), chunk->begin(), chunk->end());
    }
    std::vector<T> tail = state.flush();
    y.insert(y.end(), tail.begin(), tail.end());
    y.resize(static_cast<size_t>(n));
    return y;
}

std::vector<float> enhance_batch(const std::vector<float>& mic, const std::vector<float>& far,
                                 const ModelWeights& w) {
    return enhance_batch(mic, far, w.store, w.config);
}

std::vector<float> enhance_stream(const std::vector<float>& mic, const std::vector<float>& far,
                                  const ModelWeights& w) {
    return enhance_stream(mic, far, w.store, w.config);
}

template std::vector<float> enhance_batch<float>(const std::vector<float>&,
                                                 const std::vector<float>&,
                                                 const WeightStore<float>&, const ModelConfig&);
template std::vector<double> enhance_batch<double>(const std::vector<double>&,
                                                   const std::vector<double>&,
                                                   const WeightStore<double>&, const ModelConfig&);
template std::vector<float> enhance_stream<float>(const std::vector<float>&,
                                                  const std::vector<float>&,
                                                  const WeightStore<float>&, const ModelConfig&);
template std::vector<double> enhance_stream<double>(const std::vector<double>&,
                                                    const std::vector<double>&,
                                                    const WeightStore<double>&, const ModelConfig&);

} // namespace tvase
