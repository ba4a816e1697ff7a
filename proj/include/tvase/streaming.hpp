#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "tvase/model.hpp"
#include "tvase/stft.hpp"

namespace tvase {

// Rolling ring of fixed-width frames (conv histories, attention caches).
template <typename T>
struct FrameRing {
    int64_t width = 0;
    int64_t capacity = 0;
    int64_t count = 0;
    int64_t head = 0; // slot of the oldest frame
    std::vector<T> buf;

    void init(int64_t w, int64_t cap) {
        width = w;
        capacity = cap;
        count = head = 0;
        buf.assign(static_cast<size_t>(w * cap), T(0));
    }
    void push(const T* frame);
    // i in [0, count), 0 = oldest
    const T* at(int64_t i) const {
        return buf.data() + ((head + i) % capacity) * width;
    }
};

// Stateful frame-by-frame inference. Processing a stream hop by hop produces
// the same samples as the batch path: both run the identical per-frame
// kernels, so agreement is exact, not just within tolerance.
//
// One StreamState serves one logical stream and must not be called
// concurrently; distinct states are fully independent.
template <typename T>
class StreamState {
public:
    StreamState(const ModelConfig& cfg, std::shared_ptr<const WeightStore<T>> weights);

    // Feed exactly one hop (160 samples at 16 kHz) of mic and far-end audio.
    // Returns one hop of enhanced audio once the first full analysis window
    // has been seen, nothing before that.
    std::optional<std::vector<T>> push(const T* mic, const T* far, int64_t n);

    // Drains the overlap-add tail (win_len - hop samples); the total output
    // length then equals the total input length. A second flush is empty.
    std::vector<T> flush();

    int64_t frames_processed() const { return frames_; }
    const ModelConfig& config() const { return cfg_; }

    // Bytes of rolling state; constant in stream duration.
    size_t state_bytes() const;

private:
    void process_frame(); // consumes one window from the pending buffers
    void check_usable() const;

    ModelConfig cfg_;
    std::shared_ptr<const WeightStore<T>> w_;
    StftPlan<T> plan_;

    std::vector<T> mic_pend_, far_pend_;
    std::vector<T> ola_tail_; // second half of the previous synthesis frame
    int64_t frames_ = 0;
    bool flushed_ = false;
    bool poisoned_ = false;

    // per-layer input histories (kt-1 frames each)
    struct EncState {
        std::array<std::vector<T>, 4> hist;
        std::array<std::vector<T>, 4> out; // current-frame outputs (skips)
    };
    EncState enc_mic_, enc_far_;
    std::vector<T> fuse_hist_;

    struct TvaseState {
        FrameRing<T> dw_hist;                // depthwise conv input history
        std::vector<FrameRing<T>> k_cache;   // per attention group
        std::vector<FrameRing<T>> v_cache;
        FrameRing<T> dkg_hist;               // DKG feature history (M-1 frames)
    };
    std::vector<TvaseState> tvase_;

    std::array<std::vector<T>, 4> dec_hist_;
    std::vector<T> final_hist_;

    // scratch (not part of the rolling state)
    std::vector<T> scratch_a_, scratch_b_, scratch_c_, scratch_d_;
    std::vector<T> spec_mic_, spec_far_, spec_out_, synth_;
};

StreamState<float> stream_create(const ModelWeights& w);
StreamState<double> stream_create_f64(const ModelWeights& w);

} // namespace tvase
