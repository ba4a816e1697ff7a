#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tvase/nn.hpp"
#include "tvase/rng.hpp"
#include "tvase/stft.hpp"
#include "tvase/tensor.hpp"

namespace tvase {

enum class DkgVariant { none, non_separable, separable };

const char* dkg_variant_name(DkgVariant v);
DkgVariant dkg_variant_from_name(const std::string& name);

// Full hyperparameter set of the joint model. Defaults reproduce the
// reference geometry: 161-bin input, 16/32/64/64 encoder ladder down to a
// 64x5 latent merged to 320 channels, four TVASE blocks, gated decoder back
// to 2x161.
struct ModelConfig {
    int64_t freq_bins = 161;

    std::array<int64_t, 4> enc_channels{16, 32, 64, 64};
    std::array<int, 4> enc_freq_stride{1, 4, 4, 2};
    std::array<int, 4> enc_freq_pad{2, 2, 2, 1};
    int enc_kt = 2;
    int enc_kf = 5;

    int64_t fuse_channels = 64;
    int64_t latent_freq = 5;     // F'
    int64_t latent_channels = 64; // C

    int num_tvase = 4;
    std::array<int64_t, 3> tcm_channels{256, 256, 320};
    int tcm_dw_kernel = 3;

    int64_t attn_groups = 5;        // I
    int64_t attn_qkv_channels = 64; // C'
    int64_t attn_window = 100;      // T_w

    DkgVariant dkg = DkgVariant::separable;
    int64_t dkg_kernel = 10; // M
    int64_t dkg_nonsep_channels = 640;
    std::array<int64_t, 3> dkg_k0_channels{80, 20, 10};
    int64_t dkg_ks_channels = 320;

    std::array<int64_t, 4> dec_channels{64, 32, 16, 2};
    std::array<int, 4> dec_freq_stride{2, 4, 4, 1};
    std::array<int, 4> dec_freq_pad{1, 2, 2, 2};
    int dec_kt = 2;
    int dec_kf = 5;
    int64_t final_channels = 2;
    int final_freq_pad = 2;

    double bn_eps = 1e-5;

    int64_t latent_width() const { return latent_freq * latent_channels; }
    void validate() const;
};

// Named-tensor container. Entry order is the build order, which is also the
// per-layer RNG stream order and the serialization order.
template <typename T>
struct WeightStore {
    std::vector<std::pair<std::string, Tensor<T>>> entries;
    std::unordered_map<std::string, size_t> index;

    Tensor<T>& add(const std::string& name, Tensor<T> t);
    const Tensor<T>& get(const std::string& name) const;
    bool has(const std::string& name) const { return index.count(name) != 0; }

    template <typename U>
    WeightStore<U> cast() const {
        WeightStore<U> out;
        out.entries.reserve(entries.size());
        for (const auto& [name, t] : entries) out.add(name, t.template cast<U>());
        return out;
    }
};

struct ModelWeights {
    ModelConfig config;
    WeightStore<float> store;
};

// Deterministic Xavier-initialized model; identical seed => identical bits.
ModelWeights build(const ModelConfig& config, uint64_t seed);

// BN running statistics (.mean/.var) are buffers, not parameters.
int64_t count_params(const ModelWeights& w);
bool is_buffer_tensor(const std::string& name);

struct ParamRow {
    std::string name;
    int64_t numel;
    bool buffer;
};
std::vector<ParamRow> param_report(const ModelWeights& w);

void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

// ---- forward passes ---------------------------------------------------------
// Feature tensors are frame-major: {T, C, F} for 2-D stages, {T, C} after the
// frequency merge. All paths are causal in T.

template <typename T>
std::vector<Tensor<T>> encoder_forward(const Tensor<T>& spec_frames, const WeightStore<T>& w,
                                       const std::string& which, const ModelConfig& cfg);

template <typename T>
Tensor<T> fuse(const Tensor<T>& enc_mic, const Tensor<T>& enc_far, const WeightStore<T>& w,
               const ModelConfig& cfg);

// {T, C, F} <-> {T, F*C} with frequency-major channel blocks.
template <typename T>
Tensor<T> merge_freq_channels(const Tensor<T>& x);
template <typename T>
Tensor<T> unmerge_freq_channels(const Tensor<T>& x, int64_t channels, int64_t freq);

template <typename T>
Tensor<T> tcm_forward(const Tensor<T>& x, const WeightStore<T>& w, const std::string& prefix,
                      const ModelConfig& cfg);

template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const WeightStore<T>& w, const std::string& prefix,
                            const ModelConfig& cfg);

// kernels are {T, F'C, M}; K[t][c][m] weights input frame t-(M-1)+m.
template <typename T>
Tensor<T> dkg_generate_nonseparable(const Tensor<T>& x, const WeightStore<T>& w,
                                    const std::string& prefix, const ModelConfig& cfg);

template <typename T>
Tensor<T> dkg_generate_separable(const Tensor<T>& x, const WeightStore<T>& w,
                                 const std::string& prefix, const ModelConfig& cfg);

// Per-channel, per-frame FIR over the last M frames with zero left padding.
template <typename T>
Tensor<T> dkg_apply(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
Tensor<T> tvase_forward(const Tensor<T>& x, const WeightStore<T>& w, int module_index,
                        const ModelConfig& cfg);

// out = D + sigmoid(conv1x1([E; D])) .* E
template <typename T>
Tensor<T> gated_block(const Tensor<T>& skip, const Tensor<T>& dec, const WeightStore<T>& w,
                      const std::string& prefix);

template <typename T>
Tensor<T> decoder_forward(const Tensor<T>& latent, const std::vector<Tensor<T>>& mic_skips,
                          const WeightStore<T>& w, const ModelConfig& cfg);

// Whole network: mic/far spectra {T, 2, F} -> estimated near-end {T, 2, F}.
template <typename T>
Tensor<T> model_forward(const Tensor<T>& mic, const Tensor<T>& far, const WeightStore<T>& w,
                        const ModelConfig& cfg);

template <typename T>
Spectrogram<T> model_forward(const Spectrogram<T>& mic, const Spectrogram<T>& far,
                             const WeightStore<T>& w, const ModelConfig& cfg);

Spectrogram<float> model_forward(const Spectrogram<float>& mic, const Spectrogram<float>& far,
                                 const ModelWeights& w);

} // namespace tvase
