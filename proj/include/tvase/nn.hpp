#pragma once

#include <cstdint>

#include "tvase/rng.hpp"
#include "tvase/tensor.hpp"

namespace tvase {

// Convolution description. Time padding is always causal: kt-1 zero frames of
// past are implied, so output frame t never reads input frames > t. Frequency
// padding is symmetric. Transposed layers produce (F_in-1)*sf - 2*freq_pad + kf
// frequency bins and keep T frames by dropping the trailing extra frame.
struct ConvSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int kt = 1;
    int kf = 1;
    int st = 1;
    int sf = 1;
    int freq_pad = 0;
    bool depthwise = false;
    bool transposed = false;

    int64_t out_freq(int64_t f_in) const {
        if (transposed) return (f_in - 1) * sf - 2 * freq_pad + kf;
        return (f_in + 2 * freq_pad - kf) / sf + 1;
    }
};

// Deterministic dot product: fixed accumulator structure, identical result at
// every call site regardless of inlining, so the streaming and batch paths
// agree bit for bit.
template <typename T>
inline T dot_strict(const T* a, const T* b, int64_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

// ---- per-frame kernels -----------------------------------------------------
// in_frames[dt] points at the [C_in][F] block of input frame t-(kt-1)+dt
// (dt == kt-1 is the current frame); null means zero history. The batch ops
// below and the streaming engine both call these, which is what makes
// stream-vs-batch agreement exact.

template <typename T>
void conv2d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                  const T* const* in_frames, int64_t f_in, T* out_frame);

template <typename T>
void transposed_conv2d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                             const T* const* in_frames, int64_t f_in, T* out_frame);

// weights layout [C_out][C_in][k]; depthwise layout [C][k].
template <typename T>
void conv1d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                  const T* const* in_frames, T* out_frame);

template <typename T>
void batchnorm_frame(int64_t channels, int64_t per_channel, const T* gamma, const T* beta,
                     const T* mean, const T* var, T eps, const T* in, T* out);

template <typename T>
void prelu_frame(int64_t channels, int64_t per_channel, const T* slope, const T* in, T* out);

// Numerically stable softmax over a contiguous span (max-subtract, exp,
// normalize). Shared by masked_softmax and the windowed attention.
template <typename T>
void softmax_span(const T* scores, int64_t n, T* out);

// ---- whole-tensor operations ------------------------------------------------

// input {T, C_in, F} -> {T, C_out, F'}; weights {C_out, C_in, kt, kf}, bias {C_out}.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias);

// input {T, C_in, F} -> {T, C_out, F'}; weights {C_out, C_in, kt, kf}.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const ConvSpec& spec,
                            const Tensor<T>& weights, const Tensor<T>& bias);

// input {T, C_in} -> {T, C_out}; weights {C_out, C_in, k}, depthwise {C, k}.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias);

// y = gamma*(x-mean)/sqrt(var+eps) + beta, per channel (axis 1 of {T,C[,F]}).
template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& mean, const Tensor<T>& var, T eps = T(1e-5));

template <typename T>
Tensor<T> prelu(const Tensor<T>& input, const Tensor<T>& slope);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

// scores {T, T} -> row-stochastic {T, T}; entry (i,j) is nonzero only for
// 0 <= i-j <= window-1 (look-back of `window` frames including the current
// one), masked entries are exactly zero.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& scores, int64_t window);

// Uniform Xavier fill on +-sqrt(6/(fan_in+fan_out)).
template <typename T>
void xavier_fill(Tensor<T>& t, int64_t fan_in, int64_t fan_out, Rng& rng);

double xavier_bound(int64_t fan_in, int64_t fan_out);

} // namespace tvase
