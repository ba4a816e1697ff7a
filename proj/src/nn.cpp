#include "tvase/nn.hpp"

#include <algorithm>
#include <cmath>

namespace tvase {

namespace {

template <typename T>
void check_conv_weights(const ConvSpec& spec, const Tensor<T>& weights, const Tensor<T>& bias,
                        bool one_dim) {
    if (spec.in_channels < 1 || spec.out_channels < 1)
        throw ShapeError("conv: channel counts must be positive");
    if (spec.depthwise && spec.in_channels != spec.out_channels)
        throw ShapeError("conv: depthwise requires in_channels == out_channels");
    std::vector<int64_t> want;
    if (one_dim) {
        want = spec.depthwise ? std::vector<int64_t>{spec.in_channels, spec.kt}
                              : std::vector<int64_t>{spec.out_channels, spec.in_channels, spec.kt};
    } else {
        want = {spec.out_channels, spec.in_channels, spec.kt, spec.kf};
    }
    require_shape(weights, want, "conv weights");
    require_shape(bias, {spec.out_channels}, "conv bias");
}

} // namespace

template <typename T>
void conv2d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                  const T* const* in_frames, int64_t f_in, T* out_frame) {
    const int64_t f_out = spec.out_freq(f_in);
    const int64_t cin = spec.in_channels;
    const int64_t cout = spec.out_channels;
    for (int64_t co = 0; co < cout; ++co) {
        T* out_row = out_frame + co * f_out;
        std::fill(out_row, out_row + f_out, bias[co]);
        for (int dt = 0; dt < spec.kt; ++dt) {
            const T* frame = in_frames[dt];
            if (!frame) continue;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const T* in_row = frame + ci * f_in;
                const T* w = weights + ((co * cin + ci) * spec.kt + dt) * spec.kf;
                for (int kf = 0; kf < spec.kf; ++kf) {
                    const T wv = w[kf];
                    const int64_t base = kf - spec.freq_pad;
                    // valid f range: 0 <= f*sf + base < f_in
                    int64_t lo = base < 0 ? (-base + spec.sf - 1) / spec.sf : 0;
                    int64_t hi = (f_in - base + spec.sf - 1) / spec.sf;
                    hi = std::min(hi, f_out);
                    const T* src = in_row + base + lo * spec.sf;
                    if (spec.sf == 1) {
                        for (int64_t f = lo; f < hi; ++f) out_row[f] += wv * src[f - lo];
                    } else {
                        for (int64_t f = lo; f < hi; ++f) out_row[f] += wv * src[(f - lo) * spec.sf];
                    }
                }
            }
        }
    }
}

template <typename T>
void transposed_conv2d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                             const T* const* in_frames, int64_t f_in, T* out_frame) {
    const int64_t f_out = spec.out_freq(f_in);
    const int64_t cin = spec.in_channels;
    const int64_t cout = spec.out_channels;
    for (int64_t co = 0; co < cout; ++co) {
        T* out_row = out_frame + co * f_out;
        std::fill(out_row, out_row + f_out, bias[co]);
        for (int dt = 0; dt < spec.kt; ++dt) {
            // weight tap dt consumes input frame t-dt: in_frames[] is ordered
            // oldest..current, so tap dt reads in_frames[kt-1-dt].
            const T* frame = in_frames[spec.kt - 1 - dt];
            if (!frame) continue;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const T* in_row = frame + ci * f_in;
                const T* w = weights + ((co * cin + ci) * spec.kt + dt) * spec.kf;
                // out[f] += w[kf] * in[fi] where f = fi*sf + kf - pad
                for (int kf = 0; kf < spec.kf; ++kf) {
                    const T wv = w[kf];
                    const int64_t off = kf - spec.freq_pad;
                    int64_t lo = off < 0 ? (-off + spec.sf - 1) / spec.sf : 0;
                    int64_t hi = std::min(f_in, (f_out - off + spec.sf - 1) / spec.sf);
                    for (int64_t fi = lo; fi < hi; ++fi)
                        out_row[fi * spec.sf + off] += wv * in_row[fi];
                }
            }
        }
    }
}

template <typename T>
void conv1d_frame(const ConvSpec& spec, const T* weights, const T* bias,
                  const T* const* in_frames, T* out_frame) {
    const int64_t cin = spec.in_channels;
    const int64_t cout = spec.out_channels;
    const int k = spec.kt;
    if (spec.depthwise) {
        for (int64_t c = 0; c < cout; ++c) {
            T acc = bias[c];
            const T* w = weights + c * k;
            for (int dt = 0; dt < k; ++dt)
                if (in_frames[dt]) acc += w[dt] * in_frames[dt][c];
            out_frame[c] = acc;
        }
        return;
    }
    if (k == 1) {
        const T* x = in_frames[0];
        for (int64_t co = 0; co < cout; ++co)
            out_frame[co] = bias[co] + (x ? dot_strict(weights + co * cin, x, cin) : T(0));
        return;
    }
    for (int64_t co = 0; co < cout; ++co) {
        T acc = bias[co];
        for (int dt = 0; dt < k; ++dt) {
            const T* x = in_frames[dt];
            if (!x) continue;
            const T* w = weights + (co * cin) * k + dt;
            // weights [C_out][C_in][k]: tap dt strided by k across channels
            T s = 0;
            for (int64_t ci = 0; ci < cin; ++ci) s += w[ci * k] * x[ci];
            acc += s;
        }
        out_frame[co] = acc;
    }
}

template <typename T>
void batchnorm_frame(int64_t channels, int64_t per_channel, const T* gamma, const T* beta,
                     const T* mean, const T* var, T eps, const T* in, T* out) {
    for (int64_t c = 0; c < channels; ++c) {
        const T scale = gamma[c] / std::sqrt(var[c] + eps);
        const T shift = beta[c] - mean[c] * scale;
        const T* src = in + c * per_channel;
        T* dst = out + c * per_channel;
        for (int64_t i = 0; i < per_channel; ++i) dst[i] = src[i] * scale + shift;
    }
}

template <typename T>
void prelu_frame(int64_t channels, int64_t per_channel, const T* slope, const T* in, T* out) {
    for (int64_t c = 0; c < channels; ++c) {
        const T a = slope[c];
        const T* src = in + c * per_channel;
        T* dst = out + c * per_channel;
        for (int64_t i = 0; i < per_channel; ++i) dst[i] = src[i] > T(0) ? src[i] : a * src[i];
    }
}

template <typename T>
void softmax_span(const T* scores, int64_t n, T* out) {
    T mx = scores[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, scores[i]);
    T sum = 0;
    for (int64_t i = 0; i < n; ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    const T inv = T(1) / sum;
    for (int64_t i = 0; i < n; ++i) out[i] *= inv;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
    if (input.rank() != 3)
        throw ShapeError("conv2d: input must be {T, C, F}, got " + shape_str(input.shape));
    if (input.dim(1) != spec.in_channels)
        throw ShapeError("conv2d: channel axis is " + std::to_string(input.dim(1)) +
                         ", spec expects " + std::to_string(spec.in_channels));
    check_conv_weights(spec, weights, bias, false);
    if (spec.st != 1) throw ShapeError("conv2d: time stride must be 1");
    const int64_t frames = input.dim(0);
    const int64_t f_in = input.dim(2);
    const int64_t f_out = spec.out_freq(f_in);
    if (f_out < 1)
        throw ShapeError("conv2d: frequency axis collapses: f_in " + std::to_string(f_in));
    Tensor<T> out({frames, spec.out_channels, f_out});
    std::vector<const T*> ptrs(static_cast<size_t>(spec.kt));
    const int64_t in_stride = spec.in_channels * f_in;
    const int64_t out_stride = spec.out_channels * f_out;
    for (int64_t t = 0; t < frames; ++t) {
        for (int dt = 0; dt < spec.kt; ++dt) {
            const int64_t src = t - (spec.kt - 1) + dt;
            ptrs[static_cast<size_t>(dt)] = src >= 0 ? input.ptr() + src * in_stride : nullptr;
        }
        conv2d_frame(spec, weights.ptr(), bias.ptr(), ptrs.data(), f_in, out.ptr() + t * out_stride);
    }
    return out;
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const ConvSpec& spec,
                            const Tensor<T>& weights, const Tensor<T>& bias) {
    if (!spec.transposed) throw ShapeError("transposed_conv2d: spec.transposed must be set");
    if (input.rank() != 3)
        throw ShapeError("transposed_conv2d: input must be {T, C, F}, got " + shape_str(input.shape));
    if (input.dim(1) != spec.in_channels)
        throw ShapeError("transposed_conv2d: channel axis is " + std::to_string(input.dim(1)) +
                         ", spec expects " + std::to_string(spec.in_channels));
    check_conv_weights(spec, weights, bias, false);
    if (spec.st != 1) throw ShapeError("transposed_conv2d: time stride must be 1");
    const int64_t frames = input.dim(0);
    const int64_t f_in = input.dim(2);
    const int64_t f_out = spec.out_freq(f_in);
    if (f_out < 1)
        throw ShapeError("transposed_conv2d: inconsistent output size arithmetic for f_in " +
                         std::to_string(f_in));
    Tensor<T> out({frames, spec.out_channels, f_out});
    std::vector<const T*> ptrs(static_cast<size_t>(spec.kt));
    const int64_t in_stride = spec.in_channels * f_in;
    const int64_t out_stride = spec.out_channels * f_out;
    // full transposed output has frames+kt-1 frames; trailing ones depend on
    // nothing new and are dropped so frame t aligns with input frame t.
    for (int64_t t = 0; t < frames; ++t) {
        for (int dt = 0; dt < spec.kt; ++dt) {
            const int64_t src = t - (spec.kt - 1) + dt;
            ptrs[static_cast<size_t>(dt)] = src >= 0 ? input.ptr() + src * in_stride : nullptr;
        }
        transposed_conv2d_frame(spec, weights.ptr(), bias.ptr(), ptrs.data(), f_in,
                                out.ptr() + t * out_stride);
    }
    return out;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
    if (input.rank() != 2)
        throw ShapeError("conv1d: input must be {T, C}, got " + shape_str(input.shape));
    if (input.dim(1) != spec.in_channels)
        throw ShapeError("conv1d: channel axis is " + std::to_string(input.dim(1)) +
                         ", spec expects " + std::to_string(spec.in_channels));
    check_conv_weights(spec, weights, bias, true);
    const int64_t frames = input.dim(0);
    Tensor<T> out({frames, spec.out_channels});
    std::vector<const T*> ptrs(static_cast<size_t>(spec.kt));
    for (int64_t t = 0; t < frames; ++t) {
        for (int dt = 0; dt < spec.kt; ++dt) {
            const int64_t src = t - (spec.kt - 1) + dt;
            ptrs[static_cast<size_t>(dt)] = src >= 0 ? input.ptr() + src * spec.in_channels : nullptr;
        }
        conv1d_frame(spec, weights.ptr(), bias.ptr(), ptrs.data(),
                     out.ptr() + t * spec.out_channels);
    }
    return out;
}

namespace {

template <typename T>
void check_per_channel(const Tensor<T>& input, const Tensor<T>& p, const char* what) {
    if (input.rank() < 2)
        throw ShapeError(std::string(what) + ": input must have a channel axis");
    if (p.rank() != 1 || p.dim(0) != input.dim(1))
        throw ShapeError(std::string(what) + ": per-channel parameter length " +
                         std::to_string(p.numel()) + " != channel count " +
                         std::to_string(input.dim(1)));
}

} // namespace

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const Tensor<T>& mean, const Tensor<T>& var, T eps) {
    check_per_channel(input, gamma, "batchnorm");
    check_per_channel(input, beta, "batchnorm");
    check_per_channel(input, mean, "batchnorm");
    check_per_channel(input, var, "batchnorm");
    for (int64_t c = 0; c < var.numel(); ++c)
        if (var.data[static_cast<size_t>(c)] < T(0))
            throw ValueError("batchnorm: negative variance at channel " + std::to_string(c));
    const int64_t frames = input.dim(0);
    const int64_t channels = input.dim(1);
    const int64_t per = input.numel() / (frames * channels);
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    const int64_t stride = channels * per;
    for (int64_t t = 0; t < frames; ++t)
        batchnorm_frame(channels, per, gamma.ptr(), beta.ptr(), mean.ptr(), var.ptr(), eps,
                        input.ptr() + t * stride, out.ptr() + t * stride);
    return out;
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& input, const Tensor<T>& slope) {
    check_per_channel(input, slope, "prelu");
    const int64_t frames = input.dim(0);
    const int64_t channels = input.dim(1);
    const int64_t per = input.numel() / (frames * channels);
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    const int64_t stride = channels * per;
    for (int64_t t = 0; t < frames; ++t)
        prelu_frame(channels, per, slope.ptr(), input.ptr() + t * stride, out.ptr() + t * stride);
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    for (size_t i = 0; i < input.data.size(); ++i)
        out.data[i] = T(1) / (T(1) + std::exp(-input.data[i]));
    return out;
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& scores, int64_t window) {
    if (scores.rank() != 2 || scores.dim(0) != scores.dim(1))
        throw ShapeError("masked_softmax: scores must be square, got " + shape_str(scores.shape));
    if (window < 1) throw ValueError("masked_softmax: window must be >= 1");
    const int64_t n = scores.dim(0);
    Tensor<T> out({n, n});
    for (int64_t i = 0; i < n; ++i) {
        const int64_t lo = std::max<int64_t>(0, i - window + 1);
        softmax_span(scores.ptr() + i * n + lo, i - lo + 1, out.ptr() + i * n + lo);
    }
    return out;
}

double xavier_bound(int64_t fan_in, int64_t fan_out) {
    if (fan_in < 1 || fan_out < 1) throw ValueError("xavier: fans must be positive");
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
void xavier_fill(Tensor<T>& t, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = xavier_bound(fan_in, fan_out);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

#define TVASE_INSTANTIATE_NN(T)                                                                    \
    template void conv2d_frame<T>(const ConvSpec&, const T*, const T*, const T* const*, int64_t,   \
                                  T*);                                                             \
    template void transposed_conv2d_frame<T>(const ConvSpec&, const T*, const T*, const T* const*, \
                                             int64_t, T*);                                         \
    template void conv1d_frame<T>(const ConvSpec&, const T*, const T*, const T* const*, T*);       \
    template void batchnorm_frame<T>(int64_t, int64_t, const T*, const T*, const T*, const T*, T,  \
                                     const T*, T*);                                                \
    template void prelu_frame<T>(int64_t, int64_t, const T*, const T*, T*);                        \
    template void softmax_span<T>(const T*, int64_t, T*);                                          \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,              \
                                 const Tensor<T>&);                                                \
    template Tensor<T> transposed_conv2d<T>(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,   \
                                            const Tensor<T>&);                                     \
    template Tensor<T> conv1d<T>(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,              \
                                 const Tensor<T>&);                                                \
    template Tensor<T> batchnorm_infer<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                          const Tensor<T>&, const Tensor<T>&, T);                  \
    template Tensor<T> prelu<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                               \
    template Tensor<T> masked_softmax<T>(const Tensor<T>&, int64_t);                               \
    template void xavier_fill<T>(Tensor<T>&, int64_t, int64_t, Rng&);

TVASE_INSTANTIATE_NN(float)
TVASE_INSTANTIATE_NN(double)

#undef TVASE_INSTANTIATE_NN

} // namespace tvase
