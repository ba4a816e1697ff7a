#include "tvase/streaming.hpp"

#include <cmath>
#include <cstring>

namespace tvase {

template <typename T>
void FrameRing<T>::push(const T* frame) {
    if (capacity == 0) return;
    const int64_t slot = count < capacity ? (head + count) % capacity : head;
    std::memcpy(buf.data() + slot * width, frame, sizeof(T) * width);
    if (count < capacity)
        ++count;
    else
        head = (head + 1) % capacity;
}

template struct FrameRing<float>;
template struct FrameRing<double>;

namespace {

template <typename T>
struct Layer {
    const T* w;
    const T* b;
    const T* gamma = nullptr;
    const T* beta = nullptr;
    const T* mean = nullptr;
    const T* var = nullptr;
    const T* slope = nullptr;
};

template <typename T>
Layer<T> conv_layer(const WeightStore<T>& w, const std::string& base, bool bn_prelu) {
    Layer<T> l;
    l.w = w.get(base + ".conv.w").ptr();
    l.b = w.get(base + ".conv.b").ptr();
    if (bn_prelu) {
        l.gamma = w.get(base + ".bn.gamma").ptr();
        l.beta = w.get(base + ".bn.beta").ptr();
        l.mean = w.get(base + ".bn.mean").ptr();
        l.var = w.get(base + ".bn.var").ptr();
        l.slope = w.get(base + ".prelu.slope").ptr();
    }
    return l;
}

} // namespace

template <typename T>
StreamState<T>::StreamState(const ModelConfig& cfg, std::shared_ptr<const WeightStore<T>> weights)
    : cfg_(cfg), w_(std::move(weights)), plan_{} {
    cfg_.validate();
    const int64_t f = cfg_.freq_bins;
    if (f != plan_.config().bins())
        throw ValueError("streaming: model frequency bins must match the 320-point DFT");
    // encoder histories: layer i sees the previous frame of its own input
    int64_t fi = f;
    int64_t ci = 2;
    for (int i = 0; i < 4; ++i) {
        enc_mic_.hist[static_cast<size_t>(i)].assign(static_cast<size_t>(ci * fi), T(0));
        enc_far_.hist[static_cast<size_t>(i)].assign(static_cast<size_t>(ci * fi), T(0));
        const int64_t fo = (fi + 2 * cfg_.enc_freq_pad[i] - cfg_.enc_kf) / cfg_.enc_freq_stride[i] + 1;
        enc_mic_.out[static_cast<size_t>(i)].assign(static_cast<size_t>(cfg_.enc_channels[i] * fo), T(0));
        enc_far_.out[static_cast<size_t>(i)].assign(static_cast<size_t>(cfg_.enc_channels[i] * fo), T(0));
        ci = cfg_.enc_channels[i];
        fi = fo;
    }
    fuse_hist_.assign(static_cast<size_t>(2 * cfg_.enc_channels[3] * cfg_.latent_freq), T(0));

    tvase_.resize(static_cast<size_t>(cfg_.num_tvase));
    for (auto& tv : tvase_) {
        tv.dw_hist.init(cfg_.tcm_channels[0], cfg_.tcm_dw_kernel - 1);
        tv.k_cache.resize(static_cast<size_t>(cfg_.attn_groups));
        tv.v_cache.resize(static_cast<size_t>(cfg_.attn_groups));
        for (int64_t g = 0; g < cfg_.attn_groups; ++g) {
            tv.k_cache[static_cast<size_t>(g)].init(cfg_.attn_qkv_channels, cfg_.attn_window);
            tv.v_cache[static_cast<size_t>(g)].init(cfg_.attn_qkv_channels, cfg_.attn_window);
        }
        if (cfg_.dkg != DkgVariant::none)
            tv.dkg_hist.init(cfg_.latent_width(), cfg_.dkg_kernel - 1);
    }

    int64_t dc = cfg_.latent_channels;
    int64_t df = cfg_.latent_freq;
    for (int i = 0; i < 4; ++i) {
        dec_hist_[static_cast<size_t>(i)].assign(static_cast<size_t>(dc * df), T(0));
        df = (df - 1) * cfg_.dec_freq_stride[i] - 2 * cfg_.dec_freq_pad[i] + cfg_.dec_kf;
        dc = cfg_.dec_channels[i];
    }
    final_hist_.assign(static_cast<size_t>(cfg_.final_channels * f), T(0));

    mic_pend_.reserve(static_cast<size_t>(plan_.config().win_len + plan_.config().hop));
    far_pend_.reserve(static_cast<size_t>(plan_.config().win_len + plan_.config().hop));
    ola_tail_.assign(static_cast<size_t>(plan_.config().win_len - plan_.config().hop), T(0));
    spec_mic_.resize(static_cast<size_t>(2 * f));
    spec_far_.resize(static_cast<size_t>(2 * f));
    spec_out_.resize(static_cast<size_t>(2 * f));
    synth_.resize(static_cast<size_t>(plan_.config().win_len));
    // scratch must cover the widest per-frame intermediate anywhere in the net
    int64_t scratch64 = cfg_.latent_width() * cfg_.dkg_kernel;
    scratch64 = std::max(scratch64, 2 * cfg_.enc_channels[3] * cfg_.latent_freq);
    scratch64 = std::max(scratch64, cfg_.tcm_channels[0]);
    scratch64 = std::max(scratch64, cfg_.tcm_channels[1]);
    {
        int64_t ef = f, ec = 2;
        for (int i = 0; i < 4; ++i) {
            ef = (ef + 2 * cfg_.enc_freq_pad[i] - cfg_.enc_kf) / cfg_.enc_freq_stride[i] + 1;
            ec = cfg_.enc_channels[i];
            scratch64 = std::max(scratch64, ec * ef);
        }
        int64_t ddf = cfg_.latent_freq, ddc = cfg_.latent_channels;
        for (int i = 0; i < 4; ++i) {
            scratch64 = std::max(scratch64, 2 * ddc * ddf); // gate concat
            ddf = (ddf - 1) * cfg_.dec_freq_stride[i] - 2 * cfg_.dec_freq_pad[i] + cfg_.dec_kf;
            ddc = cfg_.dec_channels[i];
            scratch64 = std::max(scratch64, ddc * ddf);
        }
    }
    const size_t scratch = static_cast<size_t>(scratch64);
    scratch_a_.resize(scratch);
    scratch_b_.resize(scratch);
    scratch_c_.resize(scratch);
    scratch_d_.resize(scratch);
}

template <typename T>
void StreamState<T>::check_usable() const {
    if (poisoned_)
        throw StateError("stream state poisoned by an earlier error; create a fresh stream");
}

template <typename T>
std::optional<std::vector<T>> StreamState<T>::push(const T* mic, const T* far, int64_t n) {
    check_usable();
    try {
        if (flushed_) throw StateError("stream already flushed");
        if (n != plan_.config().hop)
            throw ValueError("stream push requires exactly " + std::to_string(plan_.config().hop) +
                             " samples per call, got " + std::to_string(n));
        if (!mic || !far) throw ValueError("stream push: null sample pointers");
        mic_pend_.insert(mic_pend_.end(), mic, mic + n);
        far_pend_.insert(far_pend_.end(), far, far + n);
        if (static_cast<int64_t>(mic_pend_.size()) < plan_.config().win_len) return std::nullopt;
        process_frame();
        const int hop = plan_.config().hop;
        const int win = plan_.config().win_len;
        const std::vector<T>& wnd = plan_.window();
        std::vector<T> out(static_cast<size_t>(hop));
        const bool first = frames_ == 1;
        for (int i = 0; i < hop; ++i) {
            // batch accumulates the older frame's tap first, keep that order
            T den = first ? T(0) : wnd[static_cast<size_t>(i + hop)] * wnd[static_cast<size_t>(i + hop)];
            den += wnd[static_cast<size_t>(i)] * wnd[static_cast<size_t>(i)];
            const T num = ola_tail_[static_cast<size_t>(i)] + synth_[static_cast<size_t>(i)];
            out[static_cast<size_t>(i)] = den > T(1e-12) ? num / den : T(0);
        }
        std::memcpy(ola_tail_.data(), synth_.data() + hop, sizeof(T) * static_cast<size_t>(win - hop));
        mic_pend_.erase(mic_pend_.begin(), mic_pend_.begin() + hop);
        far_pend_.erase(far_pend_.begin(), far_pend_.begin() + hop);
        return out;
    } catch (...) {
        poisoned_ = true;
        throw;
    }
}

template <typename T>
std::vector<T> StreamState<T>::flush() {
    check_usable();
    if (flushed_) return {};
    flushed_ = true;
    if (frames_ == 0) return {};
    const int hop = plan_.config().hop;
    const std::vector<T>& wnd = plan_.window();
    std::vector<T> out(static_cast<size_t>(hop));
    for (int i = 0; i < hop; ++i) {
        const T den = wnd[static_cast<size_t>(i + hop)] * wnd[static_cast<size_t>(i + hop)];
        out[static_cast<size_t>(i)] = den > T(1e-12) ? ola_tail_[static_cast<size_t>(i)] / den : T(0);
    }
    return out;
}

template <typename T>
size_t StreamState<T>::state_bytes() const {
    size_t bytes = (mic_pend_.capacity() + far_pend_.capacity() + ola_tail_.size()) * sizeof(T);
    for (int i = 0; i < 4; ++i)
        bytes += (enc_mic_.hist[static_cast<size_t>(i)].size() + enc_far_.hist[static_cast<size_t>(i)].size() +
                  dec_hist_[static_cast<size_t>(i)].size()) *
                 sizeof(T);
    bytes += (fuse_hist_.size() + final_hist_.size()) * sizeof(T);
    for (const auto& tv : tvase_) {
        bytes += tv.dw_hist.buf.size() * sizeof(T);
        bytes += tv.dkg_hist.buf.size() * sizeof(T);
        for (const auto& r : tv.k_cache) bytes += r.buf.size() * sizeof(T);
        for (const auto& r : tv.v_cache) bytes += r.buf.size() * sizeof(T);
    }
    return bytes;
}

template <typename T>
void StreamState<T>::process_frame() {
    const WeightStore<T>& w = *w_;
    const int64_t f = cfg_.freq_bins;
    const int64_t bins = f;
    plan_.analyze_frame(mic_pend_.data(), spec_mic_.data(), spec_mic_.data() + bins);
    plan_.analyze_frame(far_pend_.data(), spec_far_.data(), spec_far_.data() + bins);
    const int64_t t = frames_;
    const T eps = static_cast<T>(cfg_.bn_eps);

    // ---- encoders ----
    auto run_encoder = [&](EncState& enc, const char* which, const std::vector<T>& spec_frame) {
        const T* cur = spec_frame.data();
        int64_t cin = 2;
        int64_t fin = f;
        for (int i = 0; i < 4; ++i) {
            ConvSpec cs;
            cs.in_channels = cin;
            cs.out_channels = cfg_.enc_channels[i];
            cs.kt = cfg_.enc_kt;
            cs.kf = cfg_.enc_kf;
            cs.sf = cfg_.enc_freq_stride[i];
            cs.freq_pad = cfg_.enc_freq_pad[i];
            const int64_t fo = cs.out_freq(fin);
            const std::string base = std::string(which) + "." + std::to_string(i);
            Layer<T> l = conv_layer(w, base, true);
            std::vector<T>& hist = enc.hist[static_cast<size_t>(i)];
            const T* frames[2] = {t >= 1 ? hist.data() : nullptr, cur};
            conv2d_frame(cs, l.w, l.b, frames, fin, scratch_a_.data());
            // history now holds this frame's input for the next step
            std::memcpy(hist.data(), cur, sizeof(T) * static_cast<size_t>(cin * fin));
            std::vector<T>& out = enc.out[static_cast<size_t>(i)];
            batchnorm_frame(cs.out_channels, fo, l.gamma, l.beta, l.mean, l.var, eps,
                            scratch_a_.data(), scratch_b_.data());
            prelu_frame(cs.out_channels, fo, l.slope, scratch_b_.data(), out.data());
            cur = out.data();
            cin = cs.out_channels;
            fin = fo;
        }
    };
    run_encoder(enc_mic_, "enc_mic", spec_mic_);
    run_encoder(enc_far_, "enc_far", spec_far_);

    // ---- fusion ----
    const int64_t ce = cfg_.enc_channels[3];
    const int64_t lf = cfg_.latent_freq;
    std::vector<T>& cat = scratch_c_;
    std::memcpy(cat.data(), enc_mic_.out[3].data(), sizeof(T) * static_cast<size_t>(ce * lf));
    std::memcpy(cat.data() + ce * lf, enc_far_.out[3].data(), sizeof(T) * static_cast<size_t>(ce * lf));
    {
        ConvSpec cs;
        cs.in_channels = 2 * ce;
        cs.out_channels = cfg_.fuse_channels;
        cs.kt = cfg_.enc_kt;
        cs.kf = cfg_.enc_kf;
        cs.freq_pad = (cfg_.enc_kf - 1) / 2;
        Layer<T> l = conv_layer(w, "fuse", true);
        const T* frames[2] = {t >= 1 ? fuse_hist_.data() : nullptr, cat.data()};
        conv2d_frame(cs, l.w, l.b, frames, lf, scratch_a_.data());
        std::memcpy(fuse_hist_.data(), cat.data(), sizeof(T) * static_cast<size_t>(2 * ce * lf));
        batchnorm_frame(cs.out_channels, lf, l.gamma, l.beta, l.mean, l.var, eps, scratch_a_.data(),
                        scratch_b_.data());
        prelu_frame(cs.out_channels, lf, l.slope, scratch_b_.data(), scratch_a_.data());
    }
    const int64_t width = cfg_.latent_width();
    std::vector<T> latent(static_cast<size_t>(width));
    for (int64_t fi = 0; fi < lf; ++fi)
        for (int64_t c = 0; c < cfg_.fuse_channels; ++c)
            latent[static_cast<size_t>(fi * cfg_.fuse_channels + c)] =
                scratch_a_[static_cast<size_t>(c * lf + fi)];

    // ---- TVASE stack ----
    std::vector<T> x = latent;
    std::vector<T> r(static_cast<size_t>(width));
    std::vector<T> att(static_cast<size_t>(width));
    const int64_t cg = cfg_.attn_qkv_channels;
    std::vector<T> xg(static_cast<size_t>(std::max(cg, cfg_.latent_channels)));
    std::vector<T> qv(static_cast<size_t>(cg)), kv(static_cast<size_t>(cg)),
        vv(static_cast<size_t>(cg)), tmp(static_cast<size_t>(cg));
    std::vector<T> scores(static_cast<size_t>(cfg_.attn_window)), probs(static_cast<size_t>(cfg_.attn_window));
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(cg)));
    for (int j = 0; j < cfg_.num_tvase; ++j) {
        TvaseState& tv = tvase_[static_cast<size_t>(j)];
        const std::string p = "tvase." + std::to_string(j);
        // TCM
        {
            ConvSpec pw1{width, cfg_.tcm_channels[0], 1};
            Layer<T> l = conv_layer(w, p + ".tcm.pw1", true);
            const T* frames1[1] = {x.data()};
            conv1d_frame(pw1, l.w, l.b, frames1, scratch_a_.data());
            batchnorm_frame(pw1.out_channels, 1, l.gamma, l.beta, l.mean, l.var, eps,
                            scratch_a_.data(), scratch_b_.data());
            prelu_frame(pw1.out_channels, 1, l.slope, scratch_b_.data(), scratch_a_.data());

            ConvSpec dw;
            dw.in_channels = cfg_.tcm_channels[0];
            dw.out_channels = cfg_.tcm_channels[1];
            dw.kt = cfg_.tcm_dw_kernel;
            dw.depthwise = true;
            Layer<T> ld = conv_layer(w, p + ".tcm.dw", true);
            std::vector<const T*> taps(static_cast<size_t>(dw.kt));
            const int64_t hist_n = tv.dw_hist.count;
            for (int dt = 0; dt < dw.kt; ++dt) {
                const int64_t lag = dw.kt - 1 - dt; // 0 = current
                if (lag == 0)
                    taps[static_cast<size_t>(dt)] = scratch_a_.data();
                else
                    taps[static_cast<size_t>(dt)] = lag <= hist_n ? tv.dw_hist.at(hist_n - lag) : nullptr;
            }
            conv1d_frame(dw, ld.w, ld.b, taps.data(), scratch_b_.data());
            tv.dw_hist.push(scratch_a_.data());
            batchnorm_frame(dw.out_channels, 1, ld.gamma, ld.beta, ld.mean, ld.var, eps,
                            scratch_b_.data(), scratch_c_.data());
            prelu_frame(dw.out_channels, 1, ld.slope, scratch_c_.data(), scratch_b_.data());

            ConvSpec pw2{cfg_.tcm_channels[1], cfg_.tcm_channels[2], 1};
            Layer<T> l2 = conv_layer(w, p + ".tcm.pw2", true);
            const T* frames2[1] = {scratch_b_.data()};
            conv1d_frame(pw2, l2.w, l2.b, frames2, scratch_c_.data());
            batchnorm_frame(pw2.out_channels, 1, l2.gamma, l2.beta, l2.mean, l2.var, eps,
                            scratch_c_.data(), r.data());
            prelu_frame(pw2.out_channels, 1, l2.slope, r.data(), r.data());
            for (int64_t c = 0; c < width; ++c) r[static_cast<size_t>(c)] += x[static_cast<size_t>(c)];
        }
        // grouped windowed attention
        for (int64_t g = 0; g < cfg_.attn_groups; ++g) {
            const std::string gp = p + ".attn.g" + std::to_string(g);
            std::memcpy(xg.data(), r.data() + g * cg, sizeof(T) * static_cast<size_t>(cg));
            const T* fx[1] = {xg.data()};
            ConvSpec qkv{cg, cg, 1};
            auto project = [&](const char* name, std::vector<T>& dst) {
                Layer<T> l = conv_layer(w, gp + "." + name, true);
                conv1d_frame(qkv, l.w, l.b, fx, tmp.data());
                batchnorm_frame(cg, 1, l.gamma, l.beta, l.mean, l.var, eps, tmp.data(), dst.data());
                prelu_frame(cg, 1, l.slope, dst.data(), dst.data());
            };
            project("q", qv);
            project("k", kv);
            project("v", vv);
            FrameRing<T>& kr = tv.k_cache[static_cast<size_t>(g)];
            FrameRing<T>& vr = tv.v_cache[static_cast<size_t>(g)];
            kr.push(kv.data());
            vr.push(vv.data());
            const int64_t n = kr.count;
            for (int64_t i = 0; i < n; ++i)
                scores[static_cast<size_t>(i)] = dot_strict(qv.data(), kr.at(i), cg) * scale;
            softmax_span(scores.data(), n, probs.data());
            T* out_row = att.data() + g * cg;
            std::fill(out_row, out_row + cg, T(0));
            for (int64_t i = 0; i < n; ++i) {
                const T pw = probs[static_cast<size_t>(i)];
                const T* vj = vr.at(i);
                for (int64_t c = 0; c < cg; ++c) out_row[c] += pw * vj[c];
            }
        }
        {
            ConvSpec os{width, width, 1};
            Layer<T> l = conv_layer(w, p + ".attn.out", true);
            const T* fo[1] = {att.data()};
            conv1d_frame(os, l.w, l.b, fo, scratch_a_.data());
            batchnorm_frame(width, 1, l.gamma, l.beta, l.mean, l.var, eps, scratch_a_.data(),
                            scratch_b_.data());
            prelu_frame(width, 1, l.slope, scratch_b_.data(), att.data());
        }
        // DKG
        if (cfg_.dkg == DkgVariant::none) {
            x = att;
            continue;
        }
        const int64_t m = cfg_.dkg_kernel;
        std::vector<T>& kernel = scratch_d_; // width*m values, (channel, tap) row-major
        if (cfg_.dkg == DkgVariant::non_separable) {
            const int64_t c = cfg_.latent_channels;
            ConvSpec gs{c, cfg_.dkg_nonsep_channels, 1};
            for (int64_t g = 0; g < cfg_.latent_freq; ++g) {
                std::memcpy(xg.data(), att.data() + g * c, sizeof(T) * static_cast<size_t>(c));
                const T* fg[1] = {xg.data()};
                Layer<T> l = conv_layer(w, p + ".dkg.g" + std::to_string(g), false);
                conv1d_frame(gs, l.w, l.b, fg, kernel.data() + g * c * m);
            }
        } else {
            ConvSpec s0{width, cfg_.dkg_k0_channels[0], 1};
            Layer<T> l0 = conv_layer(w, p + ".dkg.k0.0", true);
            const T* fa[1] = {att.data()};
            conv1d_frame(s0, l0.w, l0.b, fa, scratch_a_.data());
            batchnorm_frame(s0.out_channels, 1, l0.gamma, l0.beta, l0.mean, l0.var, eps,
                            scratch_a_.data(), scratch_b_.data());
            prelu_frame(s0.out_channels, 1, l0.slope, scratch_b_.data(), scratch_a_.data());
            ConvSpec s1{cfg_.dkg_k0_channels[0], cfg_.dkg_k0_channels[1], 1};
            Layer<T> l1 = conv_layer(w, p + ".dkg.k0.1", true);
            const T* fb[1] = {scratch_a_.data()};
            conv1d_frame(s1, l1.w, l1.b, fb, scratch_b_.data());
            batchnorm_frame(s1.out_channels, 1, l1.gamma, l1.beta, l1.mean, l1.var, eps,
                            scratch_b_.data(), scratch_c_.data());
            prelu_frame(s1.out_channels, 1, l1.slope, scratch_c_.data(), scratch_b_.data());
            ConvSpec s2{cfg_.dkg_k0_channels[1], cfg_.dkg_k0_channels[2], 1};
            Layer<T> l2 = conv_layer(w, p + ".dkg.k0.2", false);
            const T* fc[1] = {scratch_b_.data()};
            conv1d_frame(s2, l2.w, l2.b, fc, scratch_c_.data()); // K0(t), m values
            ConvSpec ss{width, cfg_.dkg_ks_channels, 1};
            Layer<T> ls = conv_layer(w, p + ".dkg.ks", false);
            conv1d_frame(ss, ls.w, ls.b, fa, scratch_a_.data()); // Ks(t), width values
            for (int64_t c = 0; c < width; ++c)
                for (int64_t i = 0; i < m; ++i)
                    kernel[static_cast<size_t>(c * m + i)] =
                        scratch_a_[static_cast<size_t>(c)] * scratch_c_[static_cast<size_t>(i)];
        }
        // apply: out(c) = sum_m K(c,m) * feat(t-(M-1)+m, c)
        const int64_t hist_n = tv.dkg_hist.count;
        for (int64_t c = 0; c < width; ++c) {
            T acc = 0;
            const T* kc = kernel.data() + c * m;
            for (int64_t i = 0; i < m; ++i) {
                const int64_t lag = m - 1 - i; // frames behind current
                if (lag == 0)
                    acc += kc[i] * att[static_cast<size_t>(c)];
                else if (lag <= hist_n)
                    acc += kc[i] * tv.dkg_hist.at(hist_n - lag)[c];
            }
            x[static_cast<size_t>(c)] = acc;
        }
        tv.dkg_hist.push(att.data());
    }

    // ---- decoder ----
    std::vector<T>& d = scratch_a_;
    for (int64_t fi = 0; fi < lf; ++fi)
        for (int64_t c = 0; c < cfg_.latent_channels; ++c)
            d[static_cast<size_t>(c * lf + fi)] = x[static_cast<size_t>(fi * cfg_.latent_channels + c)];
    int64_t dc = cfg_.latent_channels;
    int64_t df = lf;
    for (int i = 0; i < 4; ++i) {
        const std::string p = "dec." + std::to_string(i);
        const T* skip = enc_mic_.out[static_cast<size_t>(3 - i)].data();
        // gate: sigmoid(conv1x1([skip; d])), out = d + gate .* skip
        {
            ConvSpec gs;
            gs.in_channels = 2 * dc;
            gs.out_channels = dc;
            Layer<T> l = conv_layer(w, p + ".gate", false);
            std::memcpy(scratch_c_.data(), skip, sizeof(T) * static_cast<size_t>(dc * df));
            std::memcpy(scratch_c_.data() + dc * df, d.data(), sizeof(T) * static_cast<size_t>(dc * df));
            const T* fg[1] = {scratch_c_.data()};
            conv2d_frame(gs, l.w, l.b, fg, df, scratch_b_.data());
            for (int64_t ii = 0; ii < dc * df; ++ii) {
                const T gsig = T(1) / (T(1) + std::exp(-scratch_b_[static_cast<size_t>(ii)]));
                d[static_cast<size_t>(ii)] += gsig * skip[ii];
            }
        }
        ConvSpec cs;
        cs.in_channels = dc;
        cs.out_channels = cfg_.dec_channels[i];
        cs.kt = cfg_.dec_kt;
        cs.kf = cfg_.dec_kf;
        cs.sf = cfg_.dec_freq_stride[i];
        cs.freq_pad = cfg_.dec_freq_pad[i];
        cs.transposed = true;
        const T* dw = w.get(p + ".deconv.w").ptr();
        const T* db = w.get(p + ".deconv.b").ptr();
        std::vector<T>& hist = dec_hist_[static_cast<size_t>(i)];
        const T* frames[2] = {t >= 1 ? hist.data() : nullptr, d.data()};
        transposed_conv2d_frame(cs, dw, db, frames, df, scratch_b_.data());
        std::memcpy(hist.data(), d.data(), sizeof(T) * static_cast<size_t>(dc * df));
        const int64_t fo = cs.out_freq(df);
        if (i < 3) {
            const T* gamma = w.get(p + ".bn.gamma").ptr();
            const T* beta = w.get(p + ".bn.beta").ptr();
            const T* mean = w.get(p + ".bn.mean").ptr();
            const T* var = w.get(p + ".bn.var").ptr();
            const T* slope = w.get(p + ".prelu.slope").ptr();
            batchnorm_frame(cs.out_channels, fo, gamma, beta, mean, var, eps, scratch_b_.data(),
                            scratch_c_.data());
            prelu_frame(cs.out_channels, fo, slope, scratch_c_.data(), d.data());
        } else {
            std::memcpy(d.data(), scratch_b_.data(), sizeof(T) * static_cast<size_t>(cs.out_channels * fo));
        }
        dc = cfg_.dec_channels[i];
        df = fo;
    }
    {
        ConvSpec fin;
        fin.in_channels = cfg_.final_channels;
        fin.out_channels = cfg_.final_channels;
        fin.kt = cfg_.dec_kt;
        fin.kf = cfg_.dec_kf;
        fin.freq_pad = cfg_.final_freq_pad;
        Layer<T> l = conv_layer(w, "dec.final", false);
        const T* frames[2] = {t >= 1 ? final_hist_.data() : nullptr, d.data()};
        conv2d_frame(fin, l.w, l.b, frames, f, spec_out_.data());
        std::memcpy(final_hist_.data(), d.data(), sizeof(T) * static_cast<size_t>(cfg_.final_channels * f));
    }
    plan_.synth_frame(spec_out_.data(), spec_out_.data() + bins, synth_.data());
    ++frames_;
}

template class StreamState<float>;
template class StreamState<double>;

StreamState<float> stream_create(const ModelWeights& w) {
    auto store = std::make_shared<const WeightStore<float>>(w.store);
    return StreamState<float>(w.config, std::move(store));
}

StreamState<double> stream_create_f64(const ModelWeights& w) {
    auto store = std::make_shared<const WeightStore<double>>(w.store.cast<double>());
    return StreamState<double>(w.config, std::move(store));
}

} // namespace tvase
