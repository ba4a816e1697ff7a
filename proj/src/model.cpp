#include "tvase/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tvase {

const char* dkg_variant_name(DkgVariant v) {
    switch (v) {
        case DkgVariant::none: return "none";
        case DkgVariant::non_separable: return "non_separable";
        case DkgVariant::separable: return "separable";
    }
    return "none";
}

DkgVariant dkg_variant_from_name(const std::string& name) {
    if (name == "none") return DkgVariant::none;
    if (name == "non_separable") return DkgVariant::non_separable;
    if (name == "separable") return DkgVariant::separable;
    throw ValueError("unknown DKG variant '" + name + "'");
}

void ModelConfig::validate() const {
    if (freq_bins < 1) throw ValueError("config: freq_bins must be positive");
    if (latent_width() != tcm_channels[2])
        throw ValueError("config: TCM output channels must equal latent width F'*C");
    if (latent_width() % attn_groups != 0)
        throw ValueError("config: attention groups must divide latent width");
    if (latent_width() / attn_groups != attn_qkv_channels)
        throw ValueError("config: C' must equal F'*C / I");
    if (attn_window < 1) throw ValueError("config: attention window must be >= 1");
    if (dkg_kernel < 1) throw ValueError("config: DKG kernel size must be >= 1");
    if (dkg_nonsep_channels != latent_channels * dkg_kernel)
        throw ValueError("config: non-separable DKG group output must be C*M");
    if (dkg_k0_channels[2] != dkg_kernel)
        throw ValueError("config: last K0 conv must emit M channels");
    if (dkg_ks_channels != latent_width())
        throw ValueError("config: Ks conv must emit F'*C channels");
    if (dec_channels[3] != final_channels)
        throw ValueError("config: last deconv must emit the spectrum channel count");
    // encoder frequency ladder must land exactly on F'
    int64_t f = freq_bins;
    for (int i = 0; i < 4; ++i) {
        const int64_t num = f + 2 * enc_freq_pad[i] - enc_kf;
        if (num < 0 || num % enc_freq_stride[i] != 0)
            throw ValueError("config: encoder stage " + std::to_string(i) +
                             " frequency arithmetic does not tile (f=" + std::to_string(f) + ")");
        f = num / enc_freq_stride[i] + 1;
    }
    if (f != latent_freq)
        throw ValueError("config: encoder ladder ends at " + std::to_string(f) +
                         " bins, expected F'=" + std::to_string(latent_freq));
    // decoder must mirror back to freq_bins
    f = latent_freq;
    for (int i = 0; i < 4; ++i) f = (f - 1) * dec_freq_stride[i] - 2 * dec_freq_pad[i] + dec_kf;
    if (f != freq_bins)
        throw ValueError("config: decoder ladder ends at " + std::to_string(f) +
                         " bins, expected " + std::to_string(freq_bins));
}

template <typename T>
Tensor<T>& WeightStore<T>::add(const std::string& name, Tensor<T> t) {
    if (index.count(name)) throw ValueError("duplicate weight tensor '" + name + "'");
    index.emplace(name, entries.size());
    entries.emplace_back(name, std::move(t));
    return entries.back().second;
}

template <typename T>
const Tensor<T>& WeightStore<T>::get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ValueError("missing weight tensor '" + name + "'");
    return entries[it->second].second;
}

template struct WeightStore<float>;
template struct WeightStore<double>;

namespace {

// Builds tensors in a fixed order; every conv layer consumes one RNG stream
// (stream id == layer index) so initialization does not depend on anything
// but the seed.
struct Builder {
    ModelWeights& mw;
    Rng root;
    uint64_t layer = 0;

    void conv(const std::string& name, std::vector<int64_t> wshape, int64_t cout, int64_t fan_in,
              int64_t fan_out) {
        Rng rng = root.fork(layer++);
        Tensor<float> w(std::move(wshape));
        xavier_fill(w, fan_in, fan_out, rng);
        mw.store.add(name + ".w", std::move(w));
        mw.store.add(name + ".b", Tensor<float>({cout}));
    }

    void conv2d_layer(const std::string& name, int64_t cin, int64_t cout, int kt, int kf) {
        conv(name, {cout, cin, kt, kf}, cout, cin * kt * kf, cout * kt * kf);
    }
    void conv1d_layer(const std::string& name, int64_t cin, int64_t cout, int k) {
        conv(name, {cout, cin, k}, cout, cin * k, cout * k);
    }
    void depthwise1d_layer(const std::string& name, int64_t c, int k) {
        conv(name, {c, k}, c, k, k);
    }
    void bn(const std::string& name, int64_t c) {
        Tensor<float> ones({c});
        std::fill(ones.data.begin(), ones.data.end(), 1.0f);
        mw.store.add(name + ".gamma", ones);
        mw.store.add(name + ".beta", Tensor<float>({c}));
        mw.store.add(name + ".mean", Tensor<float>({c}));
        mw.store.add(name + ".var", ones);
    }
    void prelu(const std::string& name, int64_t c) {
        Tensor<float> slope({c});
        std::fill(slope.data.begin(), slope.data.end(), 0.25f);
        mw.store.add(name + ".slope", std::move(slope));
    }
    void conv2d_bn_prelu(const std::string& base, int64_t cin, int64_t cout, int kt, int kf) {
        conv2d_layer(base + ".conv", cin, cout, kt, kf);
        bn(base + ".bn", cout);
        prelu(base + ".prelu", cout);
    }
    void conv1d_bn_prelu(const std::string& base, int64_t cin, int64_t cout, int k) {
        conv1d_layer(base + ".conv", cin, cout, k);
        bn(base + ".bn", cout);
        prelu(base + ".prelu", cout);
    }
};

} // namespace

ModelWeights build(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelWeights mw;
    mw.config = config;
    Builder b{mw, Rng(seed)};

    for (const char* enc : {"enc_mic", "enc_far"}) {
        int64_t cin = 2;
        for (int i = 0; i < 4; ++i) {
            b.conv2d_bn_prelu(std::string(enc) + "." + std::to_string(i), cin,
                              config.enc_channels[i], config.enc_kt, config.enc_kf);
            cin = config.enc_channels[i];
        }
    }

    b.conv2d_bn_prelu("fuse", 2 * config.enc_channels[3], config.fuse_channels, config.enc_kt,
                      config.enc_kf);

    const int64_t width = config.latent_width();
    for (int j = 0; j < config.num_tvase; ++j) {
        const std::string p = "tvase." + std::to_string(j);
        b.conv1d_bn_prelu(p + ".tcm.pw1", width, config.tcm_channels[0], 1);
        b.depthwise1d_layer(p + ".tcm.dw.conv", config.tcm_channels[0], config.tcm_dw_kernel);
        b.bn(p + ".tcm.dw.bn", config.tcm_channels[0]);
        b.prelu(p + ".tcm.dw.prelu", config.tcm_channels[0]);
        b.conv1d_bn_prelu(p + ".tcm.pw2", config.tcm_channels[1], config.tcm_channels[2], 1);

        for (int64_t g = 0; g < config.attn_groups; ++g) {
            const std::string gp = p + ".attn.g" + std::to_string(g);
            b.conv1d_bn_prelu(gp + ".q", config.attn_qkv_channels, config.attn_qkv_channels, 1);
            b.conv1d_bn_prelu(gp + ".k", config.attn_qkv_channels, config.attn_qkv_channels, 1);
            b.conv1d_bn_prelu(gp + ".v", config.attn_qkv_channels, config.attn_qkv_channels, 1);
        }
        b.conv1d_bn_prelu(p + ".attn.out", width, width, 1);

        // Kernel-emitting convolutions stay linear so kernels span all reals.
        if (config.dkg == DkgVariant::non_separable) {
            for (int64_t g = 0; g < config.latent_freq; ++g)
                b.conv1d_layer(p + ".dkg.g" + std::to_string(g) + ".conv", config.latent_channels,
                               config.dkg_nonsep_channels, 1);
        } else if (config.dkg == DkgVariant::separable) {
            b.conv1d_bn_prelu(p + ".dkg.k0.0", width, config.dkg_k0_channels[0], 1);
            b.conv1d_bn_prelu(p + ".dkg.k0.1", config.dkg_k0_channels[0], config.dkg_k0_channels[1],
                              1);
            b.conv1d_layer(p + ".dkg.k0.2.conv", config.dkg_k0_channels[1],
                           config.dkg_k0_channels[2], 1);
            b.conv1d_layer(p + ".dkg.ks.conv", width, config.dkg_ks_channels, 1);
        }
    }

    int64_t cin = config.latent_channels;
    for (int i = 0; i < 4; ++i) {
        const std::string p = "dec." + std::to_string(i);
        // gate conv sees [skip; dec] and emits the skip's channel count
        b.conv2d_layer(p + ".gate.conv", 2 * cin, cin, 1, 1);
        b.conv2d_layer(p + ".deconv", cin, config.dec_channels[i], config.dec_kt, config.dec_kf);
        if (i < 3) {
            b.bn(p + ".bn", config.dec_channels[i]);
            b.prelu(p + ".prelu", config.dec_channels[i]);
        }
        cin = config.dec_channels[i];
    }
    b.conv2d_layer("dec.final.conv", config.final_channels, config.final_channels, config.dec_kt,
                   config.dec_kf);
    return mw;
}

bool is_buffer_tensor(const std::string& name) {
    return name.ends_with(".mean") || name.ends_with(".var");
}

int64_t count_params(const ModelWeights& w) {
    int64_t n = 0;
    for (const auto& [name, t] : w.store.entries)
        if (!is_buffer_tensor(name)) n += t.numel();
    return n;
}

std::vector<ParamRow> param_report(const ModelWeights& w) {
    std::vector<ParamRow> rows;
    rows.reserve(w.store.entries.size());
    for (const auto& [name, t] : w.store.entries)
        rows.push_back({name, t.numel(), is_buffer_tensor(name)});
    return rows;
}

// ---- serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'V', 'S', 'E'};
constexpr uint32_t kVersion = 1;

void require_little_endian() {
    const uint16_t probe = 1;
    if (*reinterpret_cast<const uint8_t*>(&probe) != 1)
        throw IoError("weight files are little-endian; big-endian hosts unsupported");
}

template <typename V>
void write_pod(std::ostream& os, const V& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is, const char* what) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw IoError(std::string("weight file truncated while reading ") + what);
    return v;
}

std::string config_to_text(const ModelConfig& c) {
    std::ostringstream os;
    auto list = [&os](const char* key, auto begin, auto end) {
        os << key << "=";
        for (auto it = begin; it != end; ++it) os << (it == begin ? "" : ",") << *it;
        os << "\n";
    };
    os << "dkg=" << dkg_variant_name(c.dkg) << "\n";
    os << "freq_bins=" << c.freq_bins << "\n";
    list("enc_channels", c.enc_channels.begin(), c.enc_channels.end());
    list("enc_freq_stride", c.enc_freq_stride.begin(), c.enc_freq_stride.end());
    list("enc_freq_pad", c.enc_freq_pad.begin(), c.enc_freq_pad.end());
    os << "enc_kt=" << c.enc_kt << "\nenc_kf=" << c.enc_kf << "\n";
    os << "fuse_channels=" << c.fuse_channels << "\n";
    os << "latent_freq=" << c.latent_freq << "\nlatent_channels=" << c.latent_channels << "\n";
    os << "num_tvase=" << c.num_tvase << "\n";
    list("tcm_channels", c.tcm_channels.begin(), c.tcm_channels.end());
    os << "tcm_dw_kernel=" << c.tcm_dw_kernel << "\n";
    os << "attn_groups=" << c.attn_groups << "\nattn_qkv_channels=" << c.attn_qkv_channels
       << "\nattn_window=" << c.attn_window << "\n";
    os << "dkg_kernel=" << c.dkg_kernel << "\ndkg_nonsep_channels=" << c.dkg_nonsep_channels
       << "\n";
    list("dkg_k0_channels", c.dkg_k0_channels.begin(), c.dkg_k0_channels.end());
    os << "dkg_ks_channels=" << c.dkg_ks_channels << "\n";
    list("dec_channels", c.dec_channels.begin(), c.dec_channels.end());
    list("dec_freq_stride", c.dec_freq_stride.begin(), c.dec_freq_stride.end());
    list("dec_freq_pad", c.dec_freq_pad.begin(), c.dec_freq_pad.end());
    os << "dec_kt=" << c.dec_kt << "\ndec_kf=" << c.dec_kf << "\n";
    os << "final_channels=" << c.final_channels << "\nfinal_freq_pad=" << c.final_freq_pad << "\n";
    os << "bn_eps=" << c.bn_eps << "\n";
    return os.str();
}

template <typename A, size_t N>
void parse_list(const std::string& v, std::array<A, N>& out) {
    std::istringstream is(v);
    std::string item;
    size_t i = 0;
    while (std::getline(is, item, ',') && i < N) out[i++] = static_cast<A>(std::stoll(item));
    if (i != N) throw IoError("weight file config list has wrong arity: " + v);
}

ModelConfig config_from_text(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("weight file config line lacks '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "dkg") c.dkg = dkg_variant_from_name(val);
        else if (key == "freq_bins") c.freq_bins = std::stoll(val);
        else if (key == "enc_channels") parse_list(val, c.enc_channels);
        else if (key == "enc_freq_stride") parse_list(val, c.enc_freq_stride);
        else if (key == "enc_freq_pad") parse_list(val, c.enc_freq_pad);
        else if (key == "enc_kt") c.enc_kt = std::stoi(val);
        else if (key == "enc_kf") c.enc_kf = std::stoi(val);
        else if (key == "fuse_channels") c.fuse_channels = std::stoll(val);
        else if (key == "latent_freq") c.latent_freq = std::stoll(val);
        else if (key == "latent_channels") c.latent_channels = std::stoll(val);
        else if (key == "num_tvase") c.num_tvase = std::stoi(val);
        else if (key == "tcm_channels") parse_list(val, c.tcm_channels);
        else if (key == "tcm_dw_kernel") c.tcm_dw_kernel = std::stoi(val);
        else if (key == "attn_groups") c.attn_groups = std::stoll(val);
        else if (key == "attn_qkv_channels") c.attn_qkv_channels = std::stoll(val);
        else if (key == "attn_window") c.attn_window = std::stoll(val);
        else if (key == "dkg_kernel") c.dkg_kernel = std::stoll(val);
        else if (key == "dkg_nonsep_channels") c.dkg_nonsep_channels = std::stoll(val);
        else if (key == "dkg_k0_channels") parse_list(val, c.dkg_k0_channels);
        else if (key == "dkg_ks_channels") c.dkg_ks_channels = std::stoll(val);
        else if (key == "dec_channels") parse_list(val, c.dec_channels);
        else if (key == "dec_freq_stride") parse_list(val, c.dec_freq_stride);
        else if (key == "dec_freq_pad") parse_list(val, c.dec_freq_pad);
        else if (key == "dec_kt") c.dec_kt = std::stoi(val);
        else if (key == "dec_kf") c.dec_kf = std::stoi(val);
        else if (key == "final_channels") c.final_channels = std::stoll(val);
        else if (key == "final_freq_pad") c.final_freq_pad = std::stoi(val);
        else if (key == "bn_eps") c.bn_eps = std::stod(val);
        // unknown keys are ignored for forward compatibility
    }
    return c;
}

} // namespace

void save_weights(const ModelWeights& w, const std::string& path) {
    require_little_endian();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    const std::string cfg = config_to_text(w.config);
    write_pod(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_pod(os, static_cast<uint32_t>(w.store.entries.size()));
    for (const auto& [name, t] : w.store.entries) {
        write_pod(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<uint8_t>(t.rank()));
        for (int64_t d : t.shape) write_pod(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

ModelWeights load_weights(const std::string& path) {
    require_little_endian();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path + "' is not a weight file (bad magic)");
    const auto version = read_pod<uint32_t>(is, "version");
    if (version != kVersion)
        throw IoError("unsupported weight file version " + std::to_string(version));
    const auto cfg_len = read_pod<uint32_t>(is, "config length");
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), cfg_len);
    if (!is) throw IoError("weight file truncated while reading config");
    ModelWeights w;
    w.config = config_from_text(cfg_text);
    const auto count = read_pod<uint32_t>(is, "tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(is, "tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("weight file truncated while reading tensor name");
        const auto rank = read_pod<uint8_t>(is, "tensor rank");
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = read_pod<uint32_t>(is, "tensor dim");
        Tensor<float> t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!is) throw IoError("weight file truncated while reading tensor '" + name + "'");
        w.store.add(name, std::move(t));
    }
    w.config.validate();
    return w;
}

// ---- forward passes ----------------------------------------------------------

namespace {

template <typename T>
Tensor<T> bn_prelu(const Tensor<T>& x, const WeightStore<T>& w, const std::string& base,
                   const ModelConfig& cfg) {
    Tensor<T> y = batchnorm_infer(x, w.get(base + ".bn.gamma"), w.get(base + ".bn.beta"),
                                  w.get(base + ".bn.mean"), w.get(base + ".bn.var"),
                                  static_cast<T>(cfg.bn_eps));
    return prelu(y, w.get(base + ".prelu.slope"));
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != b.rank() || a.dim(0) != b.dim(0) ||
        (a.rank() == 3 && a.dim(2) != b.dim(2)))
        throw ShapeError("concat: incompatible shapes " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    const int64_t frames = a.dim(0);
    const int64_t fa = a.numel() / frames;
    const int64_t fb = b.numel() / frames;
    std::vector<int64_t> shape = a.shape;
    shape[1] += b.dim(1);
    Tensor<T> out(shape);
    for (int64_t t = 0; t < frames; ++t) {
        std::memcpy(out.ptr() + t * (fa + fb), a.ptr() + t * fa, sizeof(T) * fa);
        std::memcpy(out.ptr() + t * (fa + fb) + fa, b.ptr() + t * fb, sizeof(T) * fb);
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t lo, int64_t n) {
    const int64_t frames = x.dim(0);
    const int64_t c = x.dim(1);
    Tensor<T> out({frames, n});
    for (int64_t t = 0; t < frames; ++t)
        std::memcpy(out.ptr() + t * n, x.ptr() + t * c + lo, sizeof(T) * n);
    return out;
}

} // namespace

template <typename T>
std::vector<Tensor<T>> encoder_forward(const Tensor<T>& spec_frames, const WeightStore<T>& w,
                                       const std::string& which, const ModelConfig& cfg) {
    if (spec_frames.rank() != 3 || spec_frames.dim(1) != 2 || spec_frames.dim(2) != cfg.freq_bins)
        throw ShapeError("encoder: input must be {T, 2, " + std::to_string(cfg.freq_bins) +
                         "}, got " + shape_str(spec_frames.shape));
    std::vector<Tensor<T>> outs;
    outs.reserve(4);
    const Tensor<T>* x = &spec_frames;
    int64_t cin = 2;
    for (int i = 0; i < 4; ++i) {
        ConvSpec spec;
        spec.in_channels = cin;
        spec.out_channels = cfg.enc_channels[i];
        spec.kt = cfg.enc_kt;
        spec.kf = cfg.enc_kf;
        spec.sf = cfg.enc_freq_stride[i];
        spec.freq_pad = cfg.enc_freq_pad[i];
        const std::string base = which + "." + std::to_string(i);
        Tensor<T> y = conv2d(*x, spec, w.get(base + ".conv.w"), w.get(base + ".conv.b"));
        outs.push_back(bn_prelu(y, w, base, cfg));
        x = &outs.back();
        cin = cfg.enc_channels[i];
    }
    return outs;
}

template <typename T>
Tensor<T> merge_freq_channels(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("merge: input must be {T, C, F}");
    const int64_t frames = x.dim(0), c = x.dim(1), f = x.dim(2);
    Tensor<T> out({frames, f * c});
    for (int64_t t = 0; t < frames; ++t)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t fi = 0; fi < f; ++fi) out.at2(t, fi * c + ci) = x.at3(t, ci, fi);
    return out;
}

template <typename T>
Tensor<T> unmerge_freq_channels(const Tensor<T>& x, int64_t channels, int64_t freq) {
    if (x.rank() != 2 || x.dim(1) != channels * freq)
        throw ShapeError("unmerge: input width must be C*F");
    const int64_t frames = x.dim(0);
    Tensor<T> out({frames, channels, freq});
    for (int64_t t = 0; t < frames; ++t)
        for (int64_t fi = 0; fi < freq; ++fi)
            for (int64_t ci = 0; ci < channels; ++ci) out.at3(t, ci, fi) = x.at2(t, fi * channels + ci);
    return out;
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& enc_mic, const Tensor<T>& enc_far, const WeightStore<T>& w,
               const ModelConfig& cfg) {
    const std::vector<int64_t> want{enc_mic.dim(0), cfg.enc_channels[3], cfg.latent_freq};
    require_shape(enc_mic, want, "fuse mic input");
    require_shape(enc_far, want, "fuse far input");
    Tensor<T> cat = concat_channels(enc_mic, enc_far);
    ConvSpec spec;
    spec.in_channels = 2 * cfg.enc_channels[3];
    spec.out_channels = cfg.fuse_channels;
    spec.kt = cfg.enc_kt;
    spec.kf = cfg.enc_kf;
    spec.freq_pad = (cfg.enc_kf - 1) / 2;
    Tensor<T> y = conv2d(cat, spec, w.get("fuse.conv.w"), w.get("fuse.conv.b"));
    return merge_freq_channels(bn_prelu(y, w, "fuse", cfg));
}

template <typename T>
Tensor<T> tcm_forward(const Tensor<T>& x, const WeightStore<T>& w, const std::string& prefix,
                      const ModelConfig& cfg) {
    const int64_t width = cfg.latent_width();
    if (x.rank() != 2 || x.dim(1) != width)
        throw ShapeError("tcm: input must be {T, " + std::to_string(width) + "}");
    ConvSpec pw1{width, cfg.tcm_channels[0], 1};
    Tensor<T> y = conv1d(x, pw1, w.get(prefix + ".pw1.conv.w"), w.get(prefix + ".pw1.conv.b"));
    y = bn_prelu(y, w, prefix + ".pw1", cfg);
    ConvSpec dw;
    dw.in_channels = cfg.tcm_channels[0];
    dw.out_channels = cfg.tcm_channels[1];
    dw.kt = cfg.tcm_dw_kernel;
    dw.depthwise = true;
    y = conv1d(y, dw, w.get(prefix + ".dw.conv.w"), w.get(prefix + ".dw.conv.b"));
    y = bn_prelu(y, w, prefix + ".dw", cfg);
    ConvSpec pw2{cfg.tcm_channels[1], cfg.tcm_channels[2], 1};
    y = conv1d(y, pw2, w.get(prefix + ".pw2.conv.w"), w.get(prefix + ".pw2.conv.b"));
    y = bn_prelu(y, w, prefix + ".pw2", cfg);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    return y;
}

template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const WeightStore<T>& w, const std::string& prefix,
                            const ModelConfig& cfg) {
    const int64_t width = cfg.latent_width();
    if (x.rank() != 2 || x.dim(1) != width)
        throw ShapeError("attention: input must be {T, " + std::to_string(width) + "}");
    const int64_t frames = x.dim(0);
    const int64_t cg = cfg.attn_qkv_channels;
    const int64_t window = cfg.attn_window;
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(cg)));
    Tensor<T> cat({frames, width});
    ConvSpec qkv{cg, cg, 1};
    std::vector<T> scores(static_cast<size_t>(window));
    std::vector<T> probs(static_cast<size_t>(window));
    for (int64_t g = 0; g < cfg.attn_groups; ++g) {
        const std::string gp = prefix + ".g" + std::to_string(g);
        Tensor<T> xg = slice_channels(x, g * cg, cg);
        Tensor<T> q = bn_prelu(conv1d(xg, qkv, w.get(gp + ".q.conv.w"), w.get(gp + ".q.conv.b")),
                               w, gp + ".q", cfg);
        Tensor<T> k = bn_prelu(conv1d(xg, qkv, w.get(gp + ".k.conv.w"), w.get(gp + ".k.conv.b")),
                               w, gp + ".k", cfg);
        Tensor<T> v = bn_prelu(conv1d(xg, qkv, w.get(gp + ".v.conv.w"), w.get(gp + ".v.conv.b")),
                               w, gp + ".v", cfg);
        // windowed causal attention: row t attends to [t-window+1, t]
        for (int64_t t = 0; t < frames; ++t) {
            const int64_t lo = std::max<int64_t>(0, t - window + 1);
            const int64_t n = t - lo + 1;
            const T* qt = q.ptr() + t * cg;
            for (int64_t j = lo; j <= t; ++j)
                scores[static_cast<size_t>(j - lo)] = dot_strict(qt, k.ptr() + j * cg, cg) * scale;
            softmax_span(scores.data(), n, probs.data());
            T* out_row = cat.ptr() + t * width + g * cg;
            std::fill(out_row, out_row + cg, T(0));
            for (int64_t j = lo; j <= t; ++j) {
                const T p = probs[static_cast<size_t>(j - lo)];
                const T* vj = v.ptr() + j * cg;
                for (int64_t c = 0; c < cg; ++c) out_row[c] += p * vj[c];
            }
        }
    }
    ConvSpec out_spec{width, width, 1};
    Tensor<T> y =
        conv1d(cat, out_spec, w.get(prefix + ".out.conv.w"), w.get(prefix + ".out.conv.b"));
    return bn_prelu(y, w, prefix + ".out", cfg);
}

template <typename T>
Tensor<T> dkg_generate_nonseparable(const Tensor<T>& x, const WeightStore<T>& w,
                                    const std::string& prefix, const ModelConfig& cfg) {
    const int64_t width = cfg.latent_width();
    const int64_t frames = x.dim(0);
    const int64_t c = cfg.latent_channels;
    const int64_t m = cfg.dkg_kernel;
    Tensor<T> kernel({frames, width, m});
    ConvSpec spec{c, cfg.dkg_nonsep_channels, 1};
    for (int64_t g = 0; g < cfg.latent_freq; ++g) {
        Tensor<T> xg = slice_channels(x, g * c, c);
        Tensor<T> y = conv1d(xg, spec, w.get(prefix + ".g" + std::to_string(g) + ".conv.w"),
                             w.get(prefix + ".g" + std::to_string(g) + ".conv.b"));
        // per frame the C*M outputs are already (channel, tap) row-major
        for (int64_t t = 0; t < frames; ++t)
            std::memcpy(kernel.ptr() + (t * width + g * c) * m, y.ptr() + t * c * m,
                        sizeof(T) * c * m);
    }
    return kernel;
}

template <typename T>
Tensor<T> dkg_generate_separable(const Tensor<T>& x, const WeightStore<T>& w,
                                 const std::string& prefix, const ModelConfig& cfg) {
    const int64_t width = cfg.latent_width();
    const int64_t frames = x.dim(0);
    const int64_t m = cfg.dkg_kernel;
    ConvSpec s0{width, cfg.dkg_k0_channels[0], 1};
    Tensor<T> k0 = bn_prelu(conv1d(x, s0, w.get(prefix + ".k0.0.conv.w"), w.get(prefix + ".k0.0.conv.b")),
                            w, prefix + ".k0.0", cfg);
    ConvSpec s1{cfg.dkg_k0_channels[0], cfg.dkg_k0_channels[1], 1};
    k0 = bn_prelu(conv1d(k0, s1, w.get(prefix + ".k0.1.conv.w"), w.get(prefix + ".k0.1.conv.b")),
                  w, prefix + ".k0.1", cfg);
    ConvSpec s2{cfg.dkg_k0_channels[1], cfg.dkg_k0_channels[2], 1};
    k0 = conv1d(k0, s2, w.get(prefix + ".k0.2.conv.w"), w.get(prefix + ".k0.2.conv.b"));
    ConvSpec ss{width, cfg.dkg_ks_channels, 1};
    Tensor<T> ks = conv1d(x, ss, w.get(prefix + ".ks.conv.w"), w.get(prefix + ".ks.conv.b"));
    Tensor<T> kernel({frames, width, m});
    for (int64_t t = 0; t < frames; ++t) {
        const T* k0t = k0.ptr() + t * m;
        const T* kst = ks.ptr() + t * width;
        T* out = kernel.ptr() + t * width * m;
        for (int64_t c = 0; c < width; ++c)
            for (int64_t i = 0; i < m; ++i) out[c * m + i] = kst[c] * k0t[i];
    }
    return kernel;
}

template <typename T>
Tensor<T> dkg_apply(const Tensor<T>& x, const Tensor<T>& kernel) {
    if (x.rank() != 2 || kernel.rank() != 3 || kernel.dim(0) != x.dim(0) ||
        kernel.dim(1) != x.dim(1))
        throw ShapeError("dkg_apply: features " + shape_str(x.shape) + " vs kernel " +
                         shape_str(kernel.shape));
    const int64_t frames = x.dim(0);
    const int64_t channels = x.dim(1);
    const int64_t m = kernel.dim(2);
    Tensor<T> out({frames, channels});
    for (int64_t t = 0; t < frames; ++t) {
        const T* kt = kernel.ptr() + t * channels * m;
        T* ot = out.ptr() + t * channels;
        for (int64_t c = 0; c < channels; ++c) {
            T acc = 0;
            const T* kc = kt + c * m;
            for (int64_t i = 0; i < m; ++i) {
                const int64_t src = t - (m - 1) + i;
                if (src < 0) continue;
                acc += kc[i] * x.at2(src, c);
            }
            ot[c] = acc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> tvase_forward(const Tensor<T>& x, const WeightStore<T>& w, int module_index,
                        const ModelConfig& cfg) {
    const std::string p = "tvase." + std::to_string(module_index);
    Tensor<T> r = tcm_forward(x, w, p + ".tcm", cfg);
    Tensor<T> a = attention_forward(r, w, p + ".attn", cfg);
    switch (cfg.dkg) {
        case DkgVariant::none: return a;
        case DkgVariant::non_separable:
            return dkg_apply(a, dkg_generate_nonseparable(a, w, p + ".dkg", cfg));
        case DkgVariant::separable:
            return dkg_apply(a, dkg_generate_separable(a, w, p + ".dkg", cfg));
    }
    return a;
}

template <typename T>
Tensor<T> gated_block(const Tensor<T>& skip, const Tensor<T>& dec, const WeightStore<T>& w,
                      const std::string& prefix) {
    if (!skip.same_shape(dec))
        throw ShapeError("gated_block: skip " + shape_str(skip.shape) + " vs decoder " +
                         shape_str(dec.shape));
    Tensor<T> cat = concat_channels(skip, dec);
    ConvSpec spec;
    spec.in_channels = cat.dim(1);
    spec.out_channels = skip.dim(1);
    Tensor<T> g = conv2d(cat, spec, w.get(prefix + ".conv.w"), w.get(prefix + ".conv.b"));
    g = sigmoid(g);
    Tensor<T> out = dec;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += g.data[i] * skip.data[i];
    return out;
}

template <typename T>
Tensor<T> decoder_forward(const Tensor<T>& latent, const std::vector<Tensor<T>>& mic_skips,
                          const WeightStore<T>& w, const ModelConfig& cfg) {
    if (mic_skips.size() != 4) throw ShapeError("decoder: expected 4 encoder skips");
    Tensor<T> x = unmerge_freq_channels(latent, cfg.latent_channels, cfg.latent_freq);
    int64_t cin = cfg.latent_channels;
    for (int i = 0; i < 4; ++i) {
        const std::string p = "dec." + std::to_string(i);
        x = gated_block(mic_skips[static_cast<size_t>(3 - i)], x, w, p + ".gate");
        ConvSpec spec;
        spec.in_channels = cin;
        spec.out_channels = cfg.dec_channels[i];
        spec.kt = cfg.dec_kt;
        spec.kf = cfg.dec_kf;
        spec.sf = cfg.dec_freq_stride[i];
        spec.freq_pad = cfg.dec_freq_pad[i];
        spec.transposed = true;
        x = transposed_conv2d(x, spec, w.get(p + ".deconv.w"), w.get(p + ".deconv.b"));
        if (i < 3) x = bn_prelu(x, w, p, cfg);
        cin = cfg.dec_channels[i];
    }
    ConvSpec fin;
    fin.in_channels = cfg.final_channels;
    fin.out_channels = cfg.final_channels;
    fin.kt = cfg.dec_kt;
    fin.kf = cfg.dec_kf;
    fin.freq_pad = cfg.final_freq_pad;
    return conv2d(x, fin, w.get("dec.final.conv.w"), w.get("dec.final.conv.b"));
}

template <typename T>
Tensor<T> model_forward(const Tensor<T>& mic, const Tensor<T>& far, const WeightStore<T>& w,
                        const ModelConfig& cfg) {
    if (mic.rank() != 3 || far.rank() != 3 || mic.dim(0) != far.dim(0))
        throw ShapeError("model: mic and far spectra must share T, got " + shape_str(mic.shape) +
                         " vs " + shape_str(far.shape));
    std::vector<Tensor<T>> enc_mic = encoder_forward(mic, w, "enc_mic", cfg);
    std::vector<Tensor<T>> enc_far = encoder_forward(far, w, "enc_far", cfg);
    Tensor<T> x = fuse(enc_mic[3], enc_far[3], w, cfg);
    for (int j = 0; j < cfg.num_tvase; ++j) x = tvase_forward(x, w, j, cfg);
    return decoder_forward(x, enc_mic, w, cfg);
}

template <typename T>
Spectrogram<T> model_forward(const Spectrogram<T>& mic, const Spectrogram<T>& far,
                             const WeightStore<T>& w, const ModelConfig& cfg) {
    Spectrogram<T> out;
    out.config = mic.config;
    out.frames = model_forward(mic.frames, far.frames, w, cfg);
    return out;
}

Spectrogram<float> model_forward(const Spectrogram<float>& mic, const Spectrogram<float>& far,
                                 const ModelWeights& w) {
    return model_forward(mic, far, w.store, w.config);
}

#define TVASE_INSTANTIATE_MODEL(T)                                                               \
    template std::vector<Tensor<T>> encoder_forward<T>(const Tensor<T>&, const WeightStore<T>&,  \
                                                       const std::string&, const ModelConfig&);  \
    template Tensor<T> fuse<T>(const Tensor<T>&, const Tensor<T>&, const WeightStore<T>&,        \
                               const ModelConfig&);                                              \
    template Tensor<T> merge_freq_channels<T>(const Tensor<T>&);                                 \
    template Tensor<T> unmerge_freq_channels<T>(const Tensor<T>&, int64_t, int64_t);             \
    template Tensor<T> tcm_forward<T>(const Tensor<T>&, const WeightStore<T>&,                   \
                                      const std::string&, const ModelConfig&);                   \
    template Tensor<T> attention_forward<T>(const Tensor<T>&, const WeightStore<T>&,             \
                                            const std::string&, const ModelConfig&);             \
    template Tensor<T> dkg_generate_nonseparable<T>(const Tensor<T>&, const WeightStore<T>&,     \
                                                    const std::string&, const ModelConfig&);     \
    template Tensor<T> dkg_generate_separable<T>(const Tensor<T>&, const WeightStore<T>&,        \
                                                 const std::string&, const ModelConfig&);        \
    template Tensor<T> dkg_apply<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> tvase_forward<T>(const Tensor<T>&, const WeightStore<T>&, int,            \
                                        const ModelConfig&);                                     \
    template Tensor<T> gated_block<T>(const Tensor<T>&, const Tensor<T>&, const WeightStore<T>&, \
                                      const std::string&);                                       \
    template Tensor<T> decoder_forward<T>(const Tensor<T>&, const std::vector<Tensor<T>>&,       \
                                          const WeightStore<T>&, const ModelConfig&);            \
    template Tensor<T> model_forward<T>(const Tensor<T>&, const Tensor<T>&,                      \
                                        const WeightStore<T>&, const ModelConfig&);              \
    template Spectrogram<T> model_forward<T>(const Spectrogram<T>&, const Spectrogram<T>&,       \
                                             const WeightStore<T>&, const ModelConfig&);

TVASE_INSTANTIATE_MODEL(float)
TVASE_INSTANTIATE_MODEL(double)

#undef TVASE_INSTANTIATE_MODEL

} // namespace tvase
