#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>

#include "tvase/gradcheck.hpp"
#include "tvase/metrics.hpp"
#include "tvase/model.hpp"
#include "tvase/pipeline.hpp"
#include "tvase/scenario.hpp"
#include "tvase/stft.hpp"

namespace py = pybind11;
using namespace tvase;

namespace {

using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& arr) {
    if (arr.ndim() != 1) throw ValueError("expected a 1-D sample array");
    return std::vector<double>(arr.data(), arr.data() + arr.size());
}

DoubleArray from_vector(const std::vector<double>& v) {
    DoubleArray out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Spectrogram<double> spec_from_array(const ComplexArray& arr) {
    if (arr.ndim() != 2) throw ValueError("spectrogram must be a (frames, bins) complex array");
    const auto frames = static_cast<int64_t>(arr.shape(0));
    const auto bins = static_cast<int64_t>(arr.shape(1));
    StftConfig cfg;
    if (bins != cfg.bins())
        throw ValueError("spectrogram must have " + std::to_string(cfg.bins()) + " bins");
    Spectrogram<double> s(frames, cfg);
    auto view = arr.unchecked<2>();
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t f = 0; f < bins; ++f) {
            s.re(t, f) = view(t, f).real();
            s.im(t, f) = view(t, f).imag();
        }
    }
    return s;
}

ComplexArray spec_to_array(const Spectrogram<double>& s) {
    ComplexArray out({s.num_frames(), s.num_bins()});
    auto view = out.mutable_unchecked<2>();
    for (int64_t t = 0; t < s.num_frames(); ++t)
        for (int64_t f = 0; f < s.num_bins(); ++f)
            view(t, f) = std::complex<double>(s.re(t, f), s.im(t, f));
    return out;
}

struct PyWeights {
    ModelWeights w;
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "causal joint echo-cancellation and noise-suppression engine";
    m.attr("__version__") = "0.1.0";
    m.attr("SAMPLE_RATE") = 16000;
    m.attr("HOP") = 160;
    m.attr("WIN_LEN") = 320;

    py::register_exception<Error>(m, "TvaseError");

    py::class_<PyWeights>(m, "ModelWeights")
        .def_property_readonly("dkg", [](const PyWeights& pw) {
            return std::string(dkg_variant_name(pw.w.config.dkg));
        })
        .def("count_params", [](const PyWeights& pw) { return count_params(pw.w); })
        .def("save", [](const PyWeights& pw, const std::string& path) { save_weights(pw.w, path); });

    m.def(
        "build_weights",
        [](const std::string& dkg, uint64_t seed) {
            ModelConfig cfg;
            cfg.dkg = dkg_variant_from_name(dkg);
            return PyWeights{build(cfg, seed)};
        },
        py::arg("dkg") = "separable", py::arg("seed") = 0);

    m.def("load_weights", [](const std::string& path) { return PyWeights{load_weights(path)}; });

    m.def(
        "stft",
        [](const DoubleArray& signal) { return spec_to_array(stft<double>(to_vector(signal))); },
        py::arg("signal"), "complex STFT, (frames, 161)");

    m.def(
        "istft",
        [](const ComplexArray& spec, int64_t out_len) {
            return from_vector(istft<double>(spec_from_array(spec), out_len));
        },
        py::arg("spec"), py::arg("out_len"));

    m.def(
        "power_law_compress",
        [](const ComplexArray& spec, double p) {
            return spec_to_array(power_law_compress(spec_from_array(spec), p));
        },
        py::arg("spec"), py::arg("p") = 0.3);

    m.def("consistency_project", [](const ComplexArray& spec) {
        return spec_to_array(consistency_project(spec_from_array(spec)));
    });

    m.def(
        "model_forward",
        [](const PyWeights& pw, const ComplexArray& mic, const ComplexArray& far) {
            const WeightStore<double> store = pw.w.store.cast<double>();
            return spec_to_array(
                model_forward(spec_from_array(mic), spec_from_array(far), store, pw.w.config));
        },
        py::arg("weights"), py::arg("mic"), py::arg("far"));

    m.def(
        "enhance",
        [](const PyWeights& pw, const DoubleArray& mic, const DoubleArray& far, bool stream,
           bool f64) {
            if (f64) {
                const WeightStore<double> store = pw.w.store.cast<double>();
                const auto micv = to_vector(mic);
                const auto farv = to_vector(far);
                return from_vector(stream ? enhance_stream(micv, farv, store, pw.w.config)
                                          : enhance_batch(micv, farv, store, pw.w.config));
            }
            std::vector<float> micf(mic.data(), mic.data() + mic.size());
            std::vector<float> farf(far.data(), far.data() + far.size());
            const std::vector<float> y =
                stream ? enhance_stream(micf, farf, pw.w) : enhance_batch(micf, farf, pw.w);
            return from_vector(std::vector<double>(y.begin(), y.end()));
        },
        py::arg("weights"), py::arg("mic"), py::arg("far"), py::arg("stream") = false,
        py::arg("f64") = false);

    m.def(
        "erle_db",
        [](const DoubleArray& mic, const DoubleArray& enhanced, const std::vector<uint8_t>& labels) {
            return metrics::erle_db(to_vector(mic), to_vector(enhanced), labels);
        },
        py::arg("mic"), py::arg("enhanced"), py::arg("single_talk_labels"));

    m.def("far_single_talk_labels", [](const DoubleArray& nearend, const DoubleArray& echo) {
        return metrics::far_single_talk_labels(to_vector(nearend), to_vector(echo));
    });

    m.def(
        "compressed_mse",
        [](const ComplexArray& est, const ComplexArray& ref, double p) {
            return metrics::compressed_mse(spec_from_array(est), spec_from_array(ref), p);
        },
        py::arg("estimate"), py::arg("reference"), py::arg("p") = 0.3);

    m.def(
        "measure_levels",
        [](const DoubleArray& nearend, const DoubleArray& echo, const DoubleArray& noise) {
            const auto levels =
                metrics::measure_levels(to_vector(nearend), to_vector(echo), to_vector(noise));
            return py::make_tuple(levels.ser_db, levels.snr_db);
        },
        py::arg("nearend"), py::arg("echo"), py::arg("noise"));

    m.def(
        "estimate_delay",
        [](const DoubleArray& farend, const DoubleArray& echo, int64_t start, int64_t len,
           int64_t max_lag) {
            return metrics::estimate_delay(to_vector(farend), to_vector(echo), start, len, max_lag);
        },
        py::arg("farend"), py::arg("echo"), py::arg("start"), py::arg("len"), py::arg("max_lag"));

    m.def(
        "simulate_rir",
        [](const std::array<double, 3>& dims, double rt60, const std::array<double, 3>& source,
           const std::array<double, 3>& mic) {
            const scenario::Room room{dims, rt60};
            return from_vector(scenario::simulate_rir(room, source, mic, rt60));
        },
        py::arg("room_dims"), py::arg("rt60"), py::arg("source"), py::arg("mic"));

    m.def("nonlinear_distort", [](const DoubleArray& x) {
        return from_vector(scenario::nonlinear_distort(to_vector(x)));
    });

    m.def(
        "mix",
        [](const DoubleArray& nearend, const DoubleArray& echo, const DoubleArray& noise,
           double ser_db, double snr_db) {
            auto r = scenario::mix(to_vector(nearend), to_vector(echo), to_vector(noise), ser_db,
                                   snr_db);
            py::dict out;
            out["mic"] = from_vector(r.mic);
            out["target"] = from_vector(r.target);
            out["echo"] = from_vector(r.echo_scaled);
            out["noise"] = from_vector(r.noise_scaled);
            out["single_talk"] = r.single_talk;
            return out;
        },
        py::arg("nearend"), py::arg("echo"), py::arg("noise"), py::arg("ser_db"),
        py::arg("snr_db"));

    m.def(
        "run_gradcheck",
        [](uint64_t seed, int64_t probes) {
            py::list out;
            for (const auto& r : gradcheck::run_gradcheck(seed, probes)) {
                py::dict d;
                d["op"] = r.op;
                d["max_rel_err"] = r.max_rel_err;
                d["tolerance"] = r.tolerance;
                d["pass"] = r.pass;
                d["probes"] = r.probes;
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("seed") = 1, py::arg("probes") = 400);
}
