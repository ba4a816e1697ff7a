#include "tvase/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <json.hpp>

#include "tvase/model.hpp"
#include "tvase/rng.hpp"

namespace tvase {
namespace gradcheck {

std::pair<Tensor<double>, Tensor<double>> dkg_apply_grads(const Tensor<double>& x,
                                                          const Tensor<double>& kernel,
                                                          const Tensor<double>& upstream) {
    if (x.rank() != 2 || kernel.rank() != 3 || !upstream.same_shape(x) ||
        kernel.dim(0) != x.dim(0) || kernel.dim(1) != x.dim(1))
        throw ShapeError("dkg_apply_grads: x " + shape_str(x.shape) + ", kernel " +
                         shape_str(kernel.shape) + ", upstream " + shape_str(upstream.shape));
    const int64_t frames = x.dim(0);
    const int64_t channels = x.dim(1);
    const int64_t m = kernel.dim(2);
    Tensor<double> dx(x.shape);
    Tensor<double> dk(kernel.shape);
    // dL/dK(t,c,i) = up(t,c) * x(t-(M-1)+i, c)
    // dL/dx(t',c)  = sum over frames t that read x(t'): up(t,c) * K(t,c,t'-t+M-1)
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t c = 0; c < channels; ++c) {
            const double up = upstream.at2(t, c);
            for (int64_t i = 0; i < m; ++i) {
                const int64_t src = t - (m - 1) + i;
                if (src < 0) continue;
                dk.at3(t, c, i) = up * x.at2(src, c);
                dx.at2(src, c) += up * kernel.at3(t, c, i);
            }
        }
    }
    return {std::move(dx), std::move(dk)};
}

std::pair<Tensor<double>, Tensor<double>> separable_kernel_grads(const Tensor<double>& ks,
                                                                 const Tensor<double>& k0,
                                                                 const Tensor<double>& upstream) {
    if (ks.rank() != 2 || k0.rank() != 2 || upstream.rank() != 3 ||
        upstream.dim(0) != ks.dim(0) || upstream.dim(1) != ks.dim(1) ||
        upstream.dim(2) != k0.dim(1) || k0.dim(0) != ks.dim(0))
        throw ShapeError("separable_kernel_grads: ks " + shape_str(ks.shape) + ", k0 " +
                         shape_str(k0.shape) + ", upstream " + shape_str(upstream.shape));
    const int64_t frames = ks.dim(0);
    const int64_t channels = ks.dim(1);
    const int64_t m = k0.dim(1);
    Tensor<double> dks(ks.shape);
    Tensor<double> dk0(k0.shape);
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t c = 0; c < channels; ++c) {
            const double s = ks.at2(t, c);
            double acc = 0;
            for (int64_t i = 0; i < m; ++i) {
                const double up = upstream.at3(t, c, i);
                acc += up * k0.at2(t, i);
                dk0.at2(t, i) += up * s;
            }
            dks.at2(t, c) = acc;
        }
    }
    return {std::move(dks), std::move(dk0)};
}

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

// max relative error between analytic gradient and central differences over
// up to `probes` coordinates of `param`
double probe_gradient(Tensor<double>& param, const Tensor<double>& analytic,
                      const std::function<double()>& loss, int64_t probes, Rng& rng,
                      int64_t& probed) {
    const double step = 1e-6;
    const int64_t total = param.numel();
    double worst = 0;
    const int64_t count = std::min(probes, total);
    for (int64_t p = 0; p < count; ++p) {
        // sweep all coordinates when they fit in the probe budget
        const int64_t idx = count == total
                                ? p
                                : static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total)));
        double& v = param.data[static_cast<size_t>(idx)];
        const double keep = v;
        v = keep + step;
        const double lp = loss();
        v = keep - step;
        const double lm = loss();
        v = keep;
        const double fd = (lp - lm) / (2.0 * step);
        worst = std::max(worst, rel_err(analytic.data[static_cast<size_t>(idx)], fd));
        ++probed;
    }
    return worst;
}

} // namespace

std::vector<GradReport> run_gradcheck(uint64_t seed, int64_t probes_per_op) {
    if (probes_per_op < 1) throw ValueError("gradcheck: probes must be >= 1");
    const double tol = 1e-4;
    Rng rng(seed);
    std::vector<GradReport> reports;

    // dynamic-kernel FIR application: L = sum(upstream .* dkg_apply(x, kernel))
    {
        const int64_t frames = 20, channels = 16, m = 6;
        Tensor<double> x = random_tensor({frames, channels}, rng);
        Tensor<double> kernel = random_tensor({frames, channels, m}, rng);
        Tensor<double> upstream = random_tensor({frames, channels}, rng);
        auto loss = [&] {
            Tensor<double> out = dkg_apply(x, kernel);
            double acc = 0;
            for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * upstream.data[i];
            return acc;
        };
        auto [dx, dk] = dkg_apply_grads(x, kernel, upstream);
        GradReport rx{"dkg_apply/dx", 0, tol, false, 0};
        rx.max_rel_err = probe_gradient(x, dx, loss, probes_per_op, rng, rx.probes);
        rx.pass = rx.max_rel_err <= tol;
        reports.push_back(rx);
        GradReport rk{"dkg_apply/dkernel", 0, tol, false, 0};
        rk.max_rel_err = probe_gradient(kernel, dk, loss, probes_per_op, rng, rk.probes);
        rk.pass = rk.max_rel_err <= tol;
        reports.push_back(rk);
    }

    // separable kernel construction: L = sum(upstream .* (Ks outer K0))
    {
        const int64_t frames = 16, channels = 24, m = 20;
        Tensor<double> ks = random_tensor({frames, channels}, rng);
        Tensor<double> k0 = random_tensor({frames, m}, rng);
        Tensor<double> upstream = random_tensor({frames, channels, m}, rng);
        auto loss = [&] {
            double acc = 0;
            for (int64_t t = 0; t < frames; ++t)
                for (int64_t c = 0; c < channels; ++c)
                    for (int64_t i = 0; i < m; ++i)
                        acc += upstream.at3(t, c, i) * ks.at2(t, c) * k0.at2(t, i);
            return acc;
        };
        auto [dks, dk0] = separable_kernel_grads(ks, k0, upstream);
        GradReport rs{"separable_kernel/dKs", 0, tol, false, 0};
        rs.max_rel_err = probe_gradient(ks, dks, loss, probes_per_op, rng, rs.probes);
        rs.pass = rs.max_rel_err <= tol;
        reports.push_back(rs);
        GradReport r0{"separable_kernel/dK0", 0, tol, false, 0};
        r0.max_rel_err = probe_gradient(k0, dk0, loss, probes_per_op, rng, r0.probes);
        r0.pass = r0.max_rel_err <= tol;
        reports.push_back(r0);
    }
    return reports;
}

std::string reports_to_json(const std::vector<GradReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports)
        arr.push_back({{"op", r.op},
                       {"max_rel_err", r.max_rel_err},
                       {"tolerance", r.tolerance},
                       {"pass", r.pass},
                       {"probes", r.probes}});
    return nlohmann::json{{"reports", arr}}.dump(1);
}

std::vector<GradReport> reports_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::vector<GradReport> out;
    for (const auto& r : j.at("reports"))
        out.push_back({r.at("op").get<std::string>(), r.at("max_rel_err").get<double>(),
                       r.at("tolerance").get<double>(), r.at("pass").get<bool>(),
                       r.at("probes").get<int64_t>()});
    return out;
}

} // namespace gradcheck
} // namespace tvase
