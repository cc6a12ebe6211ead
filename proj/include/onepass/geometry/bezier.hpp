#pragma once

// Paths between proto-token solutions. A point is the concatenation (e, m),
// or e alone when m is held fixed (shared-m scheme). The quadratic Bezier
// curve is phi(tau) = (1 - tau)^2 p1 + 2 tau (1 - tau) pi + tau^2 p2.

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "onepass/cramming/cram.hpp"
#include "onepass/errors.hpp"
#include "onepass/numerics/optim.hpp"

namespace onepass {

// How a point maps onto proto-tokens for one text.
struct PointSpace {
    Arrangement arrangement;
    bool bos_first = false;
    std::optional<std::vector<float>> fixed_m;  // set: points are e only

    static PointSpace of(const ProtoSolution& s) { return {s.arrangement, s.bos_first, std::nullopt}; }

    std::size_t dimension(std::size_t d_model) const { return fixed_m ? d_model : 2 * d_model; }
};

inline std::vector<double> default_tau_grid(std::size_t points = 11) {
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) g[i] = points == 1 ? 0.0 : static_cast<double>(i) / double(points - 1);
    return g;
}

namespace detail {

inline void split_point(std::span<const float> p, const PointSpace& sp, std::size_t D, std::vector<float>& e,
                        std::vector<float>& m) {
    if (p.size() != sp.dimension(D))
        throw InputError("point has dimension " + std::to_string(p.size()) + ", expected " +
                         std::to_string(sp.dimension(D)));
    e.assign(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(D));
    if (sp.fixed_m) {
        if (sp.fixed_m->size() != D) throw InputError("fixed m has the wrong width");
        m = *sp.fixed_m;
    } else {
        m.assign(p.begin() + static_cast<std::ptrdiff_t>(D), p.end());
    }
}

}  // namespace detail

// One-pass token accuracy of the proto-tokens encoded by `point`.
inline double point_decode_accuracy(const Transformer<float>& model, std::span<const float> point, const PointSpace& sp,
                                    std::span<const TokenId> targets) {
    std::vector<float> e, m;
    detail::split_point(point, sp, model.config().d_model, e, m);
    const Layout L = make_layout(sp.arrangement, targets.size(), sp.bos_first);
    const TensorF E = build_input(e, m, L, sp.bos_first ? model.weights().tok_emb.row(Tokenizer::kBos) : std::span<const float>{});
    return token_accuracy(model, E, L, targets).fraction();
}

// (1 - tau) a + tau b, exact at the endpoints.
inline std::vector<float> lerp_point(std::span<const float> a, std::span<const float> b, double tau) {
    if (a.size() != b.size()) throw InputError("interpolation endpoints differ in dimension");
    if (tau == 0.0) return {a.begin(), a.end()};
    if (tau == 1.0) return {b.begin(), b.end()};
    std::vector<float> p(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) p[i] = static_cast<float>((1.0 - tau) * a[i] + tau * b[i]);
    return p;
}

// Point of a solution in the given space.
inline std::vector<float> solution_point(const ProtoSolution& s, const PointSpace& sp) {
    return sp.fixed_m ? s.e : s.point();
}

inline std::vector<double> linear_interp_accuracy(const Transformer<float>& model, const ProtoSolution& a,
                                                  const ProtoSolution& b, std::span<const TokenId> targets,
                                                  std::span<const double> taus, const PointSpace& sp) {
    if (a.arrangement != b.arrangement || a.bos_first != b.bos_first || a.N != b.N)
        throw InputError("interpolated solutions use different arrangements or lengths");
    if (a.N != targets.size()) throw InputError("solutions do not match the text length");
    const auto pa = solution_point(a, sp), pb = solution_point(b, sp);
    std::vector<double> out;
    for (double t : taus) out.push_back(point_decode_accuracy(model, lerp_point(pa, pb, t), sp, targets));
    return out;
}

inline std::vector<double> linear_interp_accuracy(const Transformer<float>& model, const ProtoSolution& a,
                                                  const ProtoSolution& b, std::span<const TokenId> targets,
                                                  std::span<const double> taus) {
    return linear_interp_accuracy(model, a, b, targets, taus, PointSpace::of(a));
}

struct BezierCurve {
    std::vector<float> p1, p2, pi;

    // Evaluated in double; tau = 0 and tau = 1 return the endpoints exactly.
    std::vector<float> at(double tau) const {
        if (tau == 0.0) return p1;
        if (tau == 1.0) return p2;
        const double a = (1 - tau) * (1 - tau), b = 2 * tau * (1 - tau), c = tau * tau;
        std::vector<float> p(p1.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(a * p1[i] + b * pi[i] + c * p2[i]);
        return p;
    }

    // |phi'(tau)| with phi'(tau) = 2 (1 - tau) (pi - p1) + 2 tau (p2 - pi).
    double speed(double tau) const {
        double s = 0;
        for (std::size_t i = 0; i < p1.size(); ++i) {
            const double d = 2 * (1 - tau) * (double(pi[i]) - p1[i]) + 2 * tau * (double(p2[i]) - pi[i]);
            s += d * d;
        }
        return std::sqrt(s);
    }

    static BezierCurve straight(std::vector<float> p1, std::vector<float> p2) {
        if (p1.size() != p2.size()) throw InputError("curve endpoints differ in dimension");
        std::vector<float> mid(p1.size());
        for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = static_cast<float>(0.5 * (double(p1[i]) + p2[i]));
        return {std::move(p1), std::move(p2), std::move(mid)};
    }
};

inline std::vector<double> curve_accuracy(const Transformer<float>& model, const BezierCurve& c, const PointSpace& sp,
                                          std::span<const TokenId> targets, std::span<const double> taus) {
    std::vector<double> out;
    for (double t : taus) out.push_back(point_decode_accuracy(model, c.at(t), sp, targets));
    return out;
}

// Arc length over chord length. Arc length by 64-node Gauss-Legendre
// quadrature of |phi'|.
inline double curve_length_ratio(const BezierCurve& c) {
    if (c.p1.size() != c.p2.size() || c.pi.size() != c.p1.size()) throw InputError("curve points differ in dimension");
    double chord = 0;
    for (std::size_t i = 0; i < c.p1.size(); ++i) {
        const double d = double(c.p2[i]) - c.p1[i];
        chord += d * d;
    }
    chord = std::sqrt(chord);
    if (chord == 0) throw InputError("curve length ratio undefined for identical endpoints");
    const double arc =
        boost::math::quadrature::gauss<double, 64>::integrate([&](double t) { return c.speed(t); }, 0.0, 1.0);
    return arc / chord;
}

struct BezierSpec {
    std::size_t steps = 500;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool init_at_midpoint = true;  // otherwise pi starts at p1
};

struct BezierFit {
    BezierCurve curve;
    std::vector<double> loss_history;  // loss at the sampled tau, per step
};

// Fit the control point by Adam on the cross-entropy at tau ~ U[0, 1], one
// sample per step. d loss / d pi = 2 tau (1 - tau) d loss / d phi(tau).
inline BezierFit fit_bezier(const Transformer<float>& model, std::span<const float> p1, std::span<const float> p2,
                            const PointSpace& sp, std::span<const TokenId> targets, const BezierSpec& spec,
                            std::uint64_t seed) {
    const std::size_t D = model.config().d_model;
    if (p1.size() != sp.dimension(D) || p2.size() != sp.dimension(D)) throw InputError("curve endpoints have the wrong dimension");
    BezierFit fit;
    fit.curve = BezierCurve::straight({p1.begin(), p1.end()}, {p2.begin(), p2.end()});
    if (!spec.init_at_midpoint) fit.curve.pi = fit.curve.p1;
    const Layout L = make_layout(sp.arrangement, targets.size(), sp.bos_first);
    const std::vector<Layout> layouts{L};
    const std::vector<std::vector<TokenId>> texts{std::vector<TokenId>(targets.begin(), targets.end())};
    const std::span<const float> bos =
        sp.bos_first ? model.weights().tok_emb.row(Tokenizer::kBos) : std::span<const float>{};
    const AdamWSpec aspec{spec.lr, spec.beta1, spec.beta2, 0.0, 1e-8};
    AdamWState state(fit.curve.pi.size());
    std::mt19937_64 rng(seed);
    std::vector<float> grad(fit.curve.pi.size());
    std::vector<std::vector<float>> e(1), m(1);
    for (std::size_t step = 0; step < spec.steps; ++step) {
        const double tau = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        detail::split_point(fit.curve.at(tau), sp, D, e[0], m[0]);
        const auto gl = group_loss_and_grads(model, texts, layouts, e, m, bos);
        if (!std::isfinite(gl.loss)) throw NumericError("Bezier fit loss is not finite at step " + std::to_string(step));
        fit.loss_history.push_back(gl.loss);
        const float w = static_cast<float>(2 * tau * (1 - tau));
        for (std::size_t i = 0; i < D; ++i) grad[i] = w * gl.de[0][i];
        if (!sp.fixed_m)
            for (std::size_t i = 0; i < D; ++i) grad[D + i] = w * gl.dm[0][i];
        state.update(fit.curve.pi, grad, aspec, aspec.lr, false);
    }
    return fit;
}

}  // namespace onepass
