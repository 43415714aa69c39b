#pragma once

#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aoii {

/// Frame-loss distortion of a video stream with error propagation.
struct VideoParams {
    double gamma = 1.0;  // initial error power
    double alpha0 = 4.0;
    double rho = 0.8;    // cross-correlation between successive errors
    double c = 2.0;
    double tau() const { return 1.0 + alpha0 * rho + c; }
};

/// Insulation breakdown probability under thermal stress.
struct WeibullParams {
    double gamma = 1.0;  // scale
    double rho = 1.0;    // shape
};

/// Exponential fire growth capped at the maximum damage.
struct FireParams {
    double f_max = 10.0;
    double f_init = 1.0;
    double growth = 0.1;
};

inline PenaltySpec linear_f() {
    return PenaltySpec::unbounded("linear", [](State s) { return static_cast<double>(s); });
}

/// 1{S != 0}: its average is the long-run error probability.
inline PenaltySpec error_f() {
    return PenaltySpec::saturating("error", [](State s) { return s == 0 ? 0.0 : 1.0; }, 1);
}

/// 1{S >= zeta}.
inline PenaltySpec time_threshold_f(double zeta) {
    if (!(zeta > 0.0) || !std::isfinite(zeta))
        throw ParamError("time-threshold penalty needs zeta > 0");
    const auto st = static_cast<State>(std::ceil(zeta));
    return PenaltySpec::saturating(
        "time_threshold", [zeta](State s) { return static_cast<double>(s) >= zeta ? 1.0 : 0.0; }, st);
}

inline PenaltySpec video_f(const VideoParams& v) {
    if (!(v.gamma > 0.0 && v.alpha0 > 0.0 && v.rho > 0.0 && v.c > 0.0))
        throw ParamError("video distortion parameters must be positive");
    const double tau = v.tau();
    return PenaltySpec::unbounded("video", [v, tau](State s) {
        if (s == 0)
            return 0.0;
        const double x = static_cast<double>(s);
        // the (S-2) factor sits inside a term multiplied by (S-1), so S = 1 is fine
        return v.gamma * x * (v.alpha0 + (x - 1.0) * (tau + v.rho * (x - 1.0) + v.c * v.rho * (x - 2.0)));
    });
}

inline PenaltySpec weibull_f(const WeibullParams& w, double eps = 1e-3) {
    if (!(w.gamma > 0.0 && w.rho > 0.0))
        throw ParamError("Weibull parameters must be positive");
    if (!(eps > 0.0 && eps < 1.0))
        throw ParamError("Weibull truncation eps must lie in (0,1)");
    return PenaltySpec::bounded(
        "weibull",
        [w](State s) {
            if (s == 0)
                return 0.0;
            return -std::expm1(-std::pow(static_cast<double>(s) / w.gamma, w.rho));
        },
        1.0, eps);
}

inline PenaltySpec fire_f(const FireParams& fp) {
    if (!(fp.f_init > 0.0 && fp.growth > 0.0 && fp.f_max >= fp.f_init))
        throw ParamError("fire parameters need F_max >= F_init > 0 and growth > 0");
    auto f = [fp](State s) {
        if (s == 0)
            return 0.0;
        return std::min(fp.f_max, fp.f_init * std::exp(fp.growth * static_cast<double>(s)));
    };
    auto st = std::max<State>(1, static_cast<State>(std::ceil(std::log(fp.f_max / fp.f_init) / fp.growth)));
    // guard against rounding in the log: land exactly on the first saturated state
    while (st > 1 && f(st - 1) >= fp.f_max)
        --st;
    while (f(st) < fp.f_max)
        ++st;
    return PenaltySpec::saturating("fire", f, st);
}

} // namespace aoii
