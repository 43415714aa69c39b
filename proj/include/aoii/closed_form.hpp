#pragma once

#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace aoii {

/// Stop rule for the series sum_k f(k) a^(k-n).
struct TailOptions {
    /// A term counts as negligible when it is below eps_tail * (1 - a).
    double eps_tail = 1e-15;
    /// Number of consecutive negligible terms required before stopping.
    unsigned window = 10;
    /// Hard cap on the number of summed terms.
    std::uint64_t k_max = 1'000'000;
};

/// Sum_{j=0}^{m-1} r^j for r in [0,1], exact limit m at r = 1.
inline double geometric_sum(double r, std::uint64_t m) {
    if (m == 0)
        return 0.0;
    if (r == 1.0)
        return static_cast<double>(m);
    if (r == 0.0)
        return 1.0;
    // expm1/log1p keep the result accurate as r -> 1
    return -std::expm1(static_cast<double>(m) * std::log1p(r - 1.0)) / (1.0 - r);
}

inline double int_pow(double r, std::uint64_t m) { return std::pow(r, static_cast<double>(m)); }

/**
 * Sum_{k>=n} f(k) a^(k-n).
 *
 * Bounded penalties are summed exactly (finite part plus the geometric tail
 * f(S_thresh) a^(S_thresh-n) / (1-a)). Unbounded penalties are summed until
 * `window` consecutive terms fall below eps_tail * (1-a); the leading run of
 * f(k) = 0 does not count towards the window, but ends the sum once the
 * weight a^m itself is below that level.
 */
inline double tail_sum(const PenaltySpec& f, double a, State n, const TailOptions& opts = {}) {
    if (!(a >= 0.0 && a < 1.0))
        throw RangeError("tail_sum needs a in [0,1), got " + std::to_string(a));

    if (const auto st = f.s_thresh()) {
        if (n >= *st)
            return f(*st) / (1.0 - a);
        double sum = 0.0;
        double w = 1.0;
        for (State k = n; k < *st; ++k, w *= a)
            sum += f(k) * w;
        return sum + w * f(*st) / (1.0 - a);
    }

    const double negligible = opts.eps_tail * (1.0 - a);
    double sum = 0.0;
    double comp = 0.0; // Neumaier compensation
    double w = 1.0;
    unsigned small_run = 0;
    bool started = false;
    for (std::uint64_t m = 0; m <= opts.k_max; ++m, w *= a) {
        const double fk = f(n + m);
        started = started || fk > 0.0;
        const double term = fk * w;
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
        if (!started && w < negligible)
            return 0.0; // every weight from here on is negligible and f has been zero so far
        if (started && term < negligible) {
            if (++small_run >= opts.window)
                return sum + comp;
        } else {
            small_run = 0;
        }
    }
    throw DivergenceSuspected("terms of sum f(k) a^k for penalty '" + f.name() +
                              "' did not decay within " + std::to_string(opts.k_max) + " terms");
}

namespace detail {

/// Pieces shared by the threshold-n cost, margin and stationary formulas.
struct ThresholdTerms {
    double head;     // sum_{j=1}^{n-1} f(j) beta^(j-1)
    double beta_n1;  // beta^(n-1)
    double tail;     // sum_{k>=n} f(k) a^(k-n)
    double denom;    // 1/(1-alpha) + (1-beta^(n-1))/(1-beta) + beta^(n-1)/(1-a)
};

inline void require_finite_threshold(State n, const PenaltySpec& f, const char* what) {
    if (n == 0)
        throw ParamError(std::string(what) + " needs a threshold n >= 1");
    if (const auto st = f.s_thresh(); st && n > *st)
        throw ParamError(std::string(what) + " needs n <= S_thresh = " + std::to_string(*st));
}

inline ThresholdTerms threshold_terms(State n, const SourceChannelParams& p, const PenaltySpec& f,
                                      const TailOptions& opts) {
    ThresholdTerms t{};
    double w = 1.0;
    for (State j = 1; j < n && w >= std::numeric_limits<double>::min(); ++j, w *= p.beta())
        t.head += f(j) * w;
    t.beta_n1 = int_pow(p.beta(), n - 1);
    t.tail = tail_sum(f, p.a(), n, opts);
    t.denom = 1.0 / (1.0 - p.alpha()) + geometric_sum(p.beta(), n - 1) + t.beta_n1 / (1.0 - p.a());
    return t;
}

inline double theta_from_terms(const ThresholdTerms& t, double lambda, const SourceChannelParams& p,
                               const PenaltySpec& f) {
    const double num = f(0) / (1.0 - p.alpha()) + t.head + t.beta_n1 * t.tail +
                       lambda * t.beta_n1 / (1.0 - p.a());
    return num / t.denom;
}

} // namespace detail

/**
 * Long-run average Lagrangian cost (penalty + lambda per transmission) of the
 * threshold-n policy, n >= 1. For bounded penalties n <= S_thresh and the
 * truncated penalty is used throughout.
 */
inline double theta_n(State n, double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                      const TailOptions& opts = {}) {
    detail::require_finite_threshold(n, f, "theta_n");
    return detail::theta_from_terms(detail::threshold_terms(n, p, f, opts), lambda, p, f);
}

/**
 * Activity margin H(n) = V_n(n) - lambda/(beta-a), where V_n is the
 * differential cost of the threshold-n policy. The optimal threshold is
 * inf{n >= 1 : H(n) > 0} - 1.
 */
inline double h_margin(State n, double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                       const TailOptions& opts = {}) {
    detail::require_finite_threshold(n, f, "h_margin");
    const auto t = detail::threshold_terms(n, p, f, opts);
    const double theta = detail::theta_from_terms(t, lambda, p, f);
    const double ba = p.beta() - p.a();
    return (-theta * ba + lambda * (p.beta() - 1.0)) / ((1.0 - p.a()) * ba) + t.tail;
}

/**
 * Multiplier above which never transmitting is optimal for a bounded
 * penalty: (beta-a)(f(S_thresh) - theta'_{S_thresh}) / (1-beta), with theta'
 * evaluated at the same lambda. Infinite when beta = 1.
 */
inline double idle_multiplier_bound(double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                                    const TailOptions& opts = {}) {
    const auto st = f.s_thresh();
    if (!st)
        throw ParamError("idle_multiplier_bound needs a bounded penalty");
    if (p.beta() == 1.0)
        return std::numeric_limits<double>::infinity();
    const double theta = theta_n(*st, lambda, p, f, opts);
    return (p.beta() - p.a()) * (f(*st) - theta) / (1.0 - p.beta());
}

/// Long-run fraction of slots spent in sync under threshold n.
inline double sync_probability(Threshold n, const SourceChannelParams& p) {
    const double al = p.alpha();
    const double be = p.beta();
    if (n.is_never())
        return (1.0 - be) / (2.0 - al - be);
    const State m = n.value() == 0 ? 1 : n.value();
    const double b1 = int_pow(be, m - 1);
    return 1.0 / (1.0 + (1.0 - al) * geometric_sum(be, m) + (1.0 - al) * p.a() * b1 / (1.0 - p.a()));
}

/// Long-run transmission frequency of the threshold policy.
inline double update_rate(Threshold n, const SourceChannelParams& p) {
    if (n.is_never())
        return 0.0;
    if (n.value() == 0)
        return 1.0;
    const double b1 = int_pow(p.beta(), n.value() - 1);
    return (1.0 - p.alpha()) * b1 * sync_probability(n, p) / (1.0 - p.a());
}

/**
 * Differential cost-to-go of the threshold-n policy normalised by V(0) = 0.
 * Above the threshold V follows the forward recursion; below it the backward
 * one. For a bounded penalty n may be the never-transmit threshold (beta < 1).
 */
inline double value_function(State s, Threshold n, double lambda, const SourceChannelParams& p,
                             const PenaltySpec& f, const TailOptions& opts = {}) {
    if (s == 0)
        return 0.0;
    const double be = p.beta();

    if (n.is_never()) {
        const State st = f.never().value() - 1;
        if (be == 1.0)
            throw NumericalError("never-transmit value function is not unique when beta = 1");
        // lambda does not enter: nothing is ever transmitted
        const double theta = [&] {
            const double s0 = sync_probability(n, p);
            double acc = s0 * f(0);
            double w = (1.0 - p.alpha()) * s0;
            for (State k = 1; k < st; ++k, w *= be)
                acc += w * f(k);
            return acc + (1.0 - p.alpha()) * int_pow(be, st - 1) / (2.0 - p.alpha() - be) * f(st);
        }();
        const double v_top = (f(st) - theta) / (1.0 - be);
        if (s >= st)
            return v_top;
        double below = 0.0;
        double w = 1.0;
        for (State j = s; j < st; ++j, w *= be)
            below += f(j) * w;
        return -theta * geometric_sum(be, st - s) + below + w * v_top;
    }

    detail::require_finite_threshold(n.value(), f, "value_function");
    const State nn = n.value();
    const double theta = theta_n(nn, lambda, p, f, opts);
    const double ahead = (-theta + lambda) / (1.0 - p.a());
    if (s >= nn)
        return ahead + tail_sum(f, p.a(), s, opts);

    const double v_n = ahead + tail_sum(f, p.a(), nn, opts);
    double below = 0.0;
    double w = 1.0;
    for (State j = s; j < nn; ++j, w *= be)
        below += f(j) * w;
    return -theta * geometric_sum(be, nn - s) + below + w * v_n;
}

/// Stationary law of the mismatch counter under a threshold policy.
struct StationaryDistribution {
    std::vector<double> sigma;
    /// Probability mass beyond the stored support (0 when the support is lumped).
    double tail_mass = 0.0;
    State truncation = 0;
};

/**
 * Closed-form stationary distribution under threshold n, stored on 0..K.
 * With lump_at = S_thresh the chain of a bounded penalty is used: all mass of
 * states >= S_thresh sits at S_thresh and K is ignored.
 */
inline StationaryDistribution stationary_distribution(Threshold n, const SourceChannelParams& p,
                                                      State K, std::optional<State> lump_at = {}) {
    const double al = p.alpha();
    const double be = p.beta();
    const double a = p.a();
    StationaryDistribution out;

    if (lump_at) {
        const State st = *lump_at;
        if (st == 0)
            throw ParamError("lumped stationary distribution needs S_thresh >= 1");
        out.truncation = st;
        out.sigma.assign(st + 1, 0.0);
        if (n.is_never()) {
            const double s0 = sync_probability(n, p);
            out.sigma[0] = s0;
            double w = (1.0 - al) * s0;
            for (State k = 1; k < st; ++k, w *= be)
                out.sigma[k] = w;
            // limit-safe at beta = 1 where everything is absorbed at S_thresh
            out.sigma[st] = (1.0 - al) * int_pow(be, st - 1) / (2.0 - al - be);
            return out;
        }
        const State m = n.value() == 0 ? 1 : n.value();
        if (m > st)
            throw ParamError("threshold exceeds S_thresh in lumped stationary distribution");
        const double s0 = sync_probability(n, p);
        out.sigma[0] = s0;
        for (State k = 1; k < st; ++k) {
            out.sigma[k] = k <= m ? (1.0 - al) * int_pow(be, k - 1) * s0
                                  : (1.0 - al) * int_pow(be, m - 1) * int_pow(a, k - m) * s0;
        }
        out.sigma[st] = (1.0 - al) * int_pow(be, m - 1) * int_pow(a, st - m) * s0 / (1.0 - a);
        return out;
    }

    out.truncation = K;
    out.sigma.assign(K + 1, 0.0);
    if (n.is_never()) {
        if (be == 1.0)
            throw NumericalError("no stationary distribution: never transmitting with beta = 1 and an unbounded state space");
        const double s0 = sync_probability(n, p);
        out.sigma[0] = s0;
        double w = (1.0 - al) * s0;
        for (State k = 1; k <= K; ++k, w *= be)
            out.sigma[k] = w;
        out.tail_mass = (1.0 - al) * s0 * int_pow(be, K) / (1.0 - be);
        return out;
    }
    const State m = n.value() == 0 ? 1 : n.value();
    const double s0 = sync_probability(n, p);
    out.sigma[0] = s0;
    for (State k = 1; k <= K; ++k) {
        out.sigma[k] = k <= m ? (1.0 - al) * int_pow(be, k - 1) * s0
                              : (1.0 - al) * int_pow(be, m - 1) * int_pow(a, k - m) * s0;
    }
    const double top = (1.0 - al) * int_pow(be, m - 1) * s0; // sigma_m
    if (K >= m) {
        out.tail_mass = top * int_pow(a, K + 1 - m) / (1.0 - a);
    } else {
        out.tail_mass = (1.0 - al) * s0 * int_pow(be, K) * geometric_sum(be, m - K) + top * a / (1.0 - a);
    }
    return out;
}

/// Same, with the support extended until the neglected mass is below 1e-13.
inline StationaryDistribution stationary_distribution(Threshold n, const SourceChannelParams& p,
                                                      std::optional<State> lump_at = {}) {
    if (lump_at)
        return stationary_distribution(n, p, *lump_at, lump_at);
    constexpr double target = 1e-13;
    const State base = n.is_never() ? 0 : std::max<State>(n.value(), 1);
    const double ratio = n.is_never() ? p.beta() : p.a();
    State extra = 0;
    if (ratio > 0.0)
        extra = static_cast<State>(std::ceil(std::log(target * (1.0 - ratio)) / std::log(ratio))) + 1;
    return stationary_distribution(n, p, base + extra, lump_at);
}

/**
 * Long-run average penalty sum_k sigma_k f(k) of a threshold policy, with the
 * geometric tail handled by tail_sum. Threshold 0 has the dynamics of
 * threshold 1 (transmitting in sync changes nothing).
 */
inline double average_penalty(Threshold n, const SourceChannelParams& p, const PenaltySpec& f,
                              const TailOptions& opts = {}) {
    const double al = p.alpha();
    const double be = p.beta();
    if (n.is_never()) {
        const double s0 = sync_probability(n, p);
        if (const auto st = f.s_thresh()) {
            double acc = s0 * f(0);
            double w = (1.0 - al) * s0;
            for (State k = 1; k < *st; ++k, w *= be)
                acc += w * f(k);
            return acc + (1.0 - al) * int_pow(be, *st - 1) / (2.0 - al - be) * f(*st);
        }
        if (be == 1.0)
            throw NumericalError("never transmitting with beta = 1 has unbounded average penalty");
        return s0 * (f(0) + (1.0 - al) * tail_sum(f, be, 1, opts));
    }
    const State m = n.value() == 0 ? 1 : n.value();
    detail::require_finite_threshold(m, f, "average_penalty");
    const auto t = detail::threshold_terms(m, p, f, opts);
    return sync_probability(n, p) * (f(0) + (1.0 - al) * (t.head + t.beta_n1 * t.tail));
}

/// Long-run fraction of slots out of sync.
inline double average_error(Threshold n, const SourceChannelParams& p) {
    return 1.0 - sync_probability(n, p);
}

} // namespace aoii
