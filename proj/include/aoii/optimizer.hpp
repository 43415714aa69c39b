#pragma once

#include "aoii/applications.hpp"
#include "aoii/closed_form.hpp"
#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace aoii {

struct SolveOptions {
    /// Bisection stops once lambda_max - lambda_min <= lambda_tol.
    double lambda_tol = 1e-6;
    /// Largest threshold the doubling search may probe for an unbounded penalty.
    std::uint64_t search_cap = std::uint64_t{1} << 30;
    /// Number of doublings of lambda_max allowed before giving up on bracketing.
    unsigned max_lambda_doublings = 1000;
    /// Below this rate gap the mixture collapses to the pure feasible policy.
    double degenerate_gap = 1e-12;
    TailOptions tail{};
};

/**
 * Optimal threshold of the Lagrangian problem for a fixed multiplier:
 * inf{n >= 1 : H(n) > 0} - 1, found by doubling then bisection. For a bounded
 * penalty the never-transmit threshold is returned when H(S_thresh) <= 0.
 */
inline Threshold find_threshold(double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                                const SolveOptions& opts = {}) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw RangeError("lambda must be finite and >= 0, got " + std::to_string(lambda));

    auto active = [&](State n) { return h_margin(n, lambda, p, f, opts.tail) > 0.0; };

    const auto st = f.s_thresh();
    if (st) {
        if (*st == 0)
            return Threshold::at(0);
        if (!active(*st))
            return Threshold::never(*st);
    }

    // invariant: lb == 0 or H(lb) <= 0, and H(ub) > 0 once the loop exits
    State lb = 0;
    State ub = 1;
    while (!active(ub)) {
        lb = ub;
        if (st) {
            ub = std::min<State>(2 * ub, *st);
        } else {
            if (ub >= opts.search_cap)
                throw SearchOverflow("threshold search for penalty '" + f.name() + "' exceeded " +
                                     std::to_string(opts.search_cap) + " at lambda = " + std::to_string(lambda));
            ub *= 2;
        }
    }
    while (ub - lb > 1) {
        const State mid = lb + (ub - lb) / 2;
        if (active(mid))
            ub = mid;
        else
            lb = mid;
    }
    return Threshold::at(ub - 1);
}

/**
 * Randomization between two adjacent thresholds. With probability mu the
 * system follows n_low, otherwise n_high. q_boundary is the equivalent
 * per-slot transmit probability at the single state n_high - 1 on one chain.
 */
struct MixturePolicy {
    Threshold n_low = Threshold::at(0);
    Threshold n_high = Threshold::at(0);
    double mu = 0.0;
    double q_boundary = 0.0;
    double c_low = 1.0;
    double c_high = 1.0;

    bool is_pure() const noexcept { return mu == 0.0; }

    /// The smallest state at which the policy may transmit.
    Threshold reported_threshold() const noexcept { return n_high.is_never() ? n_low : n_high; }

    double rate() const noexcept { return mu * c_low + (1.0 - mu) * c_high; }
};

struct LagrangeSolution {
    double lambda_star = 0.0;
    MixturePolicy policy;
    double avg_aoii = 0.0;
    double avg_error = 0.0;
    double achieved_rate = 0.0;
    /// True when the rate budget is active (delta below the rate of the best unconstrained policy).
    bool binding = false;
};

inline MixturePolicy pure_policy(Threshold n, const SourceChannelParams& p) {
    MixturePolicy m;
    m.n_low = n;
    m.n_high = n;
    m.c_low = m.c_high = update_rate(n, p);
    return m;
}

/**
 * Per-slot transmit probability at the boundary state that realises the
 * mixture's long-run rate on a single trajectory. Regeneration cycles start
 * in sync and cross the boundary at most once unless it is the absorbing
 * never-transmit state, so cycle means are affine in q.
 */
inline double boundary_probability(const MixturePolicy& m, const SourceChannelParams& p) {
    if (m.is_pure())
        return 0.0;
    if (m.n_low.value() == 0)
        return m.mu;  // randomising in sync only moves the rate
    const double al = p.alpha();
    const double be = p.beta();
    if (m.n_high.is_never()) {
        // boundary is the lumped top state, revisited while the mismatch lasts
        const State st = m.n_low.value();
        const double r = m.rate();
        const double l_pre = 1.0 + (1.0 - al) * geometric_sum(be, st - 1);
        const double top = (1.0 - al) * int_pow(be, st - 1);
        return r * (l_pre * (1.0 - be) + top) / (top - r * l_pre * (be - p.a()));
    }
    const double len_low = 1.0 / sync_probability(m.n_low, p);
    const double len_high = 1.0 / sync_probability(m.n_high, p);
    return m.mu * len_high / ((1.0 - m.mu) * len_low + m.mu * len_high);
}

namespace detail {

inline Threshold threshold_or_never(State m, const PenaltySpec& f) {
    if (const auto st = f.s_thresh(); st && m > *st)
        return Threshold::never(*st);
    return Threshold::at(m);
}

inline double mixture_average(const MixturePolicy& m, const SourceChannelParams& p, const PenaltySpec& f,
                              const TailOptions& opts) {
    const double high = average_penalty(m.n_high, p, f, opts);
    if (m.is_pure())
        return high;
    return m.mu * average_penalty(m.n_low, p, f, opts) + (1.0 - m.mu) * high;
}

inline double mixture_error(const MixturePolicy& m, const SourceChannelParams& p) {
    const double high = average_error(m.n_high, p);
    if (m.is_pure())
        return high;
    return m.mu * average_error(m.n_low, p) + (1.0 - m.mu) * high;
}

inline LagrangeSolution finish(double lambda_star, MixturePolicy m, bool binding, const SourceChannelParams& p,
                               const PenaltySpec& f, const SolveOptions& opts) {
    m.q_boundary = boundary_probability(m, p);
    LagrangeSolution out;
    out.lambda_star = lambda_star;
    out.policy = m;
    out.avg_aoii = mixture_average(m, p, f, opts.tail);
    out.avg_error = mixture_error(m, p);
    out.achieved_rate = m.rate();
    out.binding = binding;
    return out;
}

} // namespace detail

/**
 * Minimises the long-run average penalty subject to a transmission rate of
 * at most delta: bisection on the multiplier, then a mixture of the two
 * adjacent thresholds around the rate budget.
 */
inline LagrangeSolution solve(const SourceChannelParams& p, const PenaltySpec& f, const SolveOptions& opts = {}) {
    const double delta = p.delta();

    if (!f.is_bounded() && delta >= 1.0)
        return detail::finish(0.0, pure_policy(Threshold::at(0), p), false, p, f, opts);
    if (f.is_bounded() && delta >= p.vartheta())
        return detail::finish(0.0, pure_policy(Threshold::at(1), p), false, p, f, opts);

    auto rate_at = [&](double lambda) { return update_rate(find_threshold(lambda, p, f, opts), p); };

    double lam_min = 0.0;
    if (rate_at(lam_min) <= delta) // penalty indifferent to transmissions
        return detail::finish(0.0, pure_policy(find_threshold(0.0, p, f, opts), p), false, p, f, opts);

    double lam_max = 1.0;
    for (unsigned i = 0; rate_at(lam_max) > delta; ++i) {
        if (i >= opts.max_lambda_doublings)
            throw InfeasibleTolerance("could not bracket the multiplier for delta = " + std::to_string(delta));
        lam_min = lam_max;
        lam_max *= 2.0;
    }
    while (lam_max - lam_min > opts.lambda_tol) {
        const double mid = 0.5 * (lam_min + lam_max);
        if (mid <= lam_min || mid >= lam_max)
            break;
        if (rate_at(mid) > delta)
            lam_min = mid;
        else
            lam_max = mid;
    }

    // every threshold between the two bisection ends is optimal at lambda*;
    // take the adjacent pair that straddles delta
    const State lo = find_threshold(lam_min, p, f, opts).value();
    State hi = find_threshold(lam_max, p, f, opts).value();
    State left = lo;
    while (hi - left > 1) {
        const State mid = left + (hi - left) / 2;
        if (update_rate(detail::threshold_or_never(mid, f), p) <= delta)
            hi = mid;
        else
            left = mid;
    }

    MixturePolicy m;
    m.n_high = detail::threshold_or_never(hi, f);
    m.n_low = Threshold::at(hi - 1);
    m.c_high = update_rate(m.n_high, p);
    m.c_low = update_rate(m.n_low, p);
    if (!(m.c_high <= delta && delta <= m.c_low))
        throw NumericalError("rate bracket violated after bisection: C_low = " + std::to_string(m.c_low) +
                             ", C_high = " + std::to_string(m.c_high) + ", delta = " + std::to_string(delta));
    if (m.c_low - m.c_high < opts.degenerate_gap) {
        m.n_low = m.n_high;
        m.c_low = m.c_high;
        m.mu = 0.0;
    } else {
        m.mu = (delta - m.c_high) / (m.c_low - m.c_high);
    }
    return detail::finish(lam_max, m, true, p, f, opts);
}

/// Policy minimising the long-run probability of being out of sync under the rate budget.
inline LagrangeSolution error_optimal(const SourceChannelParams& p, const SolveOptions& opts = {}) {
    return solve(p, error_f(), opts);
}

/**
 * Average of an arbitrary penalty when every out-of-sync slot transmits with
 * probability q, which is how the error-optimal policy acts on one chain.
 * The mismatch then grows with probability g = q a + (1-q) beta per slot.
 */
inline double persistent_randomized_penalty(double q, const SourceChannelParams& p, const PenaltySpec& f,
                                            const TailOptions& opts = {}) {
    if (!(q >= 0.0 && q <= 1.0))
        throw RangeError("transmit probability must lie in [0,1]");
    const double g = q * p.a() + (1.0 - q) * p.beta();
    if (g >= 1.0) {
        if (const auto st = f.s_thresh())
            return f(*st); // absorbed in the saturated regime
        throw NumericalError("mismatch never resolves: unbounded average penalty");
    }
    const double s0 = (1.0 - g) / (1.0 - g + 1.0 - p.alpha());
    return s0 * (f(0) + (1.0 - p.alpha()) * tail_sum(f, g, 1, opts));
}

/// Transmit probability out of sync for the single-chain error-optimal policy.
inline double error_policy_probability(const LagrangeSolution& e) {
    const auto& m = e.policy;
    if (m.is_pure())
        return m.n_high.is_never() ? 0.0 : 1.0;
    return m.q_boundary;
}

} // namespace aoii
