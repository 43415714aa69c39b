#pragma once

#include "aoii/errors.hpp"
#include "aoii/model.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/rvia.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace aoii {

/**
 * Stationary decision rule on one observable: the mismatch counter (clamped
 * at an optional cap) or the age of information. Transmits deterministically
 * at or above `high`, and with probability q at the single state `boundary`.
 */
class Policy {
  public:
    enum class Observes { Mismatch, Age };

    static Policy threshold(Threshold n, std::optional<State> cap = {}) {
        Policy pol;
        pol.never_ = n.is_never();
        pol.high_ = n.value();
        pol.cap_ = cap;
        return pol;
    }

    /// Single-chain realisation of a mixture; cap is the penalty's S_thresh, if any.
    static Policy mixture(const MixturePolicy& m, std::optional<State> cap = {}) {
        Policy pol = threshold(m.n_high, cap);
        if (!m.is_pure()) {
            pol.boundary_ = m.n_low.value();
            pol.q_ = m.q_boundary;
        }
        return pol;
    }

    static Policy always() { return threshold(Threshold::at(0)); }
    static Policy never() { return threshold(Threshold::never(0)); }

    /// Transmit when the age is >= high; at age high - 1 transmit with probability q.
    static Policy age_threshold(std::uint64_t high, double q) {
        Policy pol;
        pol.observes_ = Observes::Age;
        pol.high_ = high;
        if (q > 0.0 && high > 1) {
            pol.boundary_ = high - 1;
            pol.q_ = q;
        }
        return pol;
    }

    Action decide(State s, std::uint64_t age, double u) const noexcept {
        std::uint64_t x = observes_ == Observes::Age ? age : (cap_ ? std::min(s, *cap_) : s);
        if (!never_ && x >= high_)
            return Action::Transmit;
        if (boundary_ && x == *boundary_ && u < q_)
            return Action::Transmit;
        return Action::Idle;
    }

    Observes observes() const noexcept { return observes_; }

  private:
    Observes observes_ = Observes::Mismatch;
    bool never_ = false;
    std::uint64_t high_ = 0;
    std::optional<std::uint64_t> boundary_;
    double q_ = 0.0;
    std::optional<State> cap_;
};

struct SimOptions {
    std::uint64_t batches = 100;
    /// Independent replication index mixed into the seed.
    std::uint64_t stream = 0;
};

struct SimStats {
    double avg_penalty = 0.0;
    double avg_error = 0.0;
    double rate = 0.0;
    double hw_penalty = 0.0;
    double hw_error = 0.0;
    double hw_rate = 0.0;
    std::uint64_t T = 0;
    std::uint64_t seed = 0;
};

namespace detail {

/// 97.5% Student-t quantile; exact table entry for 99 degrees of freedom.
inline double t_quantile_975(std::uint64_t dof) {
    if (dof == 99)
        return 1.9842169515;
    if (dof >= 1000)
        return 1.959964;
    // Cornish-Fisher expansion, accurate to ~1e-4 for dof >= 5
    const double z = 1.959963985;
    const double v = static_cast<double>(dof);
    const double z3 = z * z * z, z5 = z3 * z * z;
    return z + (z3 + z) / (4 * v) + (5 * z5 + 16 * z3 + 3 * z) / (96 * v * v);
}

/// Batch-means 95% half-width.
inline double half_width(const std::vector<double>& means) {
    const auto b = means.size();
    if (b < 2)
        return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (double x : means)
        m += x;
    m /= static_cast<double>(b);
    double ss = 0.0;
    for (double x : means)
        ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(b - 1));
    return t_quantile_975(b - 1) * sd / std::sqrt(static_cast<double>(b));
}

class UniformStream {
  public:
    UniformStream(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }
    double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  private:
    std::mt19937_64 engine_;
};

struct NoObserver {
    void operator()(State, Action, State) const noexcept {}
};

} // namespace detail

/**
 * Monte-Carlo run of T slots from S = 0, A = 1. Each slot consumes three
 * uniforms (policy, channel, source) so that policies compared under the same
 * seed see the same channel and source realisations. Penalty, error and
 * action are scored at the start of the slot. `observe(S, action, S_next)` is
 * called for every slot.
 */
template <class Observer = detail::NoObserver>
SimStats simulate(const Policy& policy, const SourceChannelParams& p, const PenaltySpec& f, std::uint64_t T,
                  std::uint64_t seed, const SimOptions& opts = {}, Observer&& observe = {}) {
    if (T < 10'000)
        throw ParamError("simulation horizon must be at least 1e4 slots, got " + std::to_string(T));
    if (opts.batches < 2 || opts.batches > T)
        throw ParamError("batch count must lie in [2, T]");

    detail::UniformStream uniform(seed, opts.stream);
    std::vector<double> table;
    auto penalty = [&](State s) {
        if (s >= table.size()) {
            const auto old = table.size();
            table.resize(std::max<std::size_t>(2 * old, s + 64));
            for (std::size_t k = old; k < table.size(); ++k)
                table[k] = f(k);
        }
        return table[s];
    };

    const double stay_sync = p.alpha();
    const double flip_bad = 1.0 - p.beta();
    const double p_s = p.p_s();

    std::vector<double> bm_pen, bm_err, bm_rate;
    bm_pen.reserve(opts.batches);
    bm_err.reserve(opts.batches);
    bm_rate.reserve(opts.batches);

    double tot_pen = 0.0, tot_err = 0.0, tot_rate = 0.0;
    State s = 0;
    std::uint64_t age = 1;
    std::uint64_t t = 0;
    for (std::uint64_t b = 0; b < opts.batches; ++b) {
        const std::uint64_t end = T * (b + 1) / opts.batches;
        const auto len = static_cast<double>(end - t);
        double pen = 0.0, err = 0.0, tx = 0.0;
        for (; t < end; ++t) {
            const double u_pol = uniform();
            const double u_ch = uniform();
            const double u_src = uniform();
            const Action act = policy.decide(s, age, u_pol);
            pen += penalty(s);
            err += s != 0 ? 1.0 : 0.0;
            const bool sent = act == Action::Transmit;
            tx += sent ? 1.0 : 0.0;
            const bool delivered = sent && u_ch < p_s;
            State next;
            if (s == 0) {
                next = u_src < stay_sync ? 0 : 1;
            } else {
                const bool flips = u_src < flip_bad;
                next = delivered ? (flips ? s + 1 : 0) : (flips ? 0 : s + 1);
            }
            observe(s, act, next);
            s = next;
            age = delivered ? 1 : age + 1;
        }
        bm_pen.push_back(pen / len);
        bm_err.push_back(err / len);
        bm_rate.push_back(tx / len);
        tot_pen += pen;
        tot_err += err;
        tot_rate += tx;
    }

    SimStats out;
    const auto n = static_cast<double>(T);
    out.avg_penalty = tot_pen / n;
    out.avg_error = tot_err / n;
    out.rate = tot_rate / n;
    out.hw_penalty = detail::half_width(bm_pen);
    out.hw_error = detail::half_width(bm_err);
    out.hw_rate = detail::half_width(bm_rate);
    out.T = T;
    out.seed = seed;
    return out;
}

/**
 * Age-of-information problem on ages 1..K: cost A + lambda per transmission,
 * a transmission delivers with probability p_s and the age restarts at 1.
 * Index i holds age i + 1; the age saturates at K.
 */
class AgeMdp {
  public:
    AgeMdp(double p_s, double lambda, std::uint64_t K) : p_s_(p_s), lambda_(lambda), K_(K) {
        if (K < 2)
            throw ParamError("age truncation must be >= 2");
    }

    std::size_t size() const noexcept { return K_; }

    double cost(std::size_t i, Action u) const noexcept {
        return static_cast<double>(i + 1) + (u == Action::Transmit ? lambda_ : 0.0);
    }

    std::array<IndexTransition, 2> transitions(std::size_t i, Action u) const noexcept {
        const std::size_t older = std::min<std::size_t>(i + 1, K_ - 1);
        if (u == Action::Idle)
            return {{{older, 1.0}, {0, 0.0}}};
        return {{{0, p_s_}, {older, 1.0 - p_s_}}};
    }

  private:
    double p_s_;
    double lambda_;
    std::uint64_t K_;
};

/// Transmission rate of "transmit when the age is >= m".
inline double age_threshold_rate(std::uint64_t m, double p_s) {
    return 1.0 / (1.0 + static_cast<double>(m - 1) * p_s);
}

struct AoiBaseline {
    Policy policy = Policy::always();
    double lambda_star = 0.0;
    std::uint64_t m_low = 1;
    std::uint64_t m_high = 1;
    double mu = 0.0;
    double q = 0.0;
    double rate = 1.0;
};

struct AoiOptions {
    double lambda_tol = 1e-4;
    RviaOptions rvia{1e-9, 100'000, 0.5};
};

/**
 * Rate-constrained AoI-optimal policy: RVIA on the age MDP inside a bisection
 * on the multiplier, then randomisation at the age just below the threshold.
 */
inline AoiBaseline aoi_baseline(const SourceChannelParams& p, const AoiOptions& opts = {}) {
    const double delta = p.delta();
    const double p_s = p.p_s();
    AoiBaseline out;
    if (delta >= 1.0)
        return out;

    const auto expected = static_cast<std::uint64_t>(std::ceil(1.0 + (1.0 / delta - 1.0) / p_s));
    const std::uint64_t K = std::max<std::uint64_t>(200, 4 * expected);

    // greedy age threshold, K + 1 when the policy never transmits
    auto threshold_at = [&](double lambda) -> std::uint64_t {
        const auto r = relative_value_iteration(AgeMdp(p_s, lambda, K), opts.rvia);
        for (std::size_t i = 0; i < r.greedy.size(); ++i) {
            if (r.greedy[i] == Action::Transmit)
                return i + 1;
        }
        return K + 1;
    };
    auto rate_of = [&](std::uint64_t m) { return m > K ? 0.0 : age_threshold_rate(m, p_s); };

    double lam_min = 0.0;
    double lam_max = 1.0;
    std::uint64_t m_min = threshold_at(lam_min);
    std::uint64_t m_max = threshold_at(lam_max);
    for (unsigned i = 0; rate_of(m_max) > delta; ++i) {
        if (i >= 200)
            throw InfeasibleTolerance("could not bracket the AoI multiplier");
        lam_min = lam_max;
        m_min = m_max;
        lam_max *= 2.0;
        m_max = threshold_at(lam_max);
    }
    while (lam_max - lam_min > opts.lambda_tol && m_max - m_min > 1) {
        const double mid = 0.5 * (lam_min + lam_max);
        const auto m = threshold_at(mid);
        if (rate_of(m) > delta) {
            lam_min = mid;
            m_min = m;
        } else {
            lam_max = mid;
            m_max = m;
        }
    }
    if (m_max > K)
        throw NumericalError("AoI baseline threshold hit the age truncation");

    std::uint64_t m = m_min + 1;
    while (m < m_max && rate_of(m) > delta)
        ++m;
    out.lambda_star = lam_max;
    out.m_high = m;
    out.m_low = m - 1;
    const double c_high = rate_of(m);
    const double c_low = rate_of(m - 1);
    out.mu = c_low - c_high < 1e-12 ? 0.0 : (delta - c_high) / (c_low - c_high);
    const double len_high = static_cast<double>(m - 1) + 1.0 / p_s;
    const double len_low = static_cast<double>(m - 2) + 1.0 / p_s;
    out.q = out.mu == 0.0 ? 0.0 : out.mu * len_high / ((1.0 - out.mu) * len_low + out.mu * len_high);
    out.rate = out.mu * c_low + (1.0 - out.mu) * c_high;
    out.policy = Policy::age_threshold(out.m_high, out.q);
    return out;
}

} // namespace aoii
