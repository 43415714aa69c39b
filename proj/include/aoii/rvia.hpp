#pragma once

#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aoii {

struct RviaOptions {
    double tol = 1e-9;
    std::uint64_t max_iter = 100'000;
    /// Weight of the Bellman operator in each sweep; values below 1 add a
    /// self-loop that makes periodic chains converge without moving the fixed point.
    double damping = 1.0;
};

struct RviaResult {
    std::vector<double> V;
    double theta_est = 0.0;
    std::vector<Action> greedy;
    std::uint64_t iterations = 0;
    double residual = 0.0;
};

struct IndexTransition {
    std::size_t next;
    double probability;
};

/// Finite average-cost MDP with two actions and two successors per state-action pair.
template <class M>
concept TwoActionMdp = requires(const M& m, std::size_t s, Action u) {
    { m.size() } -> std::convertible_to<std::size_t>;
    { m.cost(s, u) } -> std::convertible_to<double>;
    { m.transitions(s, u) } -> std::convertible_to<std::array<IndexTransition, 2>>;
};

/**
 * Relative value iteration anchored at state 0 with synchronous sweeps:
 * V_{t+1} = T(V_t) - T(V_t)(0). Stops when the sup-norm change is <= tol.
 * Ties in the greedy policy go to Idle.
 */
template <TwoActionMdp M>
RviaResult relative_value_iteration(const M& mdp, const RviaOptions& opts = {}) {
    const std::size_t n = mdp.size();
    if (n == 0)
        throw ParamError("relative value iteration needs at least one state");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0))
        throw ParamError("RVIA damping must lie in (0,1]");

    auto q_value = [&](const std::vector<double>& v, std::size_t s, Action u) {
        const auto tr = mdp.transitions(s, u);
        return mdp.cost(s, u) + tr[0].probability * v[tr[0].next] + tr[1].probability * v[tr[1].next];
    };

    RviaResult out;
    std::vector<double> v(n, 0.0);
    std::vector<double> tv(n, 0.0);
    for (std::uint64_t it = 1; it <= opts.max_iter; ++it) {
        for (std::size_t s = 0; s < n; ++s) {
            const double best = std::min(q_value(v, s, Action::Idle), q_value(v, s, Action::Transmit));
            tv[s] = opts.damping * best + (1.0 - opts.damping) * v[s];
        }
        const double anchor = tv[0];
        double change = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            tv[s] -= anchor;
            change = std::max(change, std::abs(tv[s] - v[s]));
        }
        v.swap(tv);
        out.iterations = it;
        out.residual = change;
        out.theta_est = anchor / opts.damping;
        if (change <= opts.tol)
            break;
    }
    if (out.residual > opts.tol)
        throw NoConvergence("RVIA did not converge within " + std::to_string(opts.max_iter) +
                            " sweeps (residual " + std::to_string(out.residual) + ")");

    out.greedy.resize(n);
    for (std::size_t s = 0; s < n; ++s)
        out.greedy[s] = q_value(v, s, Action::Transmit) < q_value(v, s, Action::Idle) ? Action::Transmit
                                                                                      : Action::Idle;
    out.V = std::move(v);
    return out;
}

/**
 * Lagrangian AoII problem on states 0..K. The growth transition at K loops
 * back to K; with K = S_thresh this is exact for a bounded penalty.
 */
class AoiiMdp {
  public:
    AoiiMdp(const SourceChannelParams& p, const PenaltySpec& f, double lambda, State K)
        : p_(p), lambda_(lambda), K_(K), cost_(K + 1) {
        if (K == 0)
            throw ParamError("AoII truncation K must be >= 1");
        for (State s = 0; s <= K; ++s)
            cost_[s] = f(s);
    }

    std::size_t size() const noexcept { return K_ + 1; }

    double cost(std::size_t s, Action u) const noexcept {
        return cost_[s] + (u == Action::Transmit ? lambda_ : 0.0);
    }

    std::array<IndexTransition, 2> transitions(std::size_t s, Action u) const {
        const auto tr = transition_distribution(s, u, p_);
        return {{{std::min<std::size_t>(tr[0].next, K_), tr[0].probability},
                 {std::min<std::size_t>(tr[1].next, K_), tr[1].probability}}};
    }

    State truncation() const noexcept { return K_; }

  private:
    SourceChannelParams p_;
    double lambda_;
    State K_;
    std::vector<double> cost_;
};

/// Default truncation: S_thresh for a bounded penalty, else max(200, 4 * hint).
inline State default_truncation(const PenaltySpec& f, State threshold_hint = 0) {
    if (const auto st = f.s_thresh())
        return std::max<State>(*st, 1);
    return std::max<State>(200, 4 * threshold_hint);
}

inline RviaResult rvia(double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                       std::optional<State> K = {}, const RviaOptions& opts = {}) {
    return relative_value_iteration(AoiiMdp(p, f, lambda, K.value_or(default_truncation(f))), opts);
}

/**
 * Threshold implied by the value estimate: the smallest S >= 0 with
 * lambda + (a - beta) V(S+1) < 0, or never(K) if there is none.
 */
inline Threshold greedy_threshold(const RviaResult& r, double lambda, const SourceChannelParams& p) {
    const std::size_t K = r.V.size() - 1;
    for (std::size_t s = 0; s <= K; ++s) {
        if (lambda + (p.a() - p.beta()) * r.V[std::min(s + 1, K)] < 0.0)
            return Threshold::at(s);
    }
    return Threshold::never(K);
}

/// V(S+1) >= V(S) - 1e-9 everywhere.
inline bool check_monotone(const RviaResult& r) {
    for (std::size_t s = 0; s + 1 < r.V.size(); ++s) {
        if (r.V[s + 1] < r.V[s] - 1e-9)
            return false;
    }
    return true;
}

/// Greedy actions over S >= 1 are a run of Idle followed by a run of Transmit.
inline bool check_threshold_structure(const RviaResult& r) {
    bool switched = false;
    for (std::size_t s = 1; s < r.greedy.size(); ++s) {
        if (r.greedy[s] == Action::Transmit)
            switched = true;
        else if (switched)
            return false;
    }
    return true;
}

} // namespace aoii
