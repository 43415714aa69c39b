#pragma once

#include "aoii/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace aoii {

/// Number of consecutive slots the monitor has been out of sync (0 when in sync).
using State = std::uint64_t;

enum class Action { Idle, Transmit };

/// Unvalidated source/channel/budget parameters.
struct RawParams {
    double alpha = 0.0;
    double beta = 0.0;
    double p_s = 0.0;
    double delta = 1.0;
};

/**
 * Validated parameters of the two-regime source, the erasure channel and the
 * rate budget. Construct through validate(); instances always satisfy
 * 0 < alpha < 1, 0 < beta <= 1, 0 < p_s <= 1, 0 < delta <= 1 and a < beta.
 */
class SourceChannelParams {
  public:
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    double p_s() const noexcept { return p_s_; }
    double p_f() const noexcept { return 1.0 - p_s_; }
    double delta() const noexcept { return delta_; }

    /// Probability that the mismatch persists through a transmission slot.
    double a() const noexcept { return a_; }

    /// Update rate of the "transmit whenever out of sync" policy.
    double vartheta() const noexcept { return vartheta_; }

    /// Same source and channel under a different budget.
    SourceChannelParams with_delta(double delta) const;

    RawParams raw() const noexcept { return {alpha_, beta_, p_s_, delta_}; }

  private:
    friend SourceChannelParams validate(const RawParams&);
    SourceChannelParams() = default;

    double alpha_ = 0.0;
    double beta_ = 0.0;
    double p_s_ = 0.0;
    double delta_ = 0.0;
    double a_ = 0.0;
    double vartheta_ = 0.0;
};

namespace detail {
inline bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }
inline bool in_half_open_unit(double x) { return x > 0.0 && x <= 1.0; }
} // namespace detail

inline SourceChannelParams validate(const RawParams& raw) {
    if (!detail::in_open_unit(raw.alpha))
        throw RangeError("alpha must lie in (0,1), got " + std::to_string(raw.alpha));
    if (!detail::in_half_open_unit(raw.beta))
        throw RangeError("beta must lie in (0,1], got " + std::to_string(raw.beta));
    if (!detail::in_half_open_unit(raw.p_s))
        throw RangeError("p_s must lie in (0,1], got " + std::to_string(raw.p_s));
    if (!detail::in_half_open_unit(raw.delta))
        throw RangeError("delta must lie in (0,1], got " + std::to_string(raw.delta));

    SourceChannelParams p;
    p.alpha_ = raw.alpha;
    p.beta_ = raw.beta;
    p.p_s_ = raw.p_s;
    p.delta_ = raw.delta;
    p.a_ = (1.0 - raw.p_s) * raw.beta + (1.0 - raw.beta) * raw.p_s;
    if (!(p.a_ < p.beta_))
        throw AdmissibilityViolation("transmission does not help: a = " + std::to_string(p.a_) +
                                     " >= beta = " + std::to_string(p.beta_));
    p.vartheta_ = (1.0 - p.alpha_) / (2.0 - p.alpha_ - p.a_);
    return p;
}

inline SourceChannelParams SourceChannelParams::with_delta(double delta) const {
    auto raw = this->raw();
    raw.delta = delta;
    return validate(raw);
}

struct Transition {
    State next;
    double probability;
};

/// One-step kernel of the mismatch counter. The support always has two states.
inline std::array<Transition, 2> transition_distribution(State s, Action psi,
                                                         const SourceChannelParams& p) {
    if (s == 0)
        return {{{0, p.alpha()}, {1, 1.0 - p.alpha()}}};
    const double grow = psi == Action::Transmit ? p.a() : p.beta();
    return {{{s + 1, grow}, {0, 1.0 - grow}}};
}

/**
 * Threshold policy "transmit iff S >= n". For bounded penalties the
 * never-transmit policy is encoded as n = S_thresh + 1 and flagged.
 */
class Threshold {
  public:
    static constexpr Threshold at(std::uint64_t n) noexcept { return Threshold(n, false); }
    static constexpr Threshold never(std::uint64_t s_thresh) noexcept {
        return Threshold(s_thresh + 1, true);
    }

    constexpr std::uint64_t value() const noexcept { return n_; }
    constexpr bool is_never() const noexcept { return never_; }
    constexpr bool transmits(State s) const noexcept { return !never_ && s >= n_; }

    friend constexpr bool operator==(const Threshold&, const Threshold&) = default;

  private:
    constexpr Threshold(std::uint64_t n, bool never) noexcept : n_(n), never_(never) {}
    std::uint64_t n_;
    bool never_;
};

struct Unbounded {};

/// Saturating penalty: f is evaluated as f(min(S, s_thresh)) and level - f(s_thresh) < epsilon.
struct Bounded {
    State s_thresh = 0;
    double level = 0.0;
    double epsilon = 0.0;
};

/**
 * Non-decreasing, non-negative dissatisfaction function over the mismatch
 * counter, tagged with its growth class. Bounded penalties are truncated at
 * s_thresh on evaluation.
 */
class PenaltySpec {
  public:
    using Function = std::function<double(State)>;

    static constexpr State default_probe = 10'000;

    /// Summability of f(k) a^k is the caller's responsibility; see tail_sum.
    static PenaltySpec unbounded(std::string name, Function f, State probe = default_probe) {
        PenaltySpec spec(std::move(name), std::move(f), Unbounded{});
        spec.check_shape(probe);
        return spec;
    }

    /// S_thresh is the smallest S with level - f(S) < epsilon, scanning up to max_scan.
    static PenaltySpec bounded(std::string name, Function f, double level, double epsilon,
                               State max_scan = 10'000'000) {
        if (!(epsilon > 0.0))
            throw ParamError("bounded penalty '" + name + "' needs epsilon > 0");
        for (State s = 0; s <= max_scan; ++s) {
            if (level - f(s) < epsilon)
                return bounded_at(std::move(name), std::move(f), s, level, epsilon);
        }
        throw ParamError("bounded penalty '" + name + "' does not approach its level within " +
                         std::to_string(max_scan) + " states");
    }

    static PenaltySpec bounded_at(std::string name, Function f, State s_thresh, double level,
                                  double epsilon) {
        if (!(epsilon > 0.0))
            throw ParamError("bounded penalty '" + name + "' needs epsilon > 0");
        if (!(level - f(s_thresh) < epsilon))
            throw ParamError("bounded penalty '" + name + "' is not within epsilon of its level at S_thresh");
        PenaltySpec spec(std::move(name), std::move(f), Bounded{s_thresh, level, epsilon});
        spec.check_shape(s_thresh);
        return spec;
    }

    /// Exact saturation: f(S) == f(s_thresh) for S >= s_thresh by construction.
    static PenaltySpec saturating(std::string name, Function f, State s_thresh) {
        const double level = f(s_thresh);
        return bounded_at(std::move(name), std::move(f), s_thresh, level,
                          std::numeric_limits<double>::min());
    }

    double operator()(State s) const {
        if (const auto* b = std::get_if<Bounded>(&kind_))
            return f_(std::min(s, b->s_thresh));
        return f_(s);
    }

    const std::string& name() const noexcept { return name_; }
    bool is_bounded() const noexcept { return std::holds_alternative<Bounded>(kind_); }
    const std::variant<Unbounded, Bounded>& kind() const noexcept { return kind_; }

    std::optional<State> s_thresh() const noexcept {
        if (const auto* b = std::get_if<Bounded>(&kind_))
            return b->s_thresh;
        return std::nullopt;
    }

    /// The never-transmit threshold; only meaningful for bounded penalties.
    Threshold never() const {
        const auto st = s_thresh();
        if (!st)
            throw ParamError("penalty '" + name_ + "' is unbounded and has no never-transmit threshold");
        return Threshold::never(*st);
    }

  private:
    PenaltySpec(std::string name, Function f, std::variant<Unbounded, Bounded> kind)
        : name_(std::move(name)), f_(std::move(f)), kind_(kind) {}

    void check_shape(State last) const {
        double prev = f_(0);
        if (!(prev >= 0.0))
            throw ParamError("penalty '" + name_ + "' is negative or NaN at S=0");
        for (State s = 1; s <= last; ++s) {
            const double cur = f_(s);
            if (!(cur >= 0.0))
                throw ParamError("penalty '" + name_ + "' is negative or NaN at S=" + std::to_string(s));
            if (cur < prev)
                throw ParamError("penalty '" + name_ + "' decreases at S=" + std::to_string(s));
            prev = cur;
        }
    }

    std::string name_;
    Function f_;
    std::variant<Unbounded, Bounded> kind_;
};

} // namespace aoii
