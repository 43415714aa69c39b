#pragma once

// Brute-force reference computations that share no code with closed_form.hpp.

#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace aoii::oracle {

struct PowerIterationResult {
    std::vector<double> sigma;
    std::uint64_t iterations = 0;
    double residual = 0.0;
};

/**
 * Stationary law of the threshold policy on states 0..K by repeated
 * multiplication with the kernel, growth at K looping back to K. Starts from
 * the point mass at 0 and accumulates in long double.
 */
inline PowerIterationResult stationary_power_iteration(Threshold n, const SourceChannelParams& p, State K,
                                                       double tol = 1e-15, std::uint64_t max_iter = 2'000'000) {
    std::vector<long double> x(K + 1, 0.0L), y(K + 1, 0.0L);
    x[0] = 1.0L;
    PowerIterationResult out;
    for (std::uint64_t it = 1; it <= max_iter; ++it) {
        std::fill(y.begin(), y.end(), 0.0L);
        for (State s = 0; s <= K; ++s) {
            if (x[s] == 0.0L)
                continue;
            const Action u = n.transmits(s) ? Action::Transmit : Action::Idle;
            for (const auto& tr : transition_distribution(s, u, p))
                y[std::min(tr.next, K)] += x[s] * static_cast<long double>(tr.probability);
        }
        long double change = 0.0L;
        for (State s = 0; s <= K; ++s)
            change = std::max(change, std::fabs(y[s] - x[s]));
        x.swap(y);
        out.iterations = it;
        out.residual = static_cast<double>(change);
        if (change <= tol)
            break;
    }
    if (out.residual > tol)
        throw NoConvergence("power iteration did not converge (residual " + std::to_string(out.residual) + ")");
    out.sigma.assign(x.begin(), x.end());
    return out;
}

/// sum_{k=n}^{n+terms-1} f(k) a^(k-n) in long double, no stop rule.
inline double direct_tail_sum(const PenaltySpec& f, double a, State n, std::uint64_t terms = 10'000) {
    long double sum = 0.0L;
    long double w = 1.0L;
    for (std::uint64_t m = 0; m < terms; ++m, w *= a)
        sum += static_cast<long double>(f(n + m)) * w;
    return static_cast<double>(sum);
}

/// Long-run out-of-sync probability when transmitting w.p. q in every out-of-sync slot.
inline double two_regime_error(const SourceChannelParams& p, double q) {
    const double r = q * (1.0 - p.a()) + (1.0 - q) * (1.0 - p.beta());
    return (1.0 - p.alpha()) / (1.0 - p.alpha() + r);
}

} // namespace aoii::oracle
