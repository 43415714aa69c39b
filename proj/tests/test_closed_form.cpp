#include "aoii/applications.hpp"
#include "aoii/closed_form.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace aoii;

namespace {

SourceChannelParams table_source() { return validate({0.2, 0.9, 0.8, 1.0}); }

// rates C(n), n = 1..15, from a 3000-state truncated balance solve at 40 digits
const std::vector<double> kRates{0.519480519480519, 0.350877192982456, 0.257879656160458, 0.199212985735366,
                                 0.159017537736672, 0.129896098959406, 0.107933591476593, 0.0908636019943723,
                                 0.0772830248291755, 0.066276606124368, 0.0572217681736988, 0.0496802062399859,
                                 0.0433343553993371, 0.0379484578066357, 0.0333437909420192};

// average of f(S) = S under threshold n, same oracle
const std::vector<double> kLinearCost{0.702000702000702, 1.1135345872188, 1.52390786201674, 1.92445076655603,
                                      2.3119617305116,   2.68508240885769, 3.04323150450855, 3.38621098120327,
                                      3.71403611281975,  4.02685298591303, 4.32489440632601, 4.60845425443639,
                                      4.8778713637822,   5.13351862109084, 5.3757950857581};

} // namespace

TEST(GeometricSum, LimitsAndValues) {
    EXPECT_EQ(geometric_sum(0.5, 0), 0.0);
    EXPECT_DOUBLE_EQ(geometric_sum(1.0, 7), 7.0);
    EXPECT_DOUBLE_EQ(geometric_sum(0.0, 7), 1.0);
    EXPECT_NEAR(geometric_sum(0.5, 3), 1.75, 1e-15);
    EXPECT_NEAR(geometric_sum(1.0 - 1e-12, 10), 10.0, 1e-9);
}

TEST(TailSum, GeometricSeries) {
    const auto one = PenaltySpec::unbounded("one", [](State) { return 1.0; });
    EXPECT_NEAR(tail_sum(one, 0.26, 5), 1.0 / 0.74, 1e-14);
}

TEST(TailSum, ArithmeticoGeometric) {
    EXPECT_NEAR(tail_sum(linear_f(), 0.5, 0), 2.0, 1e-13);
}

TEST(TailSum, VideoAgainstHighPrecision) {
    // 40-digit sum of the video distortion from k = 3 with a = 0.26
    EXPECT_NEAR(tail_sum(video_f({}), 0.26, 3), 145.170719057754376, 145.17 * 1e-12);
}

TEST(TailSum, VideoAgainstDirectSummation) {
    const auto f = video_f({});
    for (int i = 1; i <= 9; ++i) {
        const double a = 0.1 * i;
        const double fast = tail_sum(f, a, 0);
        const double slow = oracle::direct_tail_sum(f, a, 0, 10'000);
        EXPECT_LE(std::abs(fast - slow), 1e-9 * std::abs(slow)) << "a = " << a;
    }
}

TEST(TailSum, BoundedIsExact) {
    const auto f = error_f();
    EXPECT_NEAR(tail_sum(f, 0.26, 0), 0.26 / 0.74, 1e-15);
    EXPECT_NEAR(tail_sum(f, 0.26, 4), 1.0 / 0.74, 1e-15);
}

TEST(TailSum, LeadingZerosDoNotStopTheSum) {
    const auto late = PenaltySpec::unbounded("late", [](State s) { return s >= 40 ? 1.0 : 0.0; });
    const double sum = tail_sum(late, 0.5, 0);
    EXPECT_NEAR(sum, std::pow(0.5, 40) * 2.0, TailOptions{}.eps_tail);
    EXPECT_NEAR(sum / (std::pow(0.5, 40) * 2.0), 1.0, 1e-5);
}

TEST(TailSum, DivergenceDetected) {
    const auto expo = PenaltySpec::unbounded("expo", [](State s) { return std::pow(2.0, double(s)); }, 100);
    TailOptions o;
    o.k_max = 2000;
    EXPECT_THROW(tail_sum(expo, 0.6, 0, o), DivergenceSuspected);
    EXPECT_THROW(tail_sum(linear_f(), 1.0, 0), RangeError);
}

TEST(Theta, LinearPenaltyThresholdOne) {
    const auto p = table_source();
    EXPECT_NEAR(theta_n(1, 0.0, p, linear_f()), 0.702000702000702, 1e-12);
}

TEST(Theta, MatchesStationaryCostPlusRate) {
    // theta_n(2) = J(n) + 2 C(n), frozen from the balance-equation oracle
    const std::vector<double> expect{1.74096174096174, 1.81528897318371, 2.03966717433766, 2.32287673802676,
                                     2.62999680598494};
    const auto p = table_source();
    for (State n = 1; n <= 5; ++n)
        EXPECT_NEAR(theta_n(n, 2.0, p, linear_f()), expect[n - 1], 1e-12) << n;
}

TEST(Theta, ErrorPenaltyIsOutOfSyncProbability) {
    const auto p = table_source();
    const double expect = (1.0 / 0.74) / (1.25 + 1.0 / 0.74);
    EXPECT_NEAR(theta_n(1, 0.0, p, error_f()), expect, 1e-15);
    EXPECT_NEAR(theta_n(1, 0.0, p, error_f()), 1.0 - sync_probability(Threshold::at(1), p), 1e-15);
}

TEST(Theta, RejectsBadThreshold) {
    const auto p = table_source();
    EXPECT_THROW(theta_n(0, 0.0, p, linear_f()), ParamError);
    EXPECT_THROW(theta_n(8, 0.0, p, weibull_f({})), ParamError);
}

TEST(Margin, ThresholdOneAtZeroMultiplier) {
    EXPECT_NEAR(h_margin(1, 0.0, table_source(), linear_f()), 0.8775008775008775, 1e-12);
}

TEST(Margin, NonDecreasingInThreshold) {
    const auto p = table_source();
    for (double lam : {0.0, 0.5, 2.0, 10.0, 40.0}) {
        double prev = h_margin(1, lam, p, linear_f());
        for (State n = 2; n <= 60; ++n) {
            const double cur = h_margin(n, lam, p, linear_f());
            EXPECT_GE(cur, prev - 1e-12) << "lambda " << lam << " n " << n;
            prev = cur;
        }
    }
}

TEST(Margin, BoundedNeverTestMatchesMultiplierBound) {
    const auto p = table_source();
    const auto f = weibull_f({});
    for (double lam : {0.1, 0.5, 1.0, 1.5, 2.0, 5.0}) {
        const bool idle = h_margin(*f.s_thresh(), lam, p, f) <= 0.0;
        EXPECT_EQ(idle, lam >= idle_multiplier_bound(lam, p, f)) << lam;
    }
    EXPECT_TRUE(std::isinf(idle_multiplier_bound(1.0, validate({0.2, 1.0, 1.0, 1.0}), fire_f({}))));
}

TEST(UpdateRate, AgreesWithBalanceOracle) {
    const auto p = table_source();
    EXPECT_EQ(update_rate(Threshold::at(0), p), 1.0);
    for (State n = 1; n <= 15; ++n)
        EXPECT_NEAR(update_rate(Threshold::at(n), p), kRates[n - 1], 1e-13) << n;
    EXPECT_NEAR(update_rate(Threshold::at(1), p), p.vartheta(), 1e-15);
    EXPECT_EQ(update_rate(Threshold::never(7), p), 0.0);
}

TEST(UpdateRate, StrictlyDecreasing) {
    for (double be : {0.6, 0.9, 1.0}) {
        const auto p = validate({0.3, be, 1.0, 1.0});
        for (State n = 1; n < 100; ++n)
            EXPECT_LT(update_rate(Threshold::at(n + 1), p), update_rate(Threshold::at(n), p));
    }
}

TEST(Stationary, TwoStateLimit) {
    const auto p = validate({0.2, 1.0, 1.0, 1.0});
    const auto s = stationary_distribution(Threshold::at(1), p, 10);
    EXPECT_NEAR(s.sigma[0], 5.0 / 9.0, 1e-15);
    EXPECT_NEAR(s.sigma[1], 4.0 / 9.0, 1e-15);
}

TEST(Stationary, MatchesPowerIteration) {
    const auto p = table_source();
    for (State n : {1, 2, 5, 12}) {
        const auto cf = stationary_distribution(Threshold::at(n), p, 200);
        const auto pi = oracle::stationary_power_iteration(Threshold::at(n), p, 200);
        for (State k = 0; k <= 200; ++k)
            EXPECT_NEAR(cf.sigma[k], pi.sigma[k], 1e-9) << "n " << n << " k " << k;
    }
}

TEST(Stationary, LumpedMatchesPowerIteration) {
    const auto p = table_source();
    const State st = 7;
    for (auto n : {Threshold::at(1), Threshold::at(3), Threshold::at(7), Threshold::never(st)}) {
        const auto cf = stationary_distribution(n, p, st, st);
        const auto pi = oracle::stationary_power_iteration(n, p, st);
        for (State k = 0; k <= st; ++k)
            EXPECT_NEAR(cf.sigma[k], pi.sigma[k], 1e-12) << k;
    }
}

TEST(Stationary, MassAndRateIdentity) {
    for (double be : {0.7, 0.9, 1.0}) {
        const auto p = validate({0.3, be, 0.9, 1.0});
        for (State n : {1, 2, 5, 12, 30}) {
            const auto s = stationary_distribution(Threshold::at(n), p);
            double total = s.tail_mass, above = s.tail_mass;
            for (State k = 0; k < s.sigma.size(); ++k) {
                total += s.sigma[k];
                if (k >= n)
                    above += s.sigma[k];
            }
            EXPECT_NEAR(total, 1.0, 1e-9);
            EXPECT_NEAR(above, update_rate(Threshold::at(n), p), 1e-9);
        }
    }
}

TEST(AveragePenalty, KnownValues) {
    const auto p = table_source();
    for (State n = 1; n <= 15; ++n)
        EXPECT_NEAR(average_penalty(Threshold::at(n), p, linear_f()), kLinearCost[n - 1], 1e-12) << n;
    EXPECT_EQ(average_penalty(Threshold::at(0), p, linear_f()), average_penalty(Threshold::at(1), p, linear_f()));
    const auto fire_src = validate({0.2, 1.0, 1.0, 1.0});
    EXPECT_NEAR(average_penalty(Threshold::at(1), fire_src, error_f()), 4.0 / 9.0, 1e-15);
}

TEST(AveragePenalty, NeverTransmitMatchesPowerIteration) {
    const auto p = table_source();
    const auto f = weibull_f({});
    const auto n = f.never();
    const auto pi = oracle::stationary_power_iteration(n, p, *f.s_thresh());
    double expect = 0.0;
    for (State k = 0; k < pi.sigma.size(); ++k)
        expect += pi.sigma[k] * f(k);
    EXPECT_NEAR(average_penalty(n, p, f), expect, 1e-12);
    // unbounded penalty, no transmissions, beta < 1: long truncated chain
    const auto pl = oracle::stationary_power_iteration(Threshold::never(0), p, 600);
    double lin = 0.0;
    for (State k = 0; k < pl.sigma.size(); ++k)
        lin += pl.sigma[k] * double(k);
    EXPECT_NEAR(average_penalty(Threshold::never(0), p, linear_f()), lin, 1e-9);
}

TEST(AveragePenalty, NeverTransmitAbsorbing) {
    const auto p = validate({0.2, 1.0, 1.0, 1.0});
    EXPECT_NEAR(average_penalty(fire_f({}).never(), p, fire_f({})), 10.0, 1e-15);
    EXPECT_THROW(average_penalty(Threshold::never(0), p, linear_f()), NumericalError);
}

TEST(AverageError, IsOneMinusSync) {
    const auto p = table_source();
    EXPECT_NEAR(average_error(Threshold::at(2), p), 1.0 - sync_probability(Threshold::at(2), p), 1e-15);
    EXPECT_NEAR(average_error(Threshold::at(1), p), average_penalty(Threshold::at(1), p, error_f()), 1e-15);
}

namespace {

// Residual of the policy-evaluation equations V(S) + theta = f(S) + lambda psi + E V(next).
double evaluation_residual(Threshold n, double lambda, const SourceChannelParams& p, const PenaltySpec& f,
                           State upto) {
    const double theta = n.is_never() ? average_penalty(n, p, f)
                                      : theta_n(std::max<State>(n.value(), 1), lambda, p, f);
    double worst = 0.0;
    for (State s = 0; s <= upto; ++s) {
        const Action u = s >= 1 && n.transmits(s) ? Action::Transmit : Action::Idle;
        double rhs = f(s) - theta + (u == Action::Transmit ? lambda : 0.0);
        for (const auto& tr : transition_distribution(s, u, p)) {
            const State nx = f.s_thresh() ? std::min(tr.next, *f.s_thresh()) : tr.next;
            rhs += tr.probability * value_function(nx, n, lambda, p, f);
        }
        worst = std::max(worst, std::abs(value_function(s, n, lambda, p, f) - rhs));
    }
    return worst;
}

} // namespace

TEST(ValueFunction, NormalisationAndFirstState) {
    const auto p = table_source();
    EXPECT_EQ(value_function(0, Threshold::at(4), 2.0, p, linear_f()), 0.0);
    for (State n : {2, 3, 8}) {
        const double th = theta_n(n, 2.0, p, linear_f());
        EXPECT_NEAR(value_function(1, Threshold::at(n), 2.0, p, linear_f()), th / 0.8, 1e-12);
    }
}

TEST(ValueFunction, SolvesEvaluationEquations) {
    for (double be : {0.7, 0.9, 1.0}) {
        const auto p = validate({0.3, be, 0.8, 1.0});
        for (State n : {1, 2, 5, 9})
            for (double lam : {0.0, 2.0})
                EXPECT_LT(evaluation_residual(Threshold::at(n), lam, p, linear_f(), 40), 1e-9)
                    << "beta " << be << " n " << n;
    }
    const auto p = table_source();
    const auto w = weibull_f({});
    for (auto n : {Threshold::at(1), Threshold::at(4), Threshold::at(7), w.never()})
        EXPECT_LT(evaluation_residual(n, 1.0, p, w, 12), 1e-12);
}

TEST(ValueFunction, BranchesMeetAtThreshold) {
    const auto p = table_source();
    for (State n : {2, 5, 11}) {
        const auto thr = Threshold::at(n);
        const double lam = 3.0;
        const double theta = theta_n(n, lam, p, linear_f());
        const double forward = (lam - theta) / (1.0 - p.a()) + tail_sum(linear_f(), p.a(), n);
        EXPECT_NEAR(value_function(n, thr, lam, p, linear_f()), forward, 1e-12);
        // one backward step from n reproduces V(n-1)
        const double back = double(n - 1) - theta + p.beta() * forward;
        EXPECT_NEAR(value_function(n - 1, thr, lam, p, linear_f()), back, 1e-9);
    }
}

TEST(ValueFunction, MonotoneInStateAtOptimalThreshold) {
    const auto p = table_source();
    for (double lam : {0.5, 1.0, 2.0, 10.0, 40.0}) {
        const auto n = find_threshold(lam, p, linear_f());
        const auto thr = Threshold::at(std::max<State>(n.value(), 1));
        double prev = 0.0;
        for (State s = 1; s <= 200; ++s) {
            const double v = value_function(s, thr, lam, p, linear_f());
            EXPECT_GE(v, prev - 1e-12) << lam << " " << s;
            prev = v;
        }
    }
}

TEST(ValueFunction, CanDipBelowAPoorThreshold) {
    // a threshold far above the optimum: being one step from the threshold is cheaper
    const auto p = table_source();
    const auto thr = Threshold::at(12);
    EXPECT_LT(value_function(12, thr, 1.0, p, linear_f()), value_function(11, thr, 1.0, p, linear_f()));
}

TEST(ValueFunction, NeverTransmitNeedsBetaBelowOne) {
    const auto p = validate({0.2, 1.0, 1.0, 1.0});
    EXPECT_THROW(value_function(3, fire_f({}).never(), 1.0, p, fire_f({})), NumericalError);
}

TEST(BetaLimit, ClosedFormsAreContinuous) {
    const auto one = validate({0.2, 1.0, 0.8, 1.0});
    const auto near = validate({0.2, 1.0 - 1e-9, 0.8, 1.0});
    auto rel = [](double x, double y) { return std::abs(x - y) / std::abs(x); };
    for (State n : {1, 3, 10, 24}) {
        EXPECT_LT(rel(theta_n(n, 1.5, one, fire_f({})), theta_n(n, 1.5, near, fire_f({}))), 1e-6);
        EXPECT_LT(rel(theta_n(n, 1.5, one, linear_f()), theta_n(n, 1.5, near, linear_f())), 1e-6);
        EXPECT_LT(rel(h_margin(n, 1.5, one, linear_f()), h_margin(n, 1.5, near, linear_f())), 1e-6);
        EXPECT_LT(rel(update_rate(Threshold::at(n), one), update_rate(Threshold::at(n), near)), 1e-6);
        EXPECT_LT(rel(sync_probability(Threshold::at(n), one), sync_probability(Threshold::at(n), near)), 1e-6);
    }
    // fire source: beta = 1 and a = 0 together
    const auto fire_src = validate({0.2, 1.0, 1.0, 1.0});
    EXPECT_TRUE(std::isfinite(theta_n(24, 3.0, fire_src, fire_f({}))));
    EXPECT_TRUE(std::isfinite(h_margin(24, 3.0, fire_src, fire_f({}))));
}
