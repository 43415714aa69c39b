#pragma once

#include "aoii/applications.hpp"
#include "aoii/cli/config.hpp"
#include "aoii/closed_form.hpp"
#include "aoii/errors.hpp"
#include "aoii/model.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/oracles.hpp"
#include "aoii/rvia.hpp"
#include "aoii/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace aoii::cli {

/// fn(0..n-1) on up to `jobs` threads; results come back in index order.
template <class F>
auto parallel_map(std::size_t n, unsigned jobs, F fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    // first failure by index, so the reported error does not depend on scheduling
    for (auto& e : errors) {
        if (e)
            std::rethrow_exception(e);
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots)
        out.push_back(std::move(*s));
    return out;
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(std::ostream& out) const {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i)
                out << (i ? "," : "") << cells[i];
            out << '\n';
        };
        line(header);
        for (const auto& r : rows)
            line(r);
    }
};

inline SolveOptions solve_options(const ExperimentConfig& c) {
    SolveOptions o;
    o.lambda_tol = c.lambda_tol;
    o.tail.eps_tail = c.eps_tail;
    return o;
}

inline std::string threshold_label(Threshold n) {
    return n.is_never() ? "never" : std::to_string(n.value());
}

inline bool simulating(const ExperimentConfig& c) { return c.mode != Mode::Analytic; }

// ---------------------------------------------------------------------------
// optimize

inline Csv cmd_optimize(const ExperimentConfig& c) {
    check(c);
    const auto f = make_penalty(c.penalty, c);
    const auto opts = solve_options(c);
    Csv csv{{"alpha", "beta", "p_s", "delta", "penalty", "lambda_star", "n_low", "n_high", "mu", "q_boundary",
             "avg_aoii", "avg_error", "rate"},
            {}};
    const auto sols = parallel_map(c.deltas.size(), c.jobs, [&](std::size_t i) {
        return solve(validate(c.raw(c.deltas[i])), f, opts);
    });
    for (std::size_t i = 0; i < sols.size(); ++i) {
        const auto& s = sols[i];
        csv.rows.push_back({format_g(c.alpha), format_g(c.beta), format_g(c.p_s), format_g(c.deltas[i]), c.penalty,
                            format_g(s.lambda_star), threshold_label(s.policy.n_low),
                            threshold_label(s.policy.n_high), format_g(s.policy.mu), format_g(s.policy.q_boundary),
                            format_g(s.avg_aoii), format_g(s.avg_error), format_g(s.achieved_rate)});
    }
    return csv;
}

// ---------------------------------------------------------------------------
// per-(delta, policy) evaluation shared by simulate, sweep and reproduce

struct CellResult {
    double delta = 0.0;
    std::string policy;
    double lambda_star = 0.0;
    std::string threshold;
    std::optional<double> penalty;  // analytic average of the configured penalty
    std::optional<double> error;    // analytic out-of-sync probability
    double rate = 0.0;              // analytic transmission rate
    std::optional<SimStats> sim;
};

inline CellResult evaluate_cell(const ExperimentConfig& c, const PenaltySpec& f, std::size_t delta_index,
                                const std::string& policy) {
    const double delta = c.deltas[delta_index];
    const auto p = validate(c.raw(delta));
    const auto opts = solve_options(c);
    CellResult r;
    r.delta = delta;
    r.policy = policy;
    Policy executable = Policy::always();

    if (policy == "aoii") {
        const auto s = solve(p, f, opts);
        r.lambda_star = s.lambda_star;
        r.threshold = threshold_label(s.policy.reported_threshold());
        r.penalty = s.avg_aoii;
        r.error = s.avg_error;
        r.rate = s.achieved_rate;
        executable = Policy::mixture(s.policy, f.s_thresh());
    } else if (policy == "error") {
        const auto e = error_optimal(p, opts);
        r.lambda_star = e.lambda_star;
        r.threshold = threshold_label(e.policy.reported_threshold());
        r.penalty = persistent_randomized_penalty(error_policy_probability(e), p, f, opts.tail);
        r.error = e.avg_error;
        r.rate = e.achieved_rate;
        executable = Policy::mixture(e.policy, State{1});
    } else if (policy == "aoi") {
        AoiOptions ao;
        ao.rvia.tol = c.rvia_tol;
        const auto b = aoi_baseline(p, ao);
        r.lambda_star = b.lambda_star;
        r.threshold = std::to_string(b.m_high);
        r.rate = b.rate;
        executable = b.policy;
    } else {
        throw ParamError("unknown policy '" + policy + "'");
    }

    if (simulating(c)) {
        // same stream for every policy at a given delta: common random numbers
        SimOptions so;
        so.stream = delta_index;
        r.sim = simulate(executable, p, f, c.slots, c.seed, so);
    }
    return r;
}

inline std::vector<CellResult> evaluate_grid(const ExperimentConfig& c) {
    check(c);
    const auto f = make_penalty(c.penalty, c);
    const std::size_t np = c.policies.size();
    return parallel_map(c.deltas.size() * np, c.jobs,
                        [&](std::size_t k) { return evaluate_cell(c, f, k / np, c.policies[k % np]); });
}

/// "separated", "overlap" or "violated" for policy vs. the AoII-optimal row at the same delta.
inline std::string ordering_flag(const SimStats& aoii, const SimStats& other) {
    const double diff = other.avg_penalty - aoii.avg_penalty;
    const double slack = aoii.hw_penalty + other.hw_penalty;
    if (diff > slack)
        return "separated";
    if (diff >= -slack)
        return "overlap";
    return "violated";
}

inline Csv cells_to_csv(const ExperimentConfig& c, const std::vector<CellResult>& cells) {
    auto opt = [](const std::optional<double>& x) { return x ? format_g(*x) : std::string{}; };
    Csv csv;
    csv.header = {"delta", "policy", "lambda_star", "threshold", "avg_penalty", "avg_error", "rate"};
    if (simulating(c)) {
        for (const char* h : {"sim_penalty", "sim_hw_penalty", "sim_error", "sim_hw_error", "sim_rate",
                              "sim_hw_rate", "vs_aoii"})
            csv.header.emplace_back(h);
    }
    for (const auto& r : cells) {
        std::vector<std::string> row{format_g(r.delta), r.policy, format_g(r.lambda_star), r.threshold,
                                     opt(r.penalty), opt(r.error), format_g(r.rate)};
        if (r.sim) {
            const auto& s = *r.sim;
            std::string flag = "-";
            if (r.policy != "aoii") {
                for (const auto& o : cells) {
                    if (o.policy == "aoii" && o.delta == r.delta && o.sim)
                        flag = ordering_flag(*o.sim, s);
                }
            }
            for (double x : {s.avg_penalty, s.hw_penalty, s.avg_error, s.hw_error, s.rate, s.hw_rate})
                row.push_back(format_g(x));
            row.push_back(flag);
        }
        csv.rows.push_back(std::move(row));
    }
    return csv;
}

/// Monte-Carlo evaluation of the selected policies; analytic columns are kept alongside.
inline Csv cmd_simulate(ExperimentConfig c) {
    if (c.mode == Mode::Analytic)
        c.mode = Mode::Simulate;
    return cells_to_csv(c, evaluate_grid(c));
}

inline Csv cmd_sweep(const ExperimentConfig& c) { return cells_to_csv(c, evaluate_grid(c)); }

// ---------------------------------------------------------------------------
// reproduce

enum class Target { Table2, Fig6a, Fig6b, Fig6c };

inline Target parse_target(const std::string& s) {
    if (s == "table2") return Target::Table2;
    if (s == "fig6a") return Target::Fig6a;
    if (s == "fig6b") return Target::Fig6b;
    if (s == "fig6c") return Target::Fig6c;
    throw ParamError("unknown reproduction target '" + s + "' (table2, fig6a, fig6b, fig6c)");
}

/// Nine evenly spaced budgets from 0.05 to 0.9.
inline std::vector<double> fig6_grid() {
    std::vector<double> g;
    for (int i = 0; i < 9; ++i)
        g.push_back(0.05 + (0.9 - 0.05) * i / 8.0);
    return g;
}

/// Built-in parameter set of a reproduction target; a config file may still override it.
inline ExperimentConfig fixture(Target t) {
    ExperimentConfig c;
    switch (t) {
    case Target::Table2:
        c.alpha = 0.2, c.beta = 0.9, c.p_s = 0.8;
        c.penalty = "linear";
        c.deltas = {0.05, 0.1, 0.4};
        c.policies = {"aoii", "error"};
        c.mode = Mode::Analytic;
        c.slots = 10'000'000;
        break;
    case Target::Fig6a:
        c.alpha = 0.5, c.beta = 0.8, c.p_s = 0.8;
        c.penalty = "video";
        c.policies = {"aoii", "error", "aoi"};
        break;
    case Target::Fig6b:
        c.alpha = 0.2, c.beta = 0.9, c.p_s = 0.8;
        c.penalty = "weibull";
        c.policies = {"aoii", "error", "aoi"};
        break;
    case Target::Fig6c:
        c.alpha = 0.2, c.beta = 1.0, c.p_s = 1.0;
        c.penalty = "fire";
        c.policies = {"aoii", "error"};
        break;
    }
    if (t != Target::Table2) {
        c.deltas = fig6_grid();
        c.mode = Mode::Both;
        c.slots = 1'000'000;
    }
    return c;
}

inline Csv cmd_reproduce(const ExperimentConfig& c) { return cells_to_csv(c, evaluate_grid(c)); }

// ---------------------------------------------------------------------------
// verify

/// Deliberate corruptions of the closed-form side, to show the checks can fail.
enum class Mutation { None, Theta, Rate, Threshold };

inline Mutation parse_mutation(const std::string& s) {
    if (s.empty() || s == "none") return Mutation::None;
    if (s == "theta") return Mutation::Theta;
    if (s == "rate") return Mutation::Rate;
    if (s == "threshold") return Mutation::Threshold;
    throw ParamError("unknown mutation '" + s + "' (none, theta, rate, threshold)");
}

struct Check {
    std::string name;
    std::size_t points = 0;
    double worst = 0.0;
    double limit = 0.0;
    bool pass() const { return worst <= limit; }
};

struct OraclePoint {
    double threshold_gap = 0.0;
    double theta_gap = 0.0;
    double value_gap = 0.0;
    bool monotone = true;
    bool structured = true;
};

inline OraclePoint oracle_point(const SourceChannelParams& p, const PenaltySpec& f, double lambda,
                                const ExperimentConfig& c, Mutation mut) {
    const auto opts = solve_options(c);
    auto n_cf = find_threshold(lambda, p, f, opts);
    if (mut == Mutation::Threshold)
        n_cf = n_cf.is_never() ? Threshold::at(0) : Threshold::at(n_cf.value() + 1);
    const State K = default_truncation(f, n_cf.is_never() ? 0 : n_cf.value());
    RviaOptions ro;
    ro.tol = c.rvia_tol;
    const auto r = rvia(lambda, p, f, K, ro);
    const auto n_rv = greedy_threshold(r, lambda, p);

    OraclePoint out;
    out.threshold_gap = n_rv == n_cf ? 0.0 : 1.0;
    // the oracle never transmits in sync, so threshold 0 is scored as threshold 1
    const Threshold eval = n_cf.is_never() ? n_cf : Threshold::at(std::max<State>(n_cf.value(), 1));
    double theta = eval.is_never() ? average_penalty(eval, p, f, opts.tail)
                                   : theta_n(eval.value(), lambda, p, f, opts.tail);
    if (mut == Mutation::Theta)
        theta *= 1.001;
    out.theta_gap = std::abs(theta - r.theta_est);
    const State lim = f.is_bounded() ? K : K / 2;
    for (State s = 0; s <= lim; ++s)
        out.value_gap = std::max(out.value_gap, std::abs(r.V[s] - value_function(s, eval, lambda, p, f, opts.tail)));
    out.monotone = check_monotone(r);
    out.structured = check_threshold_structure(r);
    return out;
}

inline std::vector<Check> verify_checks(const ExperimentConfig& c, Mutation mut = Mutation::None) {
    if (c.grid_alpha.empty() || c.grid_beta.empty() || c.grid_p_s.empty() || c.grid_lambda.empty() ||
        c.grid_penalty.empty())
        throw ParamError("verification grid is empty");
    if (c.jobs == 0)
        throw ParamError("jobs must be >= 1");

    struct GridPoint {
        RawParams raw;
        std::string penalty;
        double lambda;
    };
    std::vector<GridPoint> grid;
    for (double al : c.grid_alpha)
        for (double be : c.grid_beta)
            for (double ps : c.grid_p_s)
                for (double lam : c.grid_lambda)
                    for (const auto& pen : c.grid_penalty)
                        grid.push_back({{al, be, ps, 1.0}, pen, lam});
    for (const auto& g : grid) {
        validate(g.raw);
        make_penalty(g.penalty, c);
    }

    const auto points = parallel_map(grid.size(), c.jobs, [&](std::size_t i) {
        const auto& g = grid[i];
        return oracle_point(validate(g.raw), make_penalty(g.penalty, c), g.lambda, c, mut);
    });

    std::vector<Check> out;
    Check thr{"rvia_threshold_mismatches", points.size(), 0.0, 0.0};
    Check th{"rvia_theta_gap", points.size(), 0.0, 1e-4};
    Check val{"rvia_value_gap", points.size(), 0.0, 1e-3};
    Check mono{"rvia_monotone_violations", points.size(), 0.0, 0.0};
    Check st{"rvia_structure_violations", points.size(), 0.0, 0.0};
    for (const auto& pt : points) {
        thr.worst += pt.threshold_gap;
        th.worst = std::max(th.worst, pt.theta_gap);
        val.worst = std::max(val.worst, pt.value_gap);
        mono.worst += pt.monotone ? 0.0 : 1.0;
        st.worst += pt.structured ? 0.0 : 1.0;
    }
    out.insert(out.end(), {thr, th, val, mono, st});

    // stationary law against power iteration at the configured source
    const auto base = validate(c.raw(1.0));
    {
        Check chk{"stationary_vs_power_iteration", 0, 0.0, 1e-9};
        for (State n : {1, 2, 5, 12}) {
            const State K = 200;
            const auto cf = stationary_distribution(Threshold::at(n), base, K);
            const auto pi = oracle::stationary_power_iteration(Threshold::at(n), base, K);
            for (State k = 0; k <= K; ++k)
                chk.worst = std::max(chk.worst, std::abs(cf.sigma[k] - pi.sigma[k]));
            ++chk.points;
        }
        out.push_back(chk);
    }

    // truncated tail sum against plain summation for the cubic video penalty
    {
        Check chk{"tail_sum_vs_direct_rel", 0, 0.0, 1e-9};
        const auto f = video_f(c.video);
        TailOptions to;
        to.eps_tail = c.eps_tail;
        for (int i = 1; i <= 9; ++i) {
            const double a = 0.1 * i;
            const double fast = tail_sum(f, a, 0, to);
            const double slow = oracle::direct_tail_sum(f, a, 0, 10'000);
            chk.worst = std::max(chk.worst, std::abs(fast - slow) / std::abs(slow));
            ++chk.points;
        }
        out.push_back(chk);
    }

    // beta = 1 closed forms against beta = 1 - 1e-9
    {
        Check chk{"beta_one_limit_rel", 0, 0.0, 1e-6};
        const auto one = validate({0.2, 1.0, 0.8, 1.0});
        const auto near = validate({0.2, 1.0 - 1e-9, 0.8, 1.0});
        auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(x), 1e-300); };
        const auto fire = fire_f(c.fire);
        const auto lin = linear_f();
        for (State n : {1, 2, 5, 12, 24}) {
            for (double lam : {0.0, 2.0}) {
                chk.worst = std::max(chk.worst, rel(theta_n(n, lam, one, fire), theta_n(n, lam, near, fire)));
                chk.worst = std::max(chk.worst, rel(theta_n(n, lam, one, lin), theta_n(n, lam, near, lin)));
                chk.worst = std::max(chk.worst, rel(h_margin(n, lam, one, lin), h_margin(n, lam, near, lin)));
                chk.points += 3;
            }
            chk.worst = std::max(chk.worst, rel(update_rate(Threshold::at(n), one), update_rate(Threshold::at(n), near)));
            chk.worst = std::max(chk.worst, rel(average_penalty(Threshold::at(n), one, fire),
                                                average_penalty(Threshold::at(n), near, fire)));
            chk.points += 2;
        }
        const auto never = fire.never();
        chk.worst = std::max(chk.worst, rel(average_penalty(never, one, fire), average_penalty(never, near, fire)));
        ++chk.points;
        out.push_back(chk);
    }

    // update rate against a seeded simulation
    {
        Check chk{"rate_vs_simulation", 0, 0.0, 0.005};
        const auto f = linear_f();
        const auto gaps = parallel_map(16, c.jobs, [&](std::size_t n) {
            double analytic = update_rate(Threshold::at(n), base);
            if (mut == Mutation::Rate)
                analytic += 0.01;
            SimOptions so;
            so.stream = n;
            const auto s = simulate(Policy::threshold(Threshold::at(n)), base, f, 1'000'000, c.seed, so);
            return std::abs(analytic - s.rate);
        });
        for (double g : gaps)
            chk.worst = std::max(chk.worst, g);
        chk.points = gaps.size();
        out.push_back(chk);
    }

    // optimizer: rate bracket and achieved rate on the configured budgets
    {
        Check chk{"mixture_rate_gap", 0, 0.0, 1e-9};
        const auto f = make_penalty(c.penalty, c);
        for (double d : c.deltas) {
            const auto p = validate(c.raw(d));
            const auto s = solve(p, f, solve_options(c));
            const auto& m = s.policy;
            double gap = s.binding ? std::abs(s.achieved_rate - d) : std::max(0.0, s.achieved_rate - d);
            if (!(m.c_low >= d - 1e-12 || !s.binding) || !(m.c_high <= d + 1e-12 || !s.binding))
                gap = 1.0;
            chk.worst = std::max(chk.worst, gap);
            ++chk.points;
        }
        out.push_back(chk);
    }
    return out;
}

inline Csv checks_to_csv(const std::vector<Check>& checks) {
    Csv csv{{"check", "points", "worst", "limit", "status"}, {}};
    for (const auto& k : checks)
        csv.rows.push_back({k.name, std::to_string(k.points), format_g(k.worst), format_g(k.limit),
                            k.pass() ? "pass" : "FAIL"});
    return csv;
}

} // namespace aoii::cli
