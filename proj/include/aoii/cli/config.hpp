#pragma once

#include "aoii/applications.hpp"
#include "aoii/errors.hpp"
#include "aoii/model.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace aoii::cli {

enum class Mode { Analytic, Simulate, Both };

inline std::string to_string(Mode m) {
    switch (m) {
    case Mode::Analytic: return "analytic";
    case Mode::Simulate: return "simulate";
    case Mode::Both: return "both";
    }
    return "analytic";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "analytic")
        return Mode::Analytic;
    if (s == "simulate")
        return Mode::Simulate;
    if (s == "both")
        return Mode::Both;
    throw ParamError("mode must be analytic, simulate or both, got '" + s + "'");
}

/// Shortest round-trip-safe rendering for the resolved-config echo.
inline std::string format_exact(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Six significant digits, the CSV number format.
inline std::string format_g(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

/// Everything a run needs. Defaults reproduce the linear-penalty setting of the comparison table.
struct ExperimentConfig {
    double alpha = 0.2;
    double beta = 0.9;
    double p_s = 0.8;
    std::vector<double> deltas{0.4};

    std::string penalty = "linear";
    VideoParams video{};
    WeibullParams weibull{};
    double weibull_eps = 1e-3;
    FireParams fire{};
    double zeta = 3.0;

    std::uint64_t slots = 1'000'000;
    std::uint64_t seed = 1;
    Mode mode = Mode::Analytic;
    unsigned jobs = 1;
    std::vector<std::string> policies{"aoii"};

    double lambda_tol = 1e-6;
    double eps_tail = 1e-15;
    double rvia_tol = 1e-9;

    // oracle grid for `verify`
    std::vector<double> grid_alpha{0.1, 0.3, 0.5};
    std::vector<double> grid_beta{0.7, 0.9};
    std::vector<double> grid_p_s{0.6, 0.9};
    std::vector<double> grid_lambda{0.0, 0.5, 2.0, 10.0};
    std::vector<std::string> grid_penalty{"linear", "weibull", "error"};

    RawParams raw(double delta) const { return {alpha, beta, p_s, delta}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParamError("config key '" + key + "': not a number: '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-')
            throw std::invalid_argument(v);
        // allow 1e6 style
        if (v.find_first_of("eE.") != std::string::npos) {
            const double x = std::stod(v, &used);
            if (used != v.size() || x < 0 || x != static_cast<double>(static_cast<std::uint64_t>(x)))
                throw std::invalid_argument(v);
            return static_cast<std::uint64_t>(x);
        }
        const auto x = std::stoull(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParamError("config key '" + key + "': not a non-negative integer: '" + v + "'");
    }
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v))
        out.push_back(parse_double(key, item));
    return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i)
            out += ",";
        if constexpr (std::is_same_v<T, std::string>)
            out += xs[i];
        else
            out += format_exact(xs[i]);
    }
    return out;
}

} // namespace detail

/// Apply one key=value pair. Unknown keys are an error.
inline void apply(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    auto d = [&] { return parse_double(key, value); };
    auto u = [&] { return parse_u64(key, value); };

    if (key == "alpha") c.alpha = d();
    else if (key == "beta") c.beta = d();
    else if (key == "p_s") c.p_s = d();
    else if (key == "delta") c.deltas = {d()};
    else if (key == "delta_grid") c.deltas = parse_doubles(key, value);
    else if (key == "penalty") c.penalty = value;
    else if (key == "video.gamma") c.video.gamma = d();
    else if (key == "video.alpha0") c.video.alpha0 = d();
    else if (key == "video.rho") c.video.rho = d();
    else if (key == "video.c") c.video.c = d();
    else if (key == "weibull.gamma") c.weibull.gamma = d();
    else if (key == "weibull.rho") c.weibull.rho = d();
    else if (key == "weibull.eps") c.weibull_eps = d();
    else if (key == "fire.f_max") c.fire.f_max = d();
    else if (key == "fire.f_init") c.fire.f_init = d();
    else if (key == "fire.growth") c.fire.growth = d();
    else if (key == "time_threshold.zeta") c.zeta = d();
    else if (key == "T" || key == "slots") c.slots = u();
    else if (key == "seed") c.seed = u();
    else if (key == "mode") c.mode = parse_mode(value);
    else if (key == "jobs") c.jobs = static_cast<unsigned>(u());
    else if (key == "policies") c.policies = split_list(value);
    else if (key == "lambda_tol") c.lambda_tol = d();
    else if (key == "eps_tail") c.eps_tail = d();
    else if (key == "rvia_tol") c.rvia_tol = d();
    else if (key == "grid.alpha") c.grid_alpha = parse_doubles(key, value);
    else if (key == "grid.beta") c.grid_beta = parse_doubles(key, value);
    else if (key == "grid.p_s") c.grid_p_s = parse_doubles(key, value);
    else if (key == "grid.lambda") c.grid_lambda = parse_doubles(key, value);
    else if (key == "grid.penalty") c.grid_penalty = split_list(value);
    else throw ParamError("unknown config key '" + key + "'");
}

/// Parse key=value lines; '#' starts a comment, blank lines are skipped.
inline void apply_text(ExperimentConfig& c, std::istream& in, const std::string& origin = "config") {
    std::string line;
    for (unsigned lineno = 1; std::getline(in, line); ++lineno) {
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParamError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        apply(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

inline void apply_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParamError("cannot open config file '" + path + "'");
    apply_text(c, in, path);
}

inline PenaltySpec make_penalty(const std::string& name, const ExperimentConfig& c) {
    if (name == "linear") return linear_f();
    if (name == "error") return error_f();
    if (name == "video") return video_f(c.video);
    if (name == "weibull") return weibull_f(c.weibull, c.weibull_eps);
    if (name == "fire") return fire_f(c.fire);
    if (name == "time_threshold") return time_threshold_f(c.zeta);
    throw ParamError("unknown penalty '" + name + "' (linear, error, video, weibull, fire, time_threshold)");
}

/// Range and consistency checks that do not depend on the command.
inline void check(const ExperimentConfig& c) {
    if (c.deltas.empty())
        throw ParamError("delta grid is empty");
    for (double d : c.deltas)
        validate(c.raw(d));
    make_penalty(c.penalty, c);
    if (c.slots < 10'000)
        throw ParamError("T must be at least 10000 slots");
    if (c.jobs == 0)
        throw ParamError("jobs must be >= 1");
    if (!(c.lambda_tol > 0.0) || !(c.eps_tail > 0.0) || !(c.rvia_tol > 0.0))
        throw ParamError("tolerances must be positive");
    for (const auto& pol : c.policies) {
        if (pol != "aoii" && pol != "error" && pol != "aoi")
            throw ParamError("unknown policy '" + pol + "' (aoii, error, aoi)");
    }
}

/// Fully resolved configuration, one key per line, in a fixed order.
inline std::string resolved(const ExperimentConfig& c, const std::string& command) {
    using detail::join;
    std::ostringstream o;
    o << "# command = " << command << "\n";
    o << "alpha = " << format_exact(c.alpha) << "\n";
    o << "beta = " << format_exact(c.beta) << "\n";
    o << "p_s = " << format_exact(c.p_s) << "\n";
    o << "delta_grid = " << join(c.deltas) << "\n";
    o << "penalty = " << c.penalty << "\n";
    o << "video.gamma = " << format_exact(c.video.gamma) << "\n";
    o << "video.alpha0 = " << format_exact(c.video.alpha0) << "\n";
    o << "video.rho = " << format_exact(c.video.rho) << "\n";
    o << "video.c = " << format_exact(c.video.c) << "\n";
    o << "weibull.gamma = " << format_exact(c.weibull.gamma) << "\n";
    o << "weibull.rho = " << format_exact(c.weibull.rho) << "\n";
    o << "weibull.eps = " << format_exact(c.weibull_eps) << "\n";
    o << "fire.f_max = " << format_exact(c.fire.f_max) << "\n";
    o << "fire.f_init = " << format_exact(c.fire.f_init) << "\n";
    o << "fire.growth = " << format_exact(c.fire.growth) << "\n";
    o << "time_threshold.zeta = " << format_exact(c.zeta) << "\n";
    o << "T = " << c.slots << "\n";
    o << "seed = " << c.seed << "\n";
    o << "mode = " << to_string(c.mode) << "\n";
    o << "jobs = " << c.jobs << "\n";
    o << "policies = " << join(c.policies) << "\n";
    o << "lambda_tol = " << format_exact(c.lambda_tol) << "\n";
    o << "eps_tail = " << format_exact(c.eps_tail) << "\n";
    o << "rvia_tol = " << format_exact(c.rvia_tol) << "\n";
    o << "grid.alpha = " << join(c.grid_alpha) << "\n";
    o << "grid.beta = " << join(c.grid_beta) << "\n";
    o << "grid.p_s = " << join(c.grid_p_s) << "\n";
    o << "grid.lambda = " << join(c.grid_lambda) << "\n";
    o << "grid.penalty = " << join(c.grid_penalty) << "\n";
    return o.str();
}

} // namespace aoii::cli
