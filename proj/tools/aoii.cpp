// aoii: batch driver for the optimal-transmission library.
//
//   aoii optimize  [--config F] [--set k=v]... [--out F]
//   aoii simulate  [--config F] [--seed N] [--slots N] [--jobs N]
//   aoii sweep     [--config F] [--mode analytic|simulate|both]
//   aoii reproduce table2|fig6a|fig6b|fig6c
//   aoii verify    [--mutate theta|rate|threshold]
//
// Exit codes: 0 ok, 1 validation error, 2 numerical failure, 3 verification failure.

#include "aoii/cli/commands.hpp"
#include "aoii/cli/config.hpp"
#include "aoii/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace aoii;
using namespace aoii::cli;

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> slots;
    std::optional<std::string> mode;
    std::optional<unsigned> jobs;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key=value configuration file");
    cmd->add_option("--set", f.sets, "override one config key (key=value), repeatable");
    cmd->add_option("--out", f.out, "CSV output path (default stdout)");
    cmd->add_option("--seed", f.seed, "simulation seed");
    cmd->add_option("--slots", f.slots, "simulation horizon T");
    cmd->add_option("--mode", f.mode, "analytic, simulate or both");
    cmd->add_option("--jobs", f.jobs, "worker threads");
}

ExperimentConfig resolve(ExperimentConfig c, const Flags& f) {
    if (!f.config.empty())
        apply_file(c, f.config);
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ParamError("--set expects key=value, got '" + kv + "'");
        apply(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.seed)
        c.seed = *f.seed;
    if (f.slots)
        c.slots = *f.slots;
    if (f.mode)
        c.mode = parse_mode(*f.mode);
    if (f.jobs)
        c.jobs = *f.jobs;
    return c;
}

void emit(const Csv& csv, const ExperimentConfig& c, const std::string& command, const std::string& out) {
    const std::string sidecar = out.empty() ? "aoii-" + command + ".config" : out + ".config";
    {
        std::ofstream side(sidecar, std::ios::binary);
        if (!side)
            throw ParamError("cannot write '" + sidecar + "'");
        side << resolved(c, command);
    }
    if (out.empty()) {
        csv.write(std::cout);
        return;
    }
    std::ofstream file(out, std::ios::binary);
    if (!file)
        throw ParamError("cannot write '" + out + "'");
    csv.write(file);
}

int fail(const char* kind, const std::exception& e, int code) {
    nlohmann::json j{{"error", kind}, {"message", e.what()}};
    std::cerr << j.dump() << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal rate-constrained transmission policies for the age of incorrect information"};
    app.require_subcommand(1);

    Flags flags;
    auto* optimize = app.add_subcommand("optimize", "solve the constrained problem for each budget");
    auto* simulate_cmd = app.add_subcommand("simulate", "Monte-Carlo evaluation of the selected policies");
    auto* sweep = app.add_subcommand("sweep", "budget sweep, analytic and/or simulated");
    auto* reproduce = app.add_subcommand("reproduce", "built-in comparison table and figure settings");
    auto* verify = app.add_subcommand("verify", "cross-check closed forms against independent oracles");
    for (auto* cmd : {optimize, simulate_cmd, sweep, reproduce, verify})
        add_common(cmd, flags);

    std::string target;
    reproduce->add_option("target", target, "table2, fig6a, fig6b or fig6c")->required();
    std::string mutation;
    verify->add_option("--mutate", mutation, "corrupt one closed form (theta, rate, threshold)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (optimize->parsed()) {
            const auto c = resolve({}, flags);
            emit(cmd_optimize(c), c, "optimize", flags.out);
        } else if (simulate_cmd->parsed()) {
            auto c = resolve({}, flags);
            if (c.mode == Mode::Analytic)
                c.mode = Mode::Simulate;
            emit(cmd_simulate(c), c, "simulate", flags.out);
        } else if (sweep->parsed()) {
            ExperimentConfig base;
            base.policies = {"aoii", "error"};
            const auto c = resolve(base, flags);
            emit(cmd_sweep(c), c, "sweep", flags.out);
        } else if (reproduce->parsed()) {
            const auto c = resolve(fixture(parse_target(target)), flags);
            emit(cmd_reproduce(c), c, "reproduce-" + target, flags.out);
        } else if (verify->parsed()) {
            const auto c = resolve({}, flags);
            const auto checks = verify_checks(c, parse_mutation(mutation));
            emit(checks_to_csv(checks), c, "verify", flags.out);
            for (const auto& k : checks) {
                if (!k.pass()) {
                    std::cerr << "verification failed: " << k.name << " worst=" << format_g(k.worst)
                              << " limit=" << format_g(k.limit) << '\n';
                    return 3;
                }
            }
        }
    } catch (const ValidationError& e) {
        return fail("validation", e, 1);
    } catch (const NumericalError& e) {
        return fail("numerical", e, 2);
    } catch (const std::exception& e) {
        return fail("runtime", e, 1);
    }
    return 0;
}
