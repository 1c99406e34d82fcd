#include <blembed/experiment.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<int> steps;
    std::optional<std::string> out;
    std::string matrix;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "experiment config (JSON)");
    sub->add_option("--seed", f.seed, "override the seed");
    sub->add_option("--paths", f.paths, "override the number of paths");
    sub->add_option("--steps", f.steps, "override the number of time steps");
    sub->add_option("--out", f.out, "override the output directory");
    sub->add_option("--matrix", f.matrix, "use a built-in potential x psi matrix")->check(CLI::IsMember({"default"}));
}

std::size_t count_checks(const blembed::PotentialResult& p, bool failed) {
    std::size_t n = 0;
    for (const auto& c : p.checks) n += failed ? !c.pass : 1;
    for (const auto& r : p.reports)
        for (const auto& c : r.checks) n += failed ? !c.pass : 1;
    return n;
}

} // namespace

int main(int argc, char** argv) {
    using namespace blembed;
    CLI::App app{"Bass-embedding and Gaussian moment-comparison checks"};
    app.require_subcommand(1);
    Flags flags;
    const std::pair<Command, const char*> commands[] = {
        {Command::run, "build, simulate and verify everything"},
        {Command::embed, "simulate the embedding and write the ensemble"},
        {Command::verify, "quadrature-only inequality checks, no simulation"},
        {Command::sandwich, "local-time sandwich curves for convex potentials"},
        {Command::appendix, "slope-map upper and lower bounds"},
    };
    std::vector<std::pair<Command, CLI::App*>> subs;
    for (const auto& [cmd, help] : commands) {
        auto* sub = app.add_subcommand(command_name(cmd), help);
        add_flags(sub, flags);
        subs.emplace_back(cmd, sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    Command command = Command::run;
    for (const auto& [cmd, sub] : subs)
        if (sub->parsed()) command = cmd;

    try {
        ExperimentConfig config;
        if (!flags.config.empty()) config = load_config(flags.config);
        else if (flags.matrix.empty()) throw config_error("give --config PATH or --matrix default");
        if (!flags.matrix.empty()) apply_default_matrix(config);
        if (flags.seed) config.seed = *flags.seed;
        if (flags.paths) config.n_paths = *flags.paths;
        if (flags.steps) config.n_steps = *flags.steps;
        if (flags.out) config.output_dir = *flags.out;
        if (command == Command::verify || command == Command::appendix) config.n_paths = 0;

        const auto result = run_experiment(config, command);
        write_outputs(result, config.output_dir);
        for (const auto& p : result.potentials) {
            std::cout << p.label << ": ";
            if (!p.skipped.empty()) std::cout << "skipped (" << p.skipped << ")\n";
            else if (p.pass()) std::cout << "pass (" << count_checks(p, false) << " checks)\n";
            else std::cout << "FAIL (" << count_checks(p, true) << " of " << count_checks(p, false) << " checks)\n";
        }
        std::cout << (result.pass() ? "all checks passed" : "some checks failed") << "; outputs in "
                  << config.output_dir << '\n';
        return result.pass() ? 0 : 1;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
