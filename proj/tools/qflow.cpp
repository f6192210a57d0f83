#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qflow/config.hpp"
#include "qflow/errors.hpp"
#include "qflow/record.hpp"
#include "qflow/suite.hpp"

using namespace qflow;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<std::size_t> paths;
    std::vector<std::string> formats;
    int workers = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "run-config JSON file (defaults apply when omitted)");
    app->add_option("-o,--out", c.out, std::string("output directory (default: config, then $") + kOutputDirEnv + ")");
    app->add_option("--seed", c.seed, "override experiment.seed");
    app->add_option("--reps", c.reps, "override experiment.reps");
    app->add_option("--paths", c.paths, "override experiment.paths");
    app->add_option("--format", c.formats, "report formats: json, csv, md")->check(CLI::IsMember({"json", "csv", "md"}));
    app->add_option("--workers", c.workers, "override experiment.workers")->check(CLI::PositiveNumber);
}

ValidatedConfig load(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed) cfg.experiment.seed = *c.seed;
    if (c.reps) cfg.experiment.reps = *c.reps;
    if (c.paths) cfg.experiment.paths = *c.paths;
    if (!c.formats.empty()) cfg.output.formats = c.formats;
    if (c.workers > 0) cfg.experiment.workers = c.workers;
    return validate_config(cfg);
}

void print_result(const ExperimentResult& e) {
    std::printf("[%s]%s %s: %s (%.1f s)\n", e.status == Status::pass ? "PASS" : e.status == Status::fail ? "FAIL" : "ERROR",
                e.soft ? " [soft]" : "", (e.title == e.name ? e.name : e.name + " " + e.title).c_str(),
                e.diagnostic.c_str(), e.wall_seconds);
    for (const auto& q : e.values) {
        if (q.se)
            std::printf("    %-34s %.10g +- %.3g\n", q.name.c_str(), q.value, *q.se);
        else
            std::printf("    %-34s %.10g (exact)\n", q.name.c_str(), q.value);
    }
}

int finish(const RunRecord& rec, const ValidatedConfig& vc, const std::filesystem::path& dir) {
    for (const auto& e : rec.experiments) print_result(e);
    for (const auto& f : vc.cfg.output.formats) std::printf("report: %s\n", emit_report(rec, f, dir).c_str());
    std::printf("config %s, outputs %s, %s\n", rec.config_hash.c_str(), rec.outputs_hash().c_str(),
                rec.passed() ? "PASS" : "FAIL");
    for (const auto& e : rec.experiments)
        if (e.config_error) return 2;
    return rec.passed() ? 0 : 1;
}

int run_one(const Common& c, const std::string& experiment) {
    const ValidatedConfig vc = load(c);
    const auto dir = output_dir(vc.cfg, c.out);
    RunRecord rec = new_record(vc, experiment);
    rec.experiments.push_back(run_experiment(experiment, vc, dir));
    rec.wall_seconds = rec.experiments.back().wall_seconds;
    return finish(rec, vc, dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qflow: stochastic Q-curvature flow laboratory"};
    app.require_subcommand(1);

    Common common;
    std::function<int()> action;

    auto* validate = app.add_subcommand("validate", "check a run config and print derived constants");
    add_common(validate, common);
    validate->callback([&] {
        action = [&] {
            const ValidatedConfig vc = load(common);
            Json j = {{"config", to_json(vc.cfg)}, {"derived", to_json(vc.derived)}, {"config_hash", config_hash(vc.cfg)}};
            std::cout << j.dump(2) << "\n";
            return 0;
        };
    });

    struct Leaf {
        const char* group;
        const char* name;
        const char* experiment;
        const char* help;
    };
    const Leaf leaves[] = {
        {"flow", "det", "flow_det", "deterministic NQF/LQF flow"},
        {"flow", "sto", "flow_sto", "stochastic flow paths"},
        {"gmc", "build", "gmc_build", "sample a field and its GMC measure"},
        {"gmc", "moments", "gmc_moments", "GMC moment scan over truncations"},
        {"gmc", "invert", "gmc_invert", "recover fields from GMC measures"},
        {"measure", "sample", "measure_sample", "MCMC on the symmetrizing measure"},
        {"check", "ibp", "ibp", "integration-by-parts identities"},
        {"check", "generator", "generator", "generator symmetry and form identity"},
        {"check", "stationary", "stationary", "LQF stationarity"},
        {"vol", "besq", "vol_besq", "exact BESQ0 volume law"},
        {"vol", "cir", "vol_cir", "exact CIR volume law"},
        {"vol", "compare", "vol_compare", "grid volume against the exact law"},
    };
    std::map<std::string, CLI::App*> groups;
    for (const auto& l : leaves) {
        if (!groups.count(l.group)) {
            groups[l.group] = app.add_subcommand(l.group);
            groups[l.group]->require_subcommand(1);
        }
        auto* sub = groups[l.group]->add_subcommand(l.name, l.help);
        add_common(sub, common);
        const std::string exp = l.experiment;
        sub->callback([&, exp] { action = [&, exp] { return run_one(common, exp); }; });
    }

    auto* run = app.add_subcommand("run", "run the config's experiment.checks list");
    add_common(run, common);
    run->callback([&] {
        action = [&] {
            const ValidatedConfig vc = load(common);
            const auto dir = output_dir(vc.cfg, common.out);
            return finish(run_experiments(vc, dir), vc, dir);
        };
    });

    auto* suite = app.add_subcommand("suite", "test suites");
    suite->require_subcommand(1);
    auto* suite_run = suite->add_subcommand("run", "run the unit, acceptance or full suite");
    add_common(suite_run, common);
    std::string which = "acceptance";
    suite_run->add_option("--suite", which, "unit, acceptance or full")->check(CLI::IsMember({"unit", "acceptance", "full"}));
    suite_run->callback([&] {
        action = [&] {
            const ValidatedConfig vc = load(common);
            const auto dir = output_dir(vc.cfg, common.out);
            return finish(run_suite(vc, parse_suite(which), dir), vc, dir);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return action ? action() : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
