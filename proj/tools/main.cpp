// tlflr: simulate data, fit slopes, and run the Monte Carlo / real-data
// benchmarks from the command line.

#include "tlflr/adaptive.hpp"
#include "tlflr/bench.hpp"
#include "tlflr/errors.hpp"
#include "tlflr/io.hpp"
#include "tlflr/modelsel.hpp"
#include "tlflr/regress.hpp"
#include "tlflr/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tlflr;

namespace {

enum Exit { ok = 0, config_error = 2, data_error = 3, internal_error = 4 };

struct Overrides {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps;
    std::optional<std::string> model;
    std::optional<double> h;
    std::optional<std::size_t> s;
    std::optional<std::size_t> K;
    std::optional<std::size_t> L;
    std::optional<std::size_t> n;
    std::optional<std::size_t> n_source;
    std::optional<std::string> score_dist;
    std::optional<std::size_t> grid;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;
    std::optional<std::size_t> folds;
    std::optional<std::string> aggregation;
    std::vector<std::string> methods;
    bool timing = false;

    // fit / adaptive / realdata inputs
    std::string target;
    std::vector<std::string> sources;
    std::vector<std::string> sectors;
    std::vector<std::string> target_sectors;
    std::string estimator = "tlflr";
    std::optional<std::size_t> m;
    std::optional<double> tau;
};

void add_common(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--config", o.config_file, "JSON file with RunConfig fields; flags override it")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--folds", o.folds, "cross-validation folds");
}

void add_synthetic(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--model", o.model, "I | II | III | IV");
    cmd->add_option("--h", o.h, "contrast level h");
    cmd->add_option("--s", o.s, "contrast sparsity s");
    cmd->add_option("--K", o.K, "number of informative sources");
    cmd->add_option("--L", o.L, "number of sources");
    cmd->add_option("--n", o.n, "target sample size");
    cmd->add_option("--n-source", o.n_source, "per-source sample size");
    cmd->add_option("--scores", o.score_dist, "uniform | gaussian | t5");
    cmd->add_option("--grid", o.grid, "grid size (default 100, 257 for Haar models)");
}

RunConfig resolve(const Overrides& o, const std::string& scenario)
{
    RunConfig config;
    if (!o.config_file.empty()) {
        std::ifstream in(o.config_file);
        std::stringstream text;
        text << in.rdbuf();
        config = run_config_from_json(text.str(), config);
    }
    config.scenario = scenario;
    if (o.seed)
        config.master_seed = *o.seed;
    if (o.reps)
        config.repetitions = *o.reps;
    if (o.model)
        config.synth.model = parse_model(*o.model);
    if (o.h)
        config.synth.h = *o.h;
    if (o.s)
        config.synth.s = *o.s;
    if (o.L)
        config.synth.sources = *o.L;
    if (o.K) {
        config.synth.informative = *o.K;
        // Model I has no non-informative sources.
        if (config.synth.model == SyntheticModel::I && !o.L)
            config.synth.sources = *o.K;
    }
    if (o.n)
        config.synth.n = *o.n;
    if (o.n_source)
        config.synth.n_source = *o.n_source;
    if (o.score_dist)
        config.synth.score_dist = parse_score_distribution(*o.score_dist);
    if (o.grid) {
        config.grid_size = *o.grid;
        config.realdata_grid = *o.grid;
    }
    if (o.out)
        config.output_dir = *o.out;
    if (o.jobs)
        config.jobs = *o.jobs;
    if (o.folds)
        config.cv.folds = *o.folds;
    if (o.aggregation) {
        if (*o.aggregation == "sparse")
            config.aggregation = Aggregation::sparse;
        else if (*o.aggregation == "q")
            config.aggregation = Aggregation::q;
        else
            throw ConfigError("--aggregation must be sparse or q");
    }
    if (!o.methods.empty()) {
        config.methods.clear();
        for (const auto& name : o.methods)
            config.methods.push_back(parse_method(name));
    }
    if (o.timing)
        config.timing = true;
    if (!o.sectors.empty()) {
        config.sector_files.assign(o.sectors.begin(), o.sectors.end());
    }
    if (!o.target_sectors.empty())
        config.target_sectors = o.target_sectors;
    config.validate();
    return config;
}

void write_slope(const fs::path& path, const GridFunction& slope)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "t,value\n";
    for (std::size_t i = 0; i < slope.grid().size(); ++i)
        out << format_double(slope.grid().point(i)) << ',' << format_double(slope[i]) << '\n';
}

int run_simulate(const Overrides& o)
{
    const RunConfig config = resolve(o, "simulate");
    SyntheticConfig sc = config.synth;
    sc.seed = config.master_seed;
    const Grid grid(config.grid_size.value_or(sc.default_grid_size()));
    const SyntheticTarget target = generate_target(sc, grid);
    const auto sources = generate_sources(sc, grid, target.truth);

    fs::create_directories(config.output_dir);
    save_curves_csv(config.output_dir / "target.csv", target.data);
    write_slope(config.output_dir / "slope.csv", target.truth.slope);
    for (std::size_t l = 0; l < sources.size(); ++l) {
        char name[32];
        std::snprintf(name, sizeof(name), "source_%02zu.csv", l + 1);
        save_curves_csv(config.output_dir / name, sources[l].data);
    }
    std::cout << "wrote target (n=" << target.data.size() << ") and " << sources.size() << " sources to "
              << config.output_dir.string() << '\n';
    return ok;
}

std::vector<FunctionalDataset> load_sources(const std::vector<std::string>& paths, const Grid& grid)
{
    std::vector<FunctionalDataset> sources;
    for (const auto& path : paths)
        sources.push_back(load_sector(path, grid));
    return sources;
}

int run_fit(const Overrides& o)
{
    const RunConfig config = resolve(o, "fit");
    const FunctionalDataset target = load_curves_csv(o.target);
    const auto sources = load_sources(o.sources, target.grid());
    const Estimator estimator = o.estimator == "flr" ? Estimator::flr : Estimator::tlflr;
    if (o.estimator != "flr" && o.estimator != "tlflr")
        throw ConfigError("--estimator must be flr or tlflr");
    if (estimator == Estimator::tlflr && sources.empty())
        throw ConfigError("tlflr needs at least one --source");

    SlopeEstimate estimate;
    if (o.m) {
        estimate = estimator == Estimator::flr ? fit_flr(target, *o.m)
                                               : fit_tlflr(target, sources, *o.m, o.tau.value_or(0.0));
    } else {
        CVConfig cv = config.cv;
        cv.seed = config.master_seed;
        estimate = fit_tuned(target, estimator == Estimator::flr ? std::span<const FunctionalDataset>{} : sources, cv,
                             estimator);
    }
    fs::create_directories(config.output_dir);
    write_slope(config.output_dir / "slope_estimate.csv", estimate.slope_curve);
    std::cout << "m=" << estimate.m << " tau=" << format_double(estimate.tau) << '\n';
    return ok;
}

int run_adaptive(const Overrides& o)
{
    const RunConfig config = resolve(o, "adaptive");
    const FunctionalDataset target = load_curves_csv(o.target);
    const auto sources = load_sources(o.sources, target.grid());
    AdaptiveConfig ac;
    ac.split_fraction = config.split_fraction;
    ac.seed = derive_seed(config.master_seed, {1});
    ac.cv = config.cv;
    ac.cv.seed = derive_seed(config.master_seed, {0});
    ac.aggregation = config.aggregation;
    ac.temperature = config.temperature;
    const AdaptiveFit fit = adaptive_fit(target, sources, ac);

    fs::create_directories(config.output_dir);
    write_slope(config.output_dir / "slope_estimate.csv", fit.estimate.slope_curve);
    std::cout << "source,zeta\n";
    for (std::size_t l = 0; l < fit.candidates.zeta.size(); ++l)
        std::cout << (l + 1) << ',' << format_double(fit.candidates.zeta[l]) << '\n';
    const auto& choice = fit.aggregation.chosen;
    std::cout << "aggregate: candidates " << choice.first << " and " << choice.second
              << " lambda=" << format_double(choice.lambda) << '\n';
    return ok;
}

int run_bench(const Overrides& o)
{
    const RunConfig config = resolve(o, "bench");
    const auto rows = run_benchmark(config);
    const fs::path out = config.output_dir / "results.csv";
    save_results_csv(out, rows);
    std::size_t failures = 0;
    for (const auto& row : rows)
        if (row.failed()) {
            ++failures;
            std::cerr << "rep " << row.rep << ' ' << row.method << ": " << row.message << '\n';
        }
    std::cout << "wrote " << rows.size() << " rows to " << out.string();
    if (failures > 0)
        std::cout << " (" << failures << " failed)";
    std::cout << '\n';
    return ok;
}

int run_real(const Overrides& o)
{
    const RunConfig config = resolve(o, "realdata");
    for (const auto& path : config.sector_files)
        if (!fs::exists(path))
            throw DataError("missing sector file '" + path.string() + "'");
    const auto rows = run_realdata(config);
    const fs::path out = config.output_dir / "results.csv";
    save_results_csv(out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out.string() << '\n';
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Transfer learning for functional linear regression"};
    app.set_help_flag("--help", "print this help and exit");
    app.require_subcommand(1);
    Overrides o;

    auto* simulate = app.add_subcommand("simulate", "write a synthetic target and its sources as curve CSVs");
    add_common(simulate, o);
    add_synthetic(simulate, o);

    auto* fit = app.add_subcommand("fit", "fit one slope estimate");
    add_common(fit, o);
    fit->add_option("--target", o.target, "target curve CSV")->required();
    fit->add_option("--source", o.sources, "source curve CSV (repeatable)");
    fit->add_option("--estimator", o.estimator, "tlflr | flr");
    fit->add_option("--m", o.m, "number of components (cross-validated when omitted)");
    fit->add_option("--tau", o.tau, "lasso penalty (with --m)");

    auto* adaptive = app.add_subcommand("adaptive", "adaptive transfer with source ranking and aggregation");
    add_common(adaptive, o);
    adaptive->add_option("--target", o.target, "target curve CSV")->required();
    adaptive->add_option("--source", o.sources, "source curve CSV (repeatable)")->required();
    adaptive->add_option("--aggregation", o.aggregation, "sparse | q");

    auto* bench = app.add_subcommand("bench", "Monte Carlo comparison on a synthetic model");
    add_common(bench, o);
    add_synthetic(bench, o);
    bench->add_option("--reps", o.reps, "repetitions");
    bench->add_option("--jobs", o.jobs, "concurrent repetitions");
    bench->add_option("--method", o.methods, "flr | tlflr | naive | agg (repeatable; default all)");
    bench->add_option("--aggregation", o.aggregation, "sparse | q");
    bench->add_flag("--timing", o.timing, "record wall time per fit");

    auto* realdata = app.add_subcommand("realdata", "train/test comparison across sectors");
    add_common(realdata, o);
    realdata->add_option("--sector", o.sectors, "sector CSV, curve or stock format (repeatable)");
    realdata->add_option("--target", o.target_sectors, "restrict targets to these sector names");
    realdata->add_option("--reps", o.reps, "random splits per sector");
    realdata->add_option("--jobs", o.jobs, "concurrent splits");
    realdata->add_option("--grid", o.grid, "grid size for the curves");
    realdata->add_option("--method", o.methods, "flr | naive | agg (repeatable; default all)");
    realdata->add_flag("--timing", o.timing, "record wall time per fit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (simulate->parsed())
            return run_simulate(o);
        if (fit->parsed())
            return run_fit(o);
        if (adaptive->parsed())
            return run_adaptive(o);
        if (bench->parsed())
            return run_bench(o);
        return run_real(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const InvariantViolation& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return internal_error;
    } catch (const ParseError& e) {
        std::cerr << "parse error at row " << e.row() << ", column " << e.column() << ": " << e.what() << '\n';
        return data_error;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data_error;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return internal_error;
    }
}
