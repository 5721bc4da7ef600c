#include "tlflr/bench.hpp"

#include "tlflr/errors.hpp"
#include "tlflr/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>
#include <thread>

namespace tlflr {

namespace {

struct Outcome {
    SlopeEstimate estimate;
    long long millis = 0;
};

template <class Fn>
Outcome timed(Fn&& fn)
{
    const auto start = std::chrono::steady_clock::now();
    Outcome out{fn(), 0};
    out.millis = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// Runs task(i) for i in [0, count) on up to `jobs` threads; results land in
// slot i so the caller can emit them in order.
template <class Task>
std::vector<std::vector<ResultRow>> parallel_reps(std::size_t count, std::size_t jobs, Task task)
{
    std::vector<std::vector<ResultRow>> slots(count);
    std::vector<std::exception_ptr> failures(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                slots[i] = task(i);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t)
            pool.emplace_back(worker);
        worker();
    }
    for (const auto& failure : failures)
        if (failure)
            std::rethrow_exception(failure);
    return slots;
}

ResultRow error_row(std::string scenario, Method method, std::size_t rep, std::uint64_t seed, const std::exception& e)
{
    ResultRow row;
    row.scenario = std::move(scenario);
    row.method = method_name(method);
    row.rep = rep;
    row.seed = seed;
    row.metric = "error";
    row.value = std::nan("");
    row.message = e.what();
    return row;
}

AdaptiveConfig adaptive_config(const RunConfig& config, std::uint64_t seed)
{
    AdaptiveConfig ac;
    ac.split_fraction = config.split_fraction;
    ac.seed = derive_seed(seed, {1});
    ac.cv = config.cv;
    ac.cv.seed = derive_seed(seed, {0});
    ac.aggregation = config.aggregation;
    ac.temperature = config.temperature;
    return ac;
}

Outcome fit_method(Method method, const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                   const RunConfig& config, std::uint64_t seed)
{
    CVConfig cv = config.cv;
    cv.seed = derive_seed(seed, {0});
    switch (method) {
    case Method::flr:
        return timed([&] { return fit_tuned(target, std::span<const FunctionalDataset>{}, cv, Estimator::flr); });
    case Method::oracle:
    case Method::naive:
        if (sources.empty())
            throw DomainError("no sources for " + method_name(method));
        return timed([&] { return fit_tuned(target, sources, cv, Estimator::tlflr); });
    case Method::agg:
        return timed([&] { return adaptive_fit(target, sources, adaptive_config(config, seed)).estimate; });
    }
    throw InvariantViolation("unknown method");
}

std::size_t method_slot(Method method) { return static_cast<std::size_t>(method) + 1; }

} // namespace

std::string method_name(Method method)
{
    switch (method) {
    case Method::flr: return "FLR";
    case Method::oracle: return "TL-FLR";
    case Method::naive: return "Naive TL-FLR";
    case Method::agg: return "Agg TL-FLR";
    }
    throw InvariantViolation("unknown method");
}

Method parse_method(const std::string& text)
{
    if (text == "flr" || text == "FLR")
        return Method::flr;
    if (text == "tlflr" || text == "oracle" || text == "TL-FLR")
        return Method::oracle;
    if (text == "naive" || text == "Naive TL-FLR")
        return Method::naive;
    if (text == "agg" || text == "Agg TL-FLR")
        return Method::agg;
    throw ConfigError("unknown method '" + text + "'");
}

void RunConfig::validate() const
{
    static const std::vector<std::string> scenarios{"simulate", "fit", "adaptive", "bench", "realdata"};
    if (std::find(scenarios.begin(), scenarios.end(), scenario) == scenarios.end())
        throw ConfigError("unknown scenario '" + scenario + "'");
    if (repetitions < 1)
        throw ConfigError("repetitions must be at least 1");
    if (jobs < 1)
        throw ConfigError("jobs must be at least 1");
    if (methods.empty())
        throw ConfigError("no methods selected");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ConfigError("split_fraction must lie in (0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0, 1)");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw ConfigError("temperature must be positive");
    if (grid_size && *grid_size < 2)
        throw ConfigError("grid_size must be at least 2");
    if (realdata_grid < 2)
        throw ConfigError("realdata_grid must be at least 2");
    synth.validate();
    if (!cv.m_grid.empty() || !cv.tau_grid.empty()) {
        CVConfig probe = cv.resolved(1000, 1000);
        probe.validate();
    } else if (cv.folds < 2) {
        throw ConfigError("folds must be at least 2");
    }
}

std::string scenario_id(const SyntheticConfig& config)
{
    return "model" + to_string(config.model) + "_h" + format_double(config.h) + "_s" + std::to_string(config.s)
        + "_K" + std::to_string(config.informative) + "_" + to_string(config.score_dist);
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t rep, std::size_t slot)
{
    return derive_seed(master, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(slot)});
}

std::vector<ResultRow> run_benchmark(const RunConfig& config)
{
    config.validate();
    const std::string scenario = scenario_id(config.synth);
    const Grid grid(config.grid_size.value_or(config.synth.default_grid_size()));

    auto one_rep = [&](std::size_t rep) {
        std::vector<ResultRow> rows;
        SyntheticConfig sc = config.synth;
        sc.seed = cell_seed(config.master_seed, rep, 0);
        const SyntheticTarget target = generate_target(sc, grid);
        const std::vector<SyntheticSource> generated = generate_sources(sc, grid, target.truth);
        std::vector<FunctionalDataset> all, informative;
        for (const auto& src : generated) {
            all.push_back(src.data);
            if (src.informative)
                informative.push_back(src.data);
        }

        for (Method method : config.methods) {
            const std::uint64_t seed = cell_seed(config.master_seed, rep, method_slot(method));
            try {
                const std::span<const FunctionalDataset> sources = method == Method::oracle ? informative : all;
                const Outcome out = fit_method(method, target.data, sources, config, seed);
                ResultRow row;
                row.scenario = scenario;
                row.method = method_name(method);
                row.rep = rep;
                row.seed = seed;
                row.metric = "mise";
                row.value = mise(out.estimate, target.truth);
                row.m = out.estimate.m;
                row.tau = out.estimate.tau;
                row.millis = config.timing ? out.millis : 0;
                rows.push_back(std::move(row));
            } catch (const std::exception& e) {
                rows.push_back(error_row(scenario, method, rep, seed, e));
            }
        }
        return rows;
    };

    std::vector<ResultRow> rows;
    for (auto& chunk : parallel_reps(config.repetitions, config.jobs, one_rep))
        std::move(chunk.begin(), chunk.end(), std::back_inserter(rows));
    return rows;
}

std::vector<ResultRow> run_realdata(const RunConfig& config, std::span<const FunctionalDataset> sectors)
{
    config.validate();
    if (sectors.empty())
        throw DataError("no sectors given");

    std::vector<std::size_t> targets;
    if (config.target_sectors.empty()) {
        for (std::size_t i = 0; i < sectors.size(); ++i)
            targets.push_back(i);
    } else {
        for (const auto& name : config.target_sectors) {
            const auto it = std::find_if(sectors.begin(), sectors.end(),
                                         [&](const FunctionalDataset& d) { return d.label() == name; });
            if (it == sectors.end())
                throw DataError("missing sector '" + name + "'");
            targets.push_back(static_cast<std::size_t>(it - sectors.begin()));
        }
    }

    std::vector<Method> methods;
    for (Method m : config.methods)
        if (m != Method::oracle)
            methods.push_back(m);

    const std::size_t cells = targets.size() * config.repetitions;
    auto one_cell = [&](std::size_t cell) {
        const std::size_t t = targets[cell / config.repetitions];
        const std::size_t rep = cell % config.repetitions;
        const FunctionalDataset& sector = sectors[t];
        const std::string scenario = "realdata:" + sector.label();
        std::vector<FunctionalDataset> sources;
        for (std::size_t j = 0; j < sectors.size(); ++j)
            if (j != t)
                sources.push_back(sectors[j]);

        std::vector<ResultRow> rows;
        const std::uint64_t split_seed = derive_seed(config.master_seed, {t, rep, 0});
        const std::size_t n = sector.size();
        if (n < 2)
            throw DataError("sector '" + sector.label() + "' has fewer than 2 observations");
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i)
            order[i] = i;
        Rng rng(split_seed);
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_train = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n))), 1, n - 1);
        std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::vector<std::size_t> test_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
        std::sort(train_rows.begin(), train_rows.end());
        std::sort(test_rows.begin(), test_rows.end());
        const FunctionalDataset train = sector.subset(train_rows, sector.label());
        const FunctionalDataset test = sector.subset(test_rows, sector.label());

        std::optional<double> flr_error;
        for (Method method : methods) {
            if (method != Method::flr && sources.empty())
                continue;
            const std::uint64_t seed = derive_seed(config.master_seed, {t, rep, method_slot(method)});
            try {
                const Outcome out = fit_method(method, train, sources, config, seed);
                const Eigen::VectorXd residual = test.responses() - predict(out.estimate, test);
                const double error = residual.squaredNorm() / static_cast<double>(residual.size());
                ResultRow row;
                row.scenario = scenario;
                row.method = method_name(method);
                row.rep = rep;
                row.seed = seed;
                row.metric = "pred_error";
                row.value = error;
                row.m = out.estimate.m;
                row.tau = out.estimate.tau;
                row.millis = config.timing ? out.millis : 0;
                rows.push_back(row);
                if (method == Method::flr) {
                    flr_error = error;
                } else if (flr_error && *flr_error > 0.0) {
                    row.metric = "relative_error";
                    row.value = error / *flr_error;
                    rows.push_back(std::move(row));
                }
            } catch (const std::exception& e) {
                rows.push_back(error_row(scenario, method, rep, seed, e));
            }
        }
        return rows;
    };

    std::vector<ResultRow> rows;
    for (auto& chunk : parallel_reps(cells, config.jobs, one_cell))
        std::move(chunk.begin(), chunk.end(), std::back_inserter(rows));
    return rows;
}

std::vector<ResultRow> run_realdata(const RunConfig& config)
{
    if (config.sector_files.empty())
        throw ConfigError("realdata needs at least one sector file");
    const Grid grid(config.realdata_grid);
    std::vector<FunctionalDataset> sectors;
    for (const auto& path : config.sector_files) {
        if (!std::filesystem::exists(path))
            throw DataError("missing sector file '" + path.string() + "'");
        sectors.push_back(load_sector(path, grid));
    }
    return run_realdata(config, sectors);
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows)
{
    out << "scenario,method,rep,seed,metric,value,m,tau,millis\n";
    for (const auto& row : rows) {
        out << row.scenario << ',' << row.method << ',' << row.rep << ',' << row.seed << ',' << row.metric << ',';
        if (row.failed()) {
            out << ",,," << row.millis << '\n';
            continue;
        }
        out << format_double(row.value) << ',' << row.m << ',' << format_double(row.tau) << ',' << row.millis << '\n';
    }
}

void save_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    write_results_csv(out, rows);
    if (!out)
        throw DataError("write failed for '" + path.string() + "'");
}

} // namespace tlflr
