#pragma once

// Monte Carlo benchmark over the synthetic models and the train/test protocol
// for per-sector real data, both emitting rows of a flat results table.

#include "tlflr/adaptive.hpp"
#include "tlflr/modelsel.hpp"
#include "tlflr/synth.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tlflr {

enum class Method {
    flr,    // target only
    oracle, // transfer from the true informative set
    naive,  // transfer from every source
    agg,    // adaptive aggregation
};

/// FLR | TL-FLR | Naive TL-FLR | Agg TL-FLR
std::string method_name(Method method);

/// Accepts the display names and the short keys flr, tlflr, naive, agg.
Method parse_method(const std::string& text);

struct RunConfig {
    std::string scenario = "bench"; // simulate | fit | adaptive | bench | realdata
    SyntheticConfig synth{};
    std::optional<std::size_t> grid_size; // defaults to synth.default_grid_size()
    CVConfig cv{};
    std::size_t repetitions = 1;
    std::uint64_t master_seed = 0;
    std::size_t jobs = 1;
    std::filesystem::path output_dir = ".";
    std::vector<Method> methods{Method::flr, Method::oracle, Method::naive, Method::agg};
    double split_fraction = 0.5;
    Aggregation aggregation = Aggregation::sparse;
    double temperature = 1.0;
    // Wall-clock columns are zero unless enabled, so output stays reproducible.
    bool timing = false;

    // realdata
    std::vector<std::filesystem::path> sector_files;
    std::vector<std::string> target_sectors; // empty: every sector in turn
    double train_fraction = 0.8;
    std::size_t realdata_grid = 100;

    /// Throws ConfigError.
    void validate() const;
};

/// Overrides fields of `base` with the keys present in a JSON object.
/// Unknown keys are a ConfigError.
RunConfig run_config_from_json(const std::string& text, RunConfig base = {});

struct ResultRow {
    std::string scenario;
    std::string method;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    std::string metric; // mise | pred_error | relative_error | error
    double value = 0.0;
    std::size_t m = 0;
    double tau = 0.0;
    long long millis = 0;
    std::string message; // only for error rows

    bool failed() const noexcept { return metric == "error"; }
};

/// e.g. "modelIV_h2_s1_K12_uniform"
std::string scenario_id(const SyntheticConfig& config);

/// Seed of one (repetition, method) cell. Data seeds use method slot 0.
std::uint64_t cell_seed(std::uint64_t master, std::size_t rep, std::size_t slot);

/// MISE rows for each repetition and configured method, in repetition order.
std::vector<ResultRow> run_benchmark(const RunConfig& config);

/// Real-data protocol on already loaded sectors: each target sector is split
/// train/test, the other sectors act as sources.
std::vector<ResultRow> run_realdata(const RunConfig& config, std::span<const FunctionalDataset> sectors);

/// Loads config.sector_files onto a grid of config.realdata_grid points first.
std::vector<ResultRow> run_realdata(const RunConfig& config);

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);
void save_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);

} // namespace tlflr
