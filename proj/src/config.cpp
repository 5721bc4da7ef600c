#include "tlflr/bench.hpp"

#include "tlflr/errors.hpp"

#include <json.hpp>

namespace tlflr {

namespace {

using nlohmann::json;

template <class T>
T get_as(const json& value, const std::string& key)
{
    try {
        return value.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

template <class T>
void read_field(const json& obj, const char* key, T& field)
{
    if (const auto it = obj.find(key); it != obj.end())
        field = get_as<T>(*it, key);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!obj.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError("unknown config key '" + key + "' in " + where);
    }
}

void read_synth(const json& obj, SyntheticConfig& synth)
{
    check_keys(obj,
               {"alpha", "beta", "n", "n_source", "sources", "informative", "h", "s", "sigma_eps", "model",
                "score_dist", "truncation", "seed"},
               "synth");
    read_field(obj, "alpha", synth.alpha);
    read_field(obj, "beta", synth.beta);
    read_field(obj, "n", synth.n);
    read_field(obj, "n_source", synth.n_source);
    read_field(obj, "sources", synth.sources);
    read_field(obj, "informative", synth.informative);
    read_field(obj, "h", synth.h);
    read_field(obj, "s", synth.s);
    read_field(obj, "sigma_eps", synth.sigma_eps);
    read_field(obj, "truncation", synth.truncation);
    read_field(obj, "seed", synth.seed);
    if (const auto it = obj.find("model"); it != obj.end())
        synth.model = parse_model(get_as<std::string>(*it, "model"));
    if (const auto it = obj.find("score_dist"); it != obj.end())
        synth.score_dist = parse_score_distribution(get_as<std::string>(*it, "score_dist"));
}

void read_cv(const json& obj, CVConfig& cv)
{
    check_keys(obj, {"folds", "m_grid", "tau_grid", "seed"}, "cv");
    read_field(obj, "folds", cv.folds);
    read_field(obj, "m_grid", cv.m_grid);
    read_field(obj, "tau_grid", cv.tau_grid);
    read_field(obj, "seed", cv.seed);
}

} // namespace

RunConfig run_config_from_json(const std::string& text, RunConfig base)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(doc,
               {"scenario", "synth", "grid_size", "cv", "repetitions", "master_seed", "jobs", "output_dir", "methods",
                "split_fraction", "aggregation", "temperature", "timing", "sector_files", "target_sectors",
                "train_fraction", "realdata_grid"},
               "config");

    RunConfig config = std::move(base);
    read_field(doc, "scenario", config.scenario);
    if (const auto it = doc.find("synth"); it != doc.end())
        read_synth(*it, config.synth);
    if (const auto it = doc.find("grid_size"); it != doc.end())
        config.grid_size = get_as<std::size_t>(*it, "grid_size");
    if (const auto it = doc.find("cv"); it != doc.end())
        read_cv(*it, config.cv);
    read_field(doc, "repetitions", config.repetitions);
    read_field(doc, "master_seed", config.master_seed);
    read_field(doc, "jobs", config.jobs);
    if (const auto it = doc.find("output_dir"); it != doc.end())
        config.output_dir = get_as<std::string>(*it, "output_dir");
    if (const auto it = doc.find("methods"); it != doc.end()) {
        config.methods.clear();
        for (const auto& name : get_as<std::vector<std::string>>(*it, "methods"))
            config.methods.push_back(parse_method(name));
    }
    read_field(doc, "split_fraction", config.split_fraction);
    if (const auto it = doc.find("aggregation"); it != doc.end()) {
        const auto name = get_as<std::string>(*it, "aggregation");
        if (name == "sparse")
            config.aggregation = Aggregation::sparse;
        else if (name == "q")
            config.aggregation = Aggregation::q;
        else
            throw ConfigError("aggregation must be 'sparse' or 'q'");
    }
    read_field(doc, "temperature", config.temperature);
    read_field(doc, "timing", config.timing);
    if (const auto it = doc.find("sector_files"); it != doc.end()) {
        config.sector_files.clear();
        for (const auto& path : get_as<std::vector<std::string>>(*it, "sector_files"))
            config.sector_files.emplace_back(path);
    }
    read_field(doc, "target_sectors", config.target_sectors);
    read_field(doc, "train_fraction", config.train_fraction);
    read_field(doc, "realdata_grid", config.realdata_grid);
    return config;
}

} // namespace tlflr
