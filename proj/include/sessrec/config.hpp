#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sessrec/ensemble.hpp"
#include "sessrec/errors.hpp"
#include "sessrec/gru4rec.hpp"
#include "sessrec/ingest.hpp"
#include "sessrec/propensity.hpp"
#include "sessrec/sknn.hpp"

namespace sessrec {

using Json = nlohmann::json;

namespace detail {

// Unknown keys are hard errors: a silently ignored typo in a hyperparameter
// name is the classic reproduction killer.
inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                       const std::string& block) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown config key '" + it.key() + "' in " + block);
    }
}

inline double get_double(const Json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
    return obj[key].get<double>();
}

inline int get_int(const Json& obj, const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) {
        throw ConfigError(std::string("config key '") + key + "' must be an integer");
    }
    return obj[key].get<int>();
}

inline std::string get_string(const Json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
    return obj[key].get<std::string>();
}

inline bool get_bool(const Json& obj, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) throw ConfigError(std::string("config key '") + key + "' must be a boolean");
    return obj[key].get<bool>();
}

inline std::vector<double> get_double_list(const Json& obj, const char* key,
                                           std::vector<double> fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_array()) throw ConfigError(std::string("config key '") + key + "' must be an array");
    std::vector<double> out;
    for (const auto& v : obj[key]) {
        if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must hold numbers");
        out.push_back(v.get<double>());
    }
    if (out.empty()) throw ConfigError(std::string("config key '") + key + "' must not be empty");
    return out;
}

}  // namespace detail

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    // dataset
    std::string input;
    std::string format = "custom";
    std::string delimiter = "auto";  // single character, or "auto"
    ColumnFormat columns;            // resolved column layout
    PreprocessConfig preprocess;

    // propensity
    bool gamma_fit = true;
    double gamma_value = 1.0;  // used when gamma_fit is false

    SknnConfig sknn;
    Gru4RecConfig gru4rec;

    // ensemble
    std::string ensemble_mode = "both";  // fixed | dynamic | both
    std::optional<double> ensemble_threshold;  // explicit T; else percentile below
    double threshold_percentile = 10.0;
    std::vector<double> w2_grid = {1.0, 0.9, 0.8, 0.7, 0.5, 0.2};
    std::optional<double> fixed_alpha;  // skips the grid search when set

    // evaluation
    int top_n = 20;
    std::vector<double> percentile_grid = {10.0, 30.0, 50.0, 70.0, 90.0};
    StratifyMethod stratification = StratifyMethod::target;

    static RunConfig from_json(const Json& root);
    static RunConfig load(const std::filesystem::path& path);

    Json to_json() const;
    // Compact one-line resolved-config echo embedded in every artifact.
    std::string echo_line() const { return to_json().dump(); }

    std::filesystem::path out_path() const { return output_dir; }
    std::filesystem::path snapshot_dir() const { return out_path() / "snapshot"; }
};

inline RunConfig RunConfig::from_json(const Json& root) {
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    detail::check_keys(root,
                       {"seed", "output_dir", "dataset", "propensity", "sknn", "gru4rec",
                        "ensemble", "evaluation"},
                       "config root");
    RunConfig c;
    if (root.contains("seed")) {
        if (!root["seed"].is_number_integer()) throw ConfigError("config key 'seed' must be an integer");
        c.seed = root["seed"].get<std::uint64_t>();
    }
    c.output_dir = detail::get_string(root, "output_dir", c.output_dir);
    if (const char* env = std::getenv("SESSREC_OUTPUT_DIR")) {
        if (*env != '\0') c.output_dir = env;
    }

    if (root.contains("dataset")) {
        const Json& d = root["dataset"];
        detail::check_keys(d,
                           {"input", "format", "delimiter", "session_column", "item_column",
                            "time_column", "time_unit", "strict_parse", "min_item_support",
                            "min_session_length", "test_split"},
                           "dataset");
        c.input = detail::get_string(d, "input", "");
        c.format = detail::get_string(d, "format", "custom");
        if (c.format == "custom") {
            c.columns.session_column = "session_id";
            c.columns.item_column = "item_id";
            c.columns.time_column = "timestamp";
        } else {
            c.columns = ColumnFormat::preset(c.format);
            c.delimiter = std::string(1, c.columns.delimiter);
        }
        c.delimiter = detail::get_string(d, "delimiter", c.delimiter);
        if (c.delimiter == "auto") {
            c.columns.delimiter = '\0';
        } else if (c.delimiter.size() == 1) {
            c.columns.delimiter = c.delimiter[0];
        } else {
            throw ConfigError("dataset.delimiter must be a single character or \"auto\"");
        }
        c.columns.session_column = detail::get_string(d, "session_column", c.columns.session_column);
        c.columns.item_column = detail::get_string(d, "item_column", c.columns.item_column);
        c.columns.time_column = detail::get_string(d, "time_column", c.columns.time_column);
        if (d.contains("time_unit")) {
            const std::string u = d["time_unit"].get<std::string>();
            if (u == "seconds") c.columns.time_unit = TimeUnit::seconds;
            else if (u == "milliseconds") c.columns.time_unit = TimeUnit::milliseconds;
            else if (u == "iso8601") c.columns.time_unit = TimeUnit::iso8601;
            else throw ConfigError("dataset.time_unit must be seconds, milliseconds or iso8601");
        }
        c.columns.strict = detail::get_bool(d, "strict_parse", c.columns.strict);
        c.preprocess.min_item_support = detail::get_int(d, "min_item_support", c.preprocess.min_item_support);
        c.preprocess.min_session_length =
            detail::get_int(d, "min_session_length", c.preprocess.min_session_length);
        if (d.contains("test_split")) {
            const Json& ts = d["test_split"];
            detail::check_keys(ts, {"kind", "value"}, "dataset.test_split");
            const std::string kind = detail::get_string(ts, "kind", "last_days");
            if (kind == "last_days") c.preprocess.test_split.kind = TestSplit::Kind::last_days;
            else if (kind == "last_fraction") c.preprocess.test_split.kind = TestSplit::Kind::last_fraction;
            else throw ConfigError("dataset.test_split.kind must be last_days or last_fraction");
            c.preprocess.test_split.value = detail::get_double(ts, "value", c.preprocess.test_split.value);
        }
    } else {
        c.columns.session_column = "session_id";
        c.columns.item_column = "item_id";
        c.columns.time_column = "timestamp";
    }

    if (root.contains("propensity")) {
        const Json& p = root["propensity"];
        detail::check_keys(p, {"gamma"}, "propensity");
        if (p.contains("gamma")) {
            if (p["gamma"].is_string()) {
                if (p["gamma"].get<std::string>() != "fit") {
                    throw ConfigError("propensity.gamma must be \"fit\" or a number");
                }
                c.gamma_fit = true;
            } else if (p["gamma"].is_number()) {
                c.gamma_fit = false;
                c.gamma_value = p["gamma"].get<double>();
                PowerLawParams::fixed(c.gamma_value);  // range check
            } else {
                throw ConfigError("propensity.gamma must be \"fit\" or a number");
            }
        }
    }

    if (root.contains("sknn")) {
        const Json& s = root["sknn"];
        detail::check_keys(s,
                           {"k", "sample_size", "similarity", "neighbor_item_scoring",
                            "exclude_prefix_items"},
                           "sknn");
        c.sknn.k = detail::get_int(s, "k", c.sknn.k);
        c.sknn.sample_size = detail::get_int(s, "sample_size", c.sknn.sample_size);
        const std::string sim = detail::get_string(s, "similarity", "cosine");
        if (sim == "cosine") c.sknn.similarity = Similarity::cosine;
        else if (sim == "jaccard") c.sknn.similarity = Similarity::jaccard;
        else throw ConfigError("sknn.similarity must be cosine or jaccard");
        const std::string scoring = detail::get_string(s, "neighbor_item_scoring", "similarity_sum");
        if (scoring == "similarity_sum") {
            c.sknn.neighbor_item_scoring = NeighborItemScoring::similarity_sum;
        } else if (scoring == "popularity_in_neighborhood") {
            c.sknn.neighbor_item_scoring = NeighborItemScoring::popularity_in_neighborhood;
        } else {
            throw ConfigError("sknn.neighbor_item_scoring must be similarity_sum or popularity_in_neighborhood");
        }
        c.sknn.exclude_prefix_items = detail::get_bool(s, "exclude_prefix_items", true);
        c.sknn.validate();
    }

    if (root.contains("gru4rec")) {
        const Json& g = root["gru4rec"];
        detail::check_keys(g,
                           {"hidden_size", "dropout", "learning_rate", "momentum", "epochs",
                            "batch_size", "bpr_reg_lambda", "loss", "optimizer", "seed"},
                           "gru4rec");
        // fixed algorithm choices; present in echoes, so accepted back
        if (detail::get_string(g, "loss", "bpr-max") != "bpr-max") {
            throw ConfigError("gru4rec.loss: only bpr-max is implemented");
        }
        if (detail::get_string(g, "optimizer", "adagrad-momentum") != "adagrad-momentum") {
            throw ConfigError("gru4rec.optimizer: only adagrad-momentum is implemented");
        }
        c.gru4rec.hidden_size = detail::get_int(g, "hidden_size", c.gru4rec.hidden_size);
        c.gru4rec.dropout = detail::get_double(g, "dropout", c.gru4rec.dropout);
        c.gru4rec.learning_rate = detail::get_double(g, "learning_rate", c.gru4rec.learning_rate);
        c.gru4rec.momentum = detail::get_double(g, "momentum", c.gru4rec.momentum);
        c.gru4rec.epochs = detail::get_int(g, "epochs", c.gru4rec.epochs);
        c.gru4rec.batch_size = detail::get_int(g, "batch_size", c.gru4rec.batch_size);
        c.gru4rec.bpr_reg_lambda = detail::get_double(g, "bpr_reg_lambda", c.gru4rec.bpr_reg_lambda);
    }
    c.gru4rec.seed = c.seed;
    c.gru4rec.validate();

    if (root.contains("ensemble")) {
        const Json& e = root["ensemble"];
        detail::check_keys(e, {"mode", "threshold", "threshold_percentile", "w2_grid", "alpha"},
                           "ensemble");
        c.ensemble_mode = detail::get_string(e, "mode", c.ensemble_mode);
        if (c.ensemble_mode != "fixed" && c.ensemble_mode != "dynamic" && c.ensemble_mode != "both") {
            throw ConfigError("ensemble.mode must be fixed, dynamic or both");
        }
        if (e.contains("threshold") && !e["threshold"].is_null()) {
            if (!e["threshold"].is_number()) throw ConfigError("ensemble.threshold must be a number");
            c.ensemble_threshold = e["threshold"].get<double>();
        }
        c.threshold_percentile = detail::get_double(e, "threshold_percentile", c.threshold_percentile);
        if (!(c.threshold_percentile > 0.0) || c.threshold_percentile >= 100.0) {
            throw ConfigError("ensemble.threshold_percentile must be in (0,100)");
        }
        c.w2_grid = detail::get_double_list(e, "w2_grid", c.w2_grid);
        for (double w : c.w2_grid) {
            if (!(w >= 0.0) || w > 1.0) throw ConfigError("ensemble.w2_grid values must be in [0,1]");
        }
        if (e.contains("alpha")) {
            if (e["alpha"].is_number()) {
                c.fixed_alpha = e["alpha"].get<double>();
            } else if (!(e["alpha"].is_string() && e["alpha"].get<std::string>() == "grid")) {
                throw ConfigError("ensemble.alpha must be a number or \"grid\"");
            }
        }
    }

    if (root.contains("evaluation")) {
        const Json& ev = root["evaluation"];
        detail::check_keys(ev, {"n", "percentile_grid", "stratification"}, "evaluation");
        c.top_n = detail::get_int(ev, "n", c.top_n);
        if (c.top_n < 1) throw ConfigError("evaluation.n must be >= 1");
        c.percentile_grid = detail::get_double_list(ev, "percentile_grid", c.percentile_grid);
        for (double x : c.percentile_grid) {
            if (!(x >= 0.0) || x > 100.0) throw ConfigError("evaluation.percentile_grid values must be in [0,100]");
        }
        const std::string m = detail::get_string(ev, "stratification", "target");
        if (m == "target") c.stratification = StratifyMethod::target;
        else if (m == "historical") c.stratification = StratifyMethod::historical;
        else throw ConfigError("evaluation.stratification must be target or historical");
    }
    return c;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    Json root;
    try {
        root = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return from_json(root);
}

inline Json RunConfig::to_json() const {
    Json d;
    d["input"] = input;
    d["format"] = format;
    d["delimiter"] = delimiter;
    d["session_column"] = columns.session_column;
    d["item_column"] = columns.item_column;
    d["time_column"] = columns.time_column;
    d["time_unit"] = columns.time_unit == TimeUnit::seconds        ? "seconds"
                     : columns.time_unit == TimeUnit::milliseconds ? "milliseconds"
                                                                   : "iso8601";
    d["strict_parse"] = columns.strict;
    d["min_item_support"] = preprocess.min_item_support;
    d["min_session_length"] = preprocess.min_session_length;
    d["test_split"] = {
        {"kind", preprocess.test_split.kind == TestSplit::Kind::last_days ? "last_days" : "last_fraction"},
        {"value", preprocess.test_split.value}};

    Json p;
    if (gamma_fit) p["gamma"] = "fit";
    else p["gamma"] = gamma_value;

    Json s;
    s["k"] = sknn.k;
    s["sample_size"] = sknn.sample_size;
    s["similarity"] = sknn.similarity == Similarity::cosine ? "cosine" : "jaccard";
    s["neighbor_item_scoring"] = sknn.neighbor_item_scoring == NeighborItemScoring::similarity_sum
                                     ? "similarity_sum"
                                     : "popularity_in_neighborhood";
    s["exclude_prefix_items"] = sknn.exclude_prefix_items;

    Json g;
    g["hidden_size"] = gru4rec.hidden_size;
    g["loss"] = "bpr-max";
    g["optimizer"] = "adagrad-momentum";
    g["dropout"] = gru4rec.dropout;
    g["learning_rate"] = gru4rec.learning_rate;
    g["momentum"] = gru4rec.momentum;
    g["epochs"] = gru4rec.epochs;
    g["batch_size"] = gru4rec.batch_size;
    g["bpr_reg_lambda"] = gru4rec.bpr_reg_lambda;
    g["seed"] = gru4rec.seed;

    Json e;
    e["mode"] = ensemble_mode;
    if (ensemble_threshold) e["threshold"] = *ensemble_threshold;
    else e["threshold"] = nullptr;
    e["threshold_percentile"] = threshold_percentile;
    e["w2_grid"] = w2_grid;
    if (fixed_alpha) e["alpha"] = *fixed_alpha;
    else e["alpha"] = "grid";

    Json ev;
    ev["n"] = top_n;
    ev["percentile_grid"] = percentile_grid;
    ev["stratification"] = stratification == StratifyMethod::target ? "target" : "historical";

    return Json{{"seed", seed},     {"output_dir", output_dir}, {"dataset", d},
                {"propensity", p},  {"sknn", s},                {"gru4rec", g},
                {"ensemble", e},    {"evaluation", ev}};
}

}  // namespace sessrec
