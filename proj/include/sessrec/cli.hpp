#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sessrec/config.hpp"
#include "sessrec/core.hpp"
#include "sessrec/ensemble.hpp"
#include "sessrec/evaluation.hpp"
#include "sessrec/ingest.hpp"
#include "sessrec/model_io.hpp"
#include "sessrec/propensity.hpp"

namespace sessrec {

namespace detail {

inline void write_json_artifact(const std::filesystem::path& path, Json body,
                                const RunConfig& cfg) {
    body["config"] = cfg.to_json();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << body.dump(2) << "\n";
}

inline Json metric_json(const MetricResult& m) {
    return Json{{"hit_rate", m.hit_rate}, {"mrr", m.mrr},   {"n", m.n},
                {"action_count", m.action_count}, {"hits", m.hits}, {"rr_sum", m.rr_sum}};
}

inline Json optional_metric_json(const std::optional<MetricResult>& m) {
    if (!m) return nullptr;
    return metric_json(*m);
}

}  // namespace detail

inline std::filesystem::path model_path(const RunConfig& cfg, const std::string& model) {
    return cfg.out_path() / (model + ".model");
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

inline void cmd_preprocess(const RunConfig& cfg, std::ostream& log) {
    if (cfg.input.empty()) throw ConfigError("dataset.input is required for preprocess");
    const ParseResult parsed = parse_events_file(cfg.input, cfg.columns);
    if (parsed.events.empty()) throw DataError("no parseable events in " + cfg.input);
    const Dataset ds = preprocess(parsed.events, cfg.preprocess);
    std::filesystem::create_directories(cfg.out_path());
    save_snapshot(ds, cfg.snapshot_dir(), cfg.echo_line());

    std::size_t events = 0;
    for (const auto& s : ds.train_sessions) events += s.items.size();
    for (const auto& s : ds.test_sessions) events += s.items.size();
    const std::size_t sessions = ds.train_sessions.size() + ds.test_sessions.size();

    Json summary;
    summary["input_rows"] = parsed.total_rows;
    summary["skipped_rows"] = parsed.skipped_rows;
    summary["sessions"] = sessions;
    summary["actions"] = events;
    summary["items"] = ds.vocab.size();
    summary["avg_session_length"] = static_cast<double>(events) / static_cast<double>(sessions);
    summary["train_sessions"] = ds.train_sessions.size();
    summary["test_sessions"] = ds.test_sessions.size();
    detail::write_json_artifact(cfg.out_path() / "preprocess_summary.json", summary, cfg);

    log << "preprocess: " << sessions << " sessions, " << events << " actions, "
        << ds.vocab.size() << " items (train " << ds.train_sessions.size() << " / test "
        << ds.test_sessions.size() << " sessions, " << parsed.skipped_rows
        << " rows skipped)\n";
}

// ---------------------------------------------------------------------------
// propensity
// ---------------------------------------------------------------------------

inline PowerLawParams resolve_gamma(const RunConfig& cfg, const Dataset& ds) {
    if (cfg.gamma_fit) return fit_gamma(ds.item_counts);
    return PowerLawParams::fixed(cfg.gamma_value);
}

inline void cmd_propensity(const RunConfig& cfg, std::ostream& log) {
    const Dataset ds = load_snapshot(cfg.snapshot_dir());
    const PowerLawParams params = resolve_gamma(cfg, ds);
    const ItemPropensityTable table = item_propensity(ds.item_counts, params);

    {
        std::ofstream out(cfg.out_path() / "propensity.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write propensity.tsv");
        out << "# config: " << cfg.echo_line() << "\n";
        out << "item_id\tpropensity\n";
        for (std::size_t i = 0; i < table.values.size(); ++i) {
            out << ds.vocab.id_of(static_cast<ItemIndex>(i)) << '\t'
                << detail::fmt_double(table.values[i]) << '\n';
        }
    }

    const Histogram hist = log_propensity_histogram(table, 30);
    Json hj;
    hj["log10_lo"] = hist.lo;
    hj["bin_width"] = hist.bin_width;
    hj["counts"] = hist.counts;
    std::int64_t mass = 0;
    for (auto c : hist.counts) mass += c;
    hj["total"] = mass;
    detail::write_json_artifact(cfg.out_path() / "propensity_hist.json", hj, cfg);

    // Correlation between the two action-wise propensity scores over the
    // test actions, with the paired series for scatter plots.
    Json corr = nullptr;
    {
        std::vector<Action> actions;
        for (const auto& s : ds.test_sessions) {
            auto a = actions_from_session(s);
            actions.insert(actions.end(), a.begin(), a.end());
        }
        std::ofstream pts(cfg.out_path() / "correlation_points.csv", std::ios::binary);
        if (!pts) throw DataError("cannot write correlation_points.csv");
        pts << "# config: " << cfg.echo_line() << "\n";
        pts << "log10_target_propensity,log10_historical_propensity\n";
        try {
            const CorrelationResult c = strata_correlation(actions, table);
            for (const auto& [x, y] : c.points) {
                pts << detail::fmt_double(x) << ',' << detail::fmt_double(y) << '\n';
            }
            corr = c.r;
        } catch (const NumericError&) {
            // zero-variance series: leave the correlation null
        }
    }

    Json meta;
    meta["mode"] = cfg.gamma_fit ? "fit" : "fixed";
    meta["gamma"] = params.gamma;
    meta["exponent"] = params.exponent;
    if (params.fit) {
        meta["fit"] = Json{{"slope", params.fit->slope},
                           {"intercept", params.fit->intercept},
                           {"r_squared", params.fit->r_squared},
                           {"n_items", params.fit->n_items}};
    } else {
        meta["fit"] = nullptr;
    }
    meta["stratification_correlation"] = corr;
    detail::write_json_artifact(cfg.out_path() / "propensity_meta.json", meta, cfg);

    log << "propensity: gamma " << (cfg.gamma_fit ? "fitted" : "fixed") << " = "
        << detail::fmt_double(params.gamma);
    if (params.fit) log << " (r_squared " << detail::fmt_double(params.fit->r_squared) << ")";
    log << ", " << table.values.size() << " items\n";
}

inline ItemPropensityTable load_propensity_table(const RunConfig& cfg, const Dataset& ds) {
    const auto path = cfg.out_path() / "propensity.tsv";
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string() + " (run the propensity command first)");
    }
    ItemPropensityTable table;
    table.values.assign(ds.vocab.size(), 0.0);
    std::string line;
    bool header_seen = false;
    std::size_t filled = 0;
    while (std::getline(in, line)) {
        std::string_view row = detail::strip_cr(line);
        if (row.empty() || row.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto f = detail::split(row, '\t');
        if (f.size() != 2) throw DataError("malformed propensity.tsv row: " + std::string(row));
        double v = 0.0;
        if (!detail::parse_double(f[1], v)) {
            throw DataError("malformed propensity.tsv row: " + std::string(row));
        }
        table.values[static_cast<std::size_t>(ds.vocab.index_of(std::string(f[0])))] = v;
        ++filled;
    }
    if (filled != ds.vocab.size()) {
        throw DataError("propensity.tsv covers " + std::to_string(filled) + " of " +
                        std::to_string(ds.vocab.size()) + " items; regenerate it");
    }
    const auto meta_path = cfg.out_path() / "propensity_meta.json";
    std::ifstream meta_in(meta_path);
    if (meta_in) {
        const Json meta = Json::parse(meta_in, nullptr, false);
        if (!meta.is_discarded() && meta.contains("gamma") && meta["gamma"].is_number()) {
            table.params = PowerLawParams::fixed(meta["gamma"].get<double>());
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void cmd_train(const RunConfig& cfg, const std::string& model, std::ostream& log) {
    const Dataset ds = load_snapshot(cfg.snapshot_dir());
    Json summary;
    summary["model"] = model;
    if (model == "sknn") {
        SknnModel m(cfg.sknn, ds.train_sessions, ds.vocab.size());
        save_sknn(m, model_path(cfg, model), cfg.echo_line());
        std::size_t postings = 0;
        for (std::size_t s = 0; s < m.session_count(); ++s) postings += m.item_set(s).size();
        summary["indexed_sessions"] = m.session_count();
        summary["items"] = ds.vocab.size();
        summary["index_entries"] = postings;
        log << "train sknn: indexed " << m.session_count() << " sessions, " << postings
            << " index entries\n";
    } else if (model == "gru4rec") {
        Gru4RecModel m(cfg.gru4rec, ds.train_sessions, ds.vocab.size());
        save_gru(m, model_path(cfg, model), cfg.echo_line());
        summary["epoch_losses"] = m.epoch_losses();
        summary["untrained"] = m.epoch_losses().empty();
        log << "train gru4rec:";
        if (m.epoch_losses().empty()) {
            log << " untrained (epochs=0), initialized weights persisted";
        } else {
            for (std::size_t e = 0; e < m.epoch_losses().size(); ++e) {
                log << " epoch" << e + 1 << "=" << detail::fmt_double(m.epoch_losses()[e]);
            }
        }
        log << "\n";
    } else {
        throw ConfigError("unknown model '" + model + "' (expected sknn or gru4rec)");
    }
    detail::write_json_artifact(cfg.out_path() / ("train_" + model + ".json"), summary, cfg);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace detail {

inline void write_curves_csv(std::ostream& out, const std::string& model,
                             const std::vector<StratumMetrics>& sweep) {
    auto row = [&out, &model](double x, const char* stratum, const char* metric,
                              const std::optional<double>& v) {
        out << fmt_double(x) << ',' << stratum << ',' << model << ',' << metric << ',';
        if (v) out << fmt_double(*v);
        else out << "null";
        out << '\n';
    };
    for (const auto& p : sweep) {
        auto emit = [&](const char* name, const std::optional<MetricResult>& m) {
            row(p.x, name, "hr", m ? std::optional<double>(m->hit_rate) : std::nullopt);
            row(p.x, name, "mrr", m ? std::optional<double>(m->mrr) : std::nullopt);
            row(p.x, name, "action_count",
                m ? std::optional<double>(static_cast<double>(m->action_count)) : std::nullopt);
        };
        emit("q1", p.q1);
        emit("q2", p.q2);
    }
}

inline Json sweep_json(const std::vector<StratumMetrics>& sweep) {
    Json arr = Json::array();
    for (const auto& p : sweep) {
        arr.push_back(Json{{"x", p.x},
                           {"cutoff_value", p.cutoff_value},
                           {"q1", optional_metric_json(p.q1)},
                           {"q2", optional_metric_json(p.q2)}});
    }
    return arr;
}

inline Json robustness_json(const RobustnessRatio& r) {
    Json j;
    j["s1"] = metric_json(r.s1);
    j["s2"] = metric_json(r.s2);
    j["hr_ratio"] = r.hr_ratio ? Json(*r.hr_ratio) : Json(nullptr);
    j["mrr_ratio"] = r.mrr_ratio ? Json(*r.mrr_ratio) : Json(nullptr);
    return j;
}

inline Json model_report_json(const RunConfig& cfg, const std::string& model,
                              const EvaluationResult& result,
                              const std::vector<StratumMetrics>& sweep,
                              const std::optional<RobustnessRatio>& robustness) {
    Json report;
    report["model"] = model;
    report["stratification"] = cfg.stratification == StratifyMethod::target ? "target" : "historical";
    report["overall"] = metric_json(result.overall);
    report["constant_score_actions"] = result.constant_score_actions;
    report["sweep"] = sweep_json(sweep);
    report["robustness"] = robustness ? robustness_json(*robustness) : Json(nullptr);
    return report;
}

}  // namespace detail

inline void cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& models,
                         unsigned threads, std::ostream& log) {
    if (models.empty()) throw ConfigError("evaluate needs at least one model name");
    const Dataset ds = load_snapshot(cfg.snapshot_dir());
    const ItemPropensityTable table = load_propensity_table(cfg, ds);
    EvaluateOptions opts;
    opts.n = static_cast<std::size_t>(cfg.top_n);
    opts.threads = threads;

    for (const auto& name : models) {
        std::unique_ptr<Recommender> model;
        if (name == "sknn") {
            model = std::make_unique<SknnModel>(load_sknn(model_path(cfg, name)));
        } else if (name == "gru4rec") {
            model = std::make_unique<Gru4RecModel>(load_gru(model_path(cfg, name)));
        } else {
            throw ConfigError("unknown model '" + name + "' (expected sknn or gru4rec)");
        }
        if (model->vocab_size() != ds.vocab.size()) {
            throw DataError(name + " model was trained on a different vocabulary (" +
                            std::to_string(model->vocab_size()) + " items vs " +
                            std::to_string(ds.vocab.size()) + "); retrain it");
        }

        const EvaluationResult result = evaluate_model(*model, ds.test_sessions, table, opts);
        const auto sweep =
            stratified_sweep(result.records, cfg.stratification, cfg.percentile_grid, opts.n);
        std::optional<RobustnessRatio> robustness;
        if (result.records.size() >= 20) {
            robustness = robustness_ratio(result.records, cfg.stratification, opts.n);
        }

        save_action_records(result.records, ds.vocab, cfg.out_path() / ("records_" + name + ".tsv"),
                            cfg.echo_line());
        detail::write_json_artifact(cfg.out_path() / ("report_" + name + ".json"),
                                    detail::model_report_json(cfg, name, result, sweep, robustness),
                                    cfg);
        {
            std::ofstream out(cfg.out_path() / ("curves_" + name + ".csv"), std::ios::binary);
            if (!out) throw DataError("cannot write curves csv");
            out << "# config: " << cfg.echo_line() << "\n";
            out << "x,stratum,model,metric,value\n";
            detail::write_curves_csv(out, name, sweep);
        }

        log << "evaluate " << name << ": HR@" << opts.n << " "
            << detail::fmt_double(result.overall.hit_rate) << ", MRR@" << opts.n << " "
            << detail::fmt_double(result.overall.mrr) << " over " << result.overall.action_count
            << " actions\n";
    }
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

namespace detail {

// Per-action combiner: takes the two normalized score vectors and the
// action's historical propensity.
using CombineFn =
    std::function<RankedScores(const RankedScores&, const RankedScores&, double)>;

struct EnsembleVariant {
    std::string name;
    CombineFn combine;
};

// One scoring pass per action, shared by every variant: both base models
// are scored and normalized once, then each variant ranks its own blend.
inline std::vector<EvaluationResult> evaluate_variants(
    const SknnModel& knn, const Gru4RecModel& gru, const std::vector<Session>& test_sessions,
    const ItemPropensityTable& table, const std::vector<EnsembleVariant>& variants,
    std::size_t n, unsigned threads) {
    std::vector<std::vector<std::vector<ActionRecord>>> slots(
        test_sessions.size(), std::vector<std::vector<ActionRecord>>(variants.size()));

    auto run_session = [&](std::size_t si) {
        const auto actions = actions_from_session(test_sessions[si]);
        for (std::size_t v = 0; v < variants.size(); ++v) slots[si][v].reserve(actions.size());
        for (std::size_t k = 0; k < actions.size(); ++k) {
            const Action& a = actions[k];
            const RankedScores s_knn = normalize_scores(knn.score(a.prefix));
            const RankedScores s_gru = normalize_scores(gru.score(a.prefix));
            const double p_hist = action_propensity_historical(a, table);
            const double p_target = action_propensity_target(a, table);
            for (std::size_t v = 0; v < variants.size(); ++v) {
                const RankedScores combined = variants[v].combine(s_knn, s_gru, p_hist);
                ActionRecord rec;
                rec.session_id = a.session_id;
                rec.step = k + 1;
                rec.target = a.target;
                const std::size_t rank = rank_of(combined, a.target);
                rec.rank = rank <= n ? rank : kMissRank;
                rec.propensity_target = p_target;
                rec.propensity_historical = p_hist;
                slots[si][v].push_back(std::move(rec));
            }
        }
    };

    const unsigned workers = std::max(1u, threads);
    if (workers == 1 || test_sessions.size() < 2) {
        for (std::size_t si = 0; si < test_sessions.size(); ++si) run_session(si);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t si = next.fetch_add(1); si < test_sessions.size();
                         si = next.fetch_add(1)) {
                        run_session(si);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::vector<EvaluationResult> results(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::size_t si = 0; si < slots.size(); ++si) {
            for (auto& rec : slots[si][v]) results[v].records.push_back(std::move(rec));
        }
        results[v].overall = aggregate_all(results[v].records, n);
    }
    return results;
}

}  // namespace detail

// Propensities of all training actions under the historical method; used
// for the dynamic ensemble's log-normalization statistics.
inline std::vector<double> train_action_propensities(const Dataset& ds,
                                                     const ItemPropensityTable& table) {
    std::vector<double> out;
    for (const auto& s : ds.train_sessions) {
        for (const auto& a : actions_from_session(s)) {
            out.push_back(action_propensity_historical(a, table));
        }
    }
    return out;
}

struct AlphaSelection {
    double alpha = 0.0;
    double validation_hr = 0.0;
    std::size_t validation_actions = 0;
    bool fixed = false;
};

// Grid search for the sigmoid shift on a validation slice carved from the
// chronological tail of the training partition (models stay as trained).
inline AlphaSelection select_alpha(const SknnModel& knn, const Gru4RecModel& gru,
                                   const Dataset& ds, const ItemPropensityTable& table,
                                   const LogStats& stats, std::size_t n) {
    const std::size_t n_train = ds.train_sessions.size();
    const std::size_t n_val = std::max<std::size_t>(1, n_train / 10);
    std::vector<const Session*> val;
    for (std::size_t i = n_train - n_val; i < n_train; ++i) val.push_back(&ds.train_sessions[i]);

    struct Scored {
        RankedScores knn, gru;
        double p_hist = 0.0;
        ItemIndex target = 0;
    };
    std::vector<Scored> cache;
    for (const Session* s : val) {
        for (const auto& a : actions_from_session(*s)) {
            Scored sc;
            sc.knn = normalize_scores(knn.score(a.prefix));
            sc.gru = normalize_scores(gru.score(a.prefix));
            sc.p_hist = action_propensity_historical(a, table);
            sc.target = a.target;
            cache.push_back(std::move(sc));
        }
    }
    if (cache.empty()) throw DataError("alpha search: validation slice has no actions");

    AlphaSelection best;
    bool first = true;
    for (double alpha : alpha_grid()) {
        DynamicEnsembleConfig dc;
        dc.alpha = alpha;
        dc.p_mean_hat = stats.mean;
        dc.p_std_hat = stats.stddev;
        std::size_t hits = 0;
        for (const auto& sc : cache) {
            const RankedScores combined = dynamic_weight_combine(sc.knn, sc.gru, sc.p_hist, dc);
            if (rank_of(combined, sc.target) <= n) ++hits;
        }
        const double hr = static_cast<double>(hits) / static_cast<double>(cache.size());
        if (first || hr > best.validation_hr) {
            best.alpha = alpha;
            best.validation_hr = hr;
            first = false;
        }
    }
    best.validation_actions = cache.size();
    return best;
}

inline void cmd_ensemble(const RunConfig& cfg, unsigned threads, std::ostream& log) {
    const Dataset ds = load_snapshot(cfg.snapshot_dir());
    const ItemPropensityTable table = load_propensity_table(cfg, ds);
    const SknnModel knn = load_sknn(model_path(cfg, "sknn"));
    const Gru4RecModel gru = load_gru(model_path(cfg, "gru4rec"));
    if (knn.vocab_size() != ds.vocab.size() || gru.vocab_size() != ds.vocab.size()) {
        throw DataError("ensemble models were trained on a different vocabulary; retrain them");
    }
    const auto n = static_cast<std::size_t>(cfg.top_n);

    // Per-action gating uses the historical propensity: the target item is
    // unknown at recommendation time, so it is the only score the ensemble
    // may legitimately condition on.
    double threshold = 0.0;
    if (cfg.ensemble_threshold) {
        threshold = *cfg.ensemble_threshold;
    } else {
        std::vector<double> test_props;
        for (const auto& s : ds.test_sessions) {
            for (const auto& a : actions_from_session(s)) {
                test_props.push_back(action_propensity_historical(a, table));
            }
        }
        threshold = percentile_nearest_rank(test_props, cfg.threshold_percentile);
    }

    const bool run_fixed = cfg.ensemble_mode == "fixed" || cfg.ensemble_mode == "both";
    const bool run_dynamic = cfg.ensemble_mode == "dynamic" || cfg.ensemble_mode == "both";

    std::vector<detail::EnsembleVariant> variants;
    variants.push_back({"sknn", [](const RankedScores& a, const RankedScores&, double) { return a; }});
    variants.push_back({"gru4rec", [](const RankedScores&, const RankedScores& b, double) { return b; }});
    if (run_fixed) {
        for (double w2 : cfg.w2_grid) {
            FixedEnsembleConfig fc;
            fc.threshold = threshold;
            fc.w2 = w2;
            fc.validate();
            variants.push_back({"fixed_w2=" + detail::fmt_double(w2),
                                [fc](const RankedScores& a, const RankedScores& b, double p) {
                                    return fixed_weight_combine(a, b, p, fc);
                                }});
        }
    }

    Json alpha_json = nullptr;
    Json stats_json = nullptr;
    if (run_dynamic) {
        const LogStats stats = estimate_log_stats(train_action_propensities(ds, table));
        stats_json = Json{{"p_mean_hat", stats.mean}, {"p_std_hat", stats.stddev}};
        AlphaSelection sel;
        if (cfg.fixed_alpha) {
            sel.alpha = *cfg.fixed_alpha;
            sel.fixed = true;
        } else {
            sel = select_alpha(knn, gru, ds, table, stats, n);
        }
        DynamicEnsembleConfig dc;
        dc.alpha = sel.alpha;
        dc.p_mean_hat = stats.mean;
        dc.p_std_hat = stats.stddev;
        dc.validate();
        variants.push_back({"dynamic", [dc](const RankedScores& a, const RankedScores& b, double p) {
                                return dynamic_weight_combine(a, b, p, dc);
                            }});
        alpha_json = Json{{"selected", sel.alpha},
                          {"mode", sel.fixed ? "fixed" : "grid"},
                          {"validation_hr", sel.fixed ? Json(nullptr) : Json(sel.validation_hr)},
                          {"validation_actions", sel.validation_actions}};
    }

    const auto results =
        detail::evaluate_variants(knn, gru, ds.test_sessions, table, variants, n, threads);

    Json report;
    report["threshold"] = threshold;
    report["threshold_percentile"] = cfg.ensemble_threshold ? Json(nullptr) : Json(cfg.threshold_percentile);
    report["gating_propensity"] = "historical";
    report["log_stats"] = stats_json;
    report["alpha"] = alpha_json;
    Json table_json = Json::array();
    {
        std::ofstream curves(cfg.out_path() / "ensemble_curves.csv", std::ios::binary);
        if (!curves) throw DataError("cannot write ensemble_curves.csv");
        curves << "# config: " << cfg.echo_line() << "\n";
        curves << "x,stratum,model,metric,value\n";
        for (std::size_t v = 0; v < variants.size(); ++v) {
            const auto sweep =
                stratified_sweep(results[v].records, cfg.stratification, cfg.percentile_grid, n);
            std::optional<RobustnessRatio> robustness;
            if (results[v].records.size() >= 20) {
                robustness = robustness_ratio(results[v].records, cfg.stratification, n);
            }
            Json row;
            row["name"] = variants[v].name;
            row["overall"] = detail::metric_json(results[v].overall);
            row["sweep"] = detail::sweep_json(sweep);
            row["robustness"] = robustness ? detail::robustness_json(*robustness) : Json(nullptr);
            table_json.push_back(row);
            detail::write_curves_csv(curves, variants[v].name, sweep);
        }
    }
    report["variants"] = table_json;
    detail::write_json_artifact(cfg.out_path() / "ensemble_report.json", report, cfg);

    for (std::size_t v = 0; v < variants.size(); ++v) {
        log << "ensemble " << variants[v].name << ": HR@" << n << " "
            << detail::fmt_double(results[v].overall.hit_rate) << ", MRR@" << n << " "
            << detail::fmt_double(results[v].overall.mrr) << "\n";
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

// Folds the per-model and ensemble artifacts into one summary JSON and one
// concatenated curve file ready for plotting.
inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    Json summary;
    Json models = Json::object();
    std::vector<fs::path> curve_files;

    std::vector<fs::path> entries;
    if (!fs::exists(cfg.out_path())) throw DataError("output directory does not exist: " + cfg.output_dir);
    for (const auto& e : fs::directory_iterator(cfg.out_path())) {
        if (e.is_regular_file()) entries.push_back(e.path());
    }
    std::sort(entries.begin(), entries.end());

    for (const auto& path : entries) {
        const std::string name = path.filename().string();
        // own outputs would otherwise match the globs below on a rerun
        if (name == "report_summary.json" || name == "curves_all.csv") continue;
        if (name.rfind("report_", 0) == 0 && path.extension() == ".json") {
            std::ifstream in(path);
            const Json r = Json::parse(in, nullptr, false);
            if (r.is_discarded()) throw DataError("malformed report file: " + path.string());
            Json entry;
            entry["overall"] = r.value("overall", Json(nullptr));
            entry["robustness"] = r.value("robustness", Json(nullptr));
            models[r.value("model", name)] = entry;
        } else if (name.rfind("curves_", 0) == 0 && path.extension() == ".csv") {
            curve_files.push_back(path);
        } else if (name == "ensemble_curves.csv") {
            curve_files.push_back(path);
        }
    }
    summary["models"] = models;

    const fs::path ens = cfg.out_path() / "ensemble_report.json";
    if (fs::exists(ens)) {
        std::ifstream in(ens);
        const Json r = Json::parse(in, nullptr, false);
        if (r.is_discarded()) throw DataError("malformed report file: " + ens.string());
        Json e;
        e["threshold"] = r.value("threshold", Json(nullptr));
        e["alpha"] = r.value("alpha", Json(nullptr));
        Json variants = Json::object();
        if (r.contains("variants")) {
            for (const auto& v : r["variants"]) {
                variants[v.value("name", "?")] = Json{{"overall", v.value("overall", Json(nullptr))},
                                                      {"robustness", v.value("robustness", Json(nullptr))}};
            }
        }
        e["variants"] = variants;
        summary["ensemble"] = e;
    } else {
        summary["ensemble"] = nullptr;
    }
    if (models.empty() && summary["ensemble"].is_null()) {
        throw DataError("no evaluation artifacts found in " + cfg.output_dir +
                        " (run evaluate or ensemble first)");
    }

    detail::write_json_artifact(cfg.out_path() / "report_summary.json", summary, cfg);
    {
        std::ofstream out(cfg.out_path() / "curves_all.csv", std::ios::binary);
        if (!out) throw DataError("cannot write curves_all.csv");
        out << "# config: " << cfg.echo_line() << "\n";
        out << "x,stratum,model,metric,value\n";
        for (const auto& path : curve_files) {
            std::ifstream in(path);
            std::string line;
            while (std::getline(in, line)) {
                std::string_view row = detail::strip_cr(line);
                if (row.empty() || row.front() == '#' || row.rfind("x,stratum", 0) == 0) continue;
                out << row << '\n';
            }
        }
    }
    log << "report: " << models.size() << " model reports, " << curve_files.size()
        << " curve files merged\n";
}

}  // namespace sessrec
