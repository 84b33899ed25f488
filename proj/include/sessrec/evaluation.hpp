#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/detail.hpp"
#include "sessrec/errors.hpp"
#include "sessrec/propensity.hpp"
#include "sessrec/recommender.hpp"

namespace sessrec {

struct MetricResult {
    double hit_rate = 0.0;
    double mrr = 0.0;
    std::size_t n = 20;
    std::size_t action_count = 0;
    std::size_t hits = 0;   // integer numerator of hit_rate
    double rr_sum = 0.0;    // numerator of mrr, summed in record order
};

// One evaluated action; ranks beyond N are stored as the miss sentinel 0,
// so stratified re-aggregation never needs to re-score.
struct ActionRecord {
    std::string session_id;
    std::size_t step = 0;  // prefix length, 1-based within the session
    ItemIndex target = 0;
    std::size_t rank = 0;  // 1-based rank if within top-N, 0 on miss
    double propensity_target = 0.0;
    double propensity_historical = 0.0;
};

inline constexpr std::size_t kMissRank = 0;

inline double record_propensity(const ActionRecord& r, StratifyMethod method) {
    return method == StratifyMethod::target ? r.propensity_target : r.propensity_historical;
}

// ranks are 1-based with 0 = miss.
inline double hit_rate(const std::vector<std::size_t>& ranks, std::size_t n) {
    if (ranks.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r : ranks) {
        if (r != kMissRank && r <= n) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double mrr(const std::vector<std::size_t>& ranks, std::size_t n) {
    if (ranks.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t r : ranks) {
        if (r != kMissRank && r <= n) sum += 1.0 / static_cast<double>(r);
    }
    return sum / static_cast<double>(ranks.size());
}

inline MetricResult aggregate(const std::vector<ActionRecord>& records,
                              const std::vector<std::size_t>& subset, std::size_t n) {
    MetricResult m;
    m.n = n;
    m.action_count = subset.size();
    for (std::size_t idx : subset) {
        const std::size_t r = records[idx].rank;
        if (r != kMissRank && r <= n) {
            ++m.hits;
            m.rr_sum += 1.0 / static_cast<double>(r);
        }
    }
    if (m.action_count > 0) {
        m.hit_rate = static_cast<double>(m.hits) / static_cast<double>(m.action_count);
        m.mrr = m.rr_sum / static_cast<double>(m.action_count);
    }
    return m;
}

inline MetricResult aggregate_all(const std::vector<ActionRecord>& records, std::size_t n) {
    std::vector<std::size_t> all(records.size());
    std::iota(all.begin(), all.end(), 0);
    return aggregate(records, all, n);
}

struct EvaluateOptions {
    std::size_t n = 20;
    unsigned threads = 1;
};

struct EvaluationResult {
    MetricResult overall;
    std::vector<ActionRecord> records;
    // actions whose score vector was constant (e.g. an empty SKNN
    // neighborhood yields uniform zeros)
    std::size_t constant_score_actions = 0;
};

// Iterative next-item protocol: each test session of length L yields L-1
// actions; the model scores each prefix and the target's rank is cached.
// Sessions are scored in parallel into preallocated slots, so the record
// order (and every float total) is independent of the thread count.
inline EvaluationResult evaluate_model(const Recommender& model,
                                       const std::vector<Session>& test_sessions,
                                       const ItemPropensityTable& table,
                                       const EvaluateOptions& opts) {
    if (test_sessions.empty()) throw DataError("evaluate_model: no test sessions");

    std::vector<std::vector<ActionRecord>> per_session(test_sessions.size());
    std::vector<std::size_t> constant_counts(test_sessions.size(), 0);

    auto run_session = [&](std::size_t si) {
        const auto actions = actions_from_session(test_sessions[si]);
        auto& out = per_session[si];
        out.reserve(actions.size());
        for (std::size_t k = 0; k < actions.size(); ++k) {
            const Action& a = actions[k];
            RankedScores scores;
            try {
                scores = model.score(a.prefix);
            } catch (const std::exception& e) {
                throw DataError("scoring failed on session '" + a.session_id + "' step " +
                                std::to_string(k + 1) + ": " + e.what());
            }
            const auto [lo, hi] = std::minmax_element(scores.values.begin(), scores.values.end());
            if (*lo == *hi) ++constant_counts[si];
            ActionRecord rec;
            rec.session_id = a.session_id;
            rec.step = k + 1;
            rec.target = a.target;
            const std::size_t rank = rank_of(scores, a.target);
            rec.rank = rank <= opts.n ? rank : kMissRank;
            rec.propensity_target = action_propensity_target(a, table);
            rec.propensity_historical = action_propensity_historical(a, table);
            out.push_back(std::move(rec));
        }
    };

    const unsigned workers = std::max(1u, opts.threads);
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

    EvaluationResult result;
    for (std::size_t si = 0; si < per_session.size(); ++si) {
        result.constant_score_actions += constant_counts[si];
        for (auto& rec : per_session[si]) result.records.push_back(std::move(rec));
    }
    result.overall = aggregate_all(result.records, opts.n);
    return result;
}

// ---------------------------------------------------------------------------
// Stratified re-aggregation
// ---------------------------------------------------------------------------

struct StratumMetrics {
    double x = 0.0;
    double cutoff_value = 0.0;
    std::optional<MetricResult> q1;  // null when the stratum is empty
    std::optional<MetricResult> q2;
};

inline StratumMetrics stratified_metrics(const std::vector<ActionRecord>& records,
                                         StratifyMethod method, double x, std::size_t n) {
    std::vector<double> props(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) props[i] = record_propensity(records[i], method);
    const StratumSplit split = stratify(props, x);
    StratumMetrics out;
    out.x = x;
    out.cutoff_value = split.cutoff_value;
    if (!split.q1.empty()) out.q1 = aggregate(records, split.q1, n);
    if (!split.q2.empty()) out.q2 = aggregate(records, split.q2, n);
    return out;
}

// Metric curves over a percentile grid, re-aggregated from cached ranks
// (no re-scoring).
inline std::vector<StratumMetrics> stratified_sweep(const std::vector<ActionRecord>& records,
                                                    StratifyMethod method,
                                                    const std::vector<double>& grid,
                                                    std::size_t n) {
    std::vector<StratumMetrics> out;
    out.reserve(grid.size());
    for (double x : grid) out.push_back(stratified_metrics(records, method, x, n));
    return out;
}

// ---------------------------------------------------------------------------
// Robustness ratio (bottom-10% metric over top-10% metric)
// ---------------------------------------------------------------------------

struct RobustnessRatio {
    MetricResult s1;  // bottom 10% by propensity
    MetricResult s2;  // top 10%
    std::optional<double> hr_ratio;   // null when undefined
    std::optional<double> mrr_ratio;
};

inline RobustnessRatio robustness_ratio(const std::vector<ActionRecord>& records,
                                        StratifyMethod method, std::size_t n) {
    if (records.size() < 20) {
        throw DataError("robustness ratio needs at least 20 actions");
    }
    std::vector<double> props(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) props[i] = record_propensity(records[i], method);
    const StratumSplit bottom = stratify(props, 10.0);
    const StratumSplit top = stratify(props, 90.0);
    RobustnessRatio out;
    out.s1 = aggregate(records, bottom.q1, n);
    out.s2 = aggregate(records, top.q2, n);
    if (out.s1.action_count > 0 && out.s2.action_count > 0) {
        if (out.s2.hit_rate > 0.0) out.hr_ratio = out.s1.hit_rate / out.s2.hit_rate;
        if (out.s2.mrr > 0.0) out.mrr_ratio = out.s1.mrr / out.s2.mrr;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-action record file
// ---------------------------------------------------------------------------

inline void save_action_records(const std::vector<ActionRecord>& records, const ItemVocab& vocab,
                                const std::filesystem::path& path, const std::string& config_line) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "# config: " << config_line << "\n";
    out << "session_id\tstep\ttarget_item\trank_or_miss\tpropensity_target\tpropensity_historical\n";
    for (const auto& r : records) {
        out << r.session_id << '\t' << r.step << '\t' << vocab.id_of(r.target) << '\t';
        if (r.rank == kMissRank) {
            out << "miss";
        } else {
            out << r.rank;
        }
        out << '\t' << detail::fmt_double(r.propensity_target) << '\t'
            << detail::fmt_double(r.propensity_historical) << '\n';
    }
}

inline std::vector<ActionRecord> load_action_records(const std::filesystem::path& path,
                                                     const ItemVocab& vocab) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open action records: " + path.string() +
                        " (run the evaluate command first)");
    }
    std::vector<ActionRecord> records;
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = detail::strip_cr(line);
        if (row.empty() || row.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto f = detail::split(row, '\t');
        if (f.size() != 6) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
        }
        ActionRecord r;
        r.session_id = std::string(f[0]);
        std::int64_t step = 0, rank = 0;
        if (!detail::parse_int64(f[1], step) || step < 1) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad step");
        }
        r.step = static_cast<std::size_t>(step);
        r.target = vocab.index_of(std::string(f[2]));
        if (f[3] == "miss") {
            r.rank = kMissRank;
        } else if (detail::parse_int64(f[3], rank) && rank >= 1) {
            r.rank = static_cast<std::size_t>(rank);
        } else {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad rank");
        }
        if (!detail::parse_double(f[4], r.propensity_target) ||
            !detail::parse_double(f[5], r.propensity_historical)) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad propensity");
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace sessrec
