#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/recommender.hpp"
#include "sessrec/sknn.hpp"

namespace testutil {

// Unique scratch directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        static const unsigned run_tag = std::random_device{}();
        path_ = std::filesystem::temp_directory_path() /
                ("sessrec_" + tag + "_" + std::to_string(run_tag) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    out << body;
}

// Zero-padded ids so lexicographic vocabulary order equals numeric order
// and dense index i names item id_of(i).
inline std::string item_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "i%05d", i);
    return buf;
}

// Inverse-CDF sampler over P(i) proportional to (i+1)^-s.
class ZipfSampler {
public:
    ZipfSampler(std::size_t n_items, double s, std::uint64_t seed) : gen_(seed) {
        cdf_.resize(n_items);
        double acc = 0.0;
        for (std::size_t i = 0; i < n_items; ++i) {
            acc += std::pow(static_cast<double>(i + 1), -s);
            cdf_[i] = acc;
        }
        for (auto& v : cdf_) v /= acc;
    }

    sessrec::ItemIndex draw() {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        return static_cast<sessrec::ItemIndex>(it - cdf_.begin());
    }

private:
    std::mt19937_64 gen_;
    std::vector<double> cdf_;
};

inline sessrec::Session make_session(const std::string& id,
                                     const std::vector<sessrec::ItemIndex>& items,
                                     double start = 0.0) {
    sessrec::Session s;
    s.session_id = id;
    s.items = items;
    s.timestamps.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) s.timestamps[i] = start + static_cast<double>(i);
    s.start_time = start;
    return s;
}

struct SyntheticDataset {
    sessrec::Dataset ds;
    std::vector<std::int64_t> counts_all;  // including test, for reference
};

// Sessions of Zipf-popular items; the last `n_test` sessions form the test
// partition. Counts follow the library convention (training only).
inline sessrec::Dataset make_zipf_dataset(std::size_t n_sessions, std::size_t n_items,
                                          std::size_t n_test, std::size_t min_len,
                                          std::size_t max_len, double s, std::uint64_t seed) {
    ZipfSampler zipf(n_items, s, seed);
    std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ull);
    sessrec::Dataset ds;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n_items; ++i) ids.push_back(item_id(static_cast<int>(i)));
    ds.vocab = sessrec::ItemVocab::from_ids(ids);
    ds.item_counts.assign(n_items, 0);
    for (std::size_t k = 0; k < n_sessions; ++k) {
        const std::size_t len = min_len + gen() % (max_len - min_len + 1);
        std::vector<sessrec::ItemIndex> items;
        for (std::size_t j = 0; j < len; ++j) items.push_back(zipf.draw());
        auto sess = make_session("s" + std::to_string(k), items, static_cast<double>(k) * 100.0);
        if (k + n_test < n_sessions) {
            for (auto i : sess.items) ++ds.item_counts[static_cast<std::size_t>(i)];
            ds.train_sessions.push_back(std::move(sess));
        } else {
            ds.test_sessions.push_back(std::move(sess));
        }
    }
    // Every item must carry a positive training count for propensity work;
    // top up missing items with a filler session.
    std::vector<sessrec::ItemIndex> missing;
    for (std::size_t i = 0; i < n_items; ++i) {
        if (ds.item_counts[i] == 0) missing.push_back(static_cast<sessrec::ItemIndex>(i));
    }
    if (!missing.empty()) {
        if (missing.size() == 1) missing.push_back(0);
        auto filler = make_session("filler", missing, -100.0);
        for (auto i : filler.items) ++ds.item_counts[static_cast<std::size_t>(i)];
        ds.train_sessions.insert(ds.train_sessions.begin(), std::move(filler));
    }
    return ds;
}

// Scores every item by its training count.
class PopularityModel : public sessrec::Recommender {
public:
    explicit PopularityModel(std::vector<std::int64_t> counts) : counts_(std::move(counts)) {}
    sessrec::RankedScores score(const std::vector<sessrec::ItemIndex>&) const override {
        sessrec::RankedScores s;
        s.values.reserve(counts_.size());
        for (auto c : counts_) s.values.push_back(static_cast<double>(c));
        return s;
    }
    std::size_t vocab_size() const override { return counts_.size(); }

private:
    std::vector<std::int64_t> counts_;
};

// Puts (last prefix item + 1) mod vocab at rank 1; a perfect oracle on
// consecutive-index sessions.
class StepModel : public sessrec::Recommender {
public:
    explicit StepModel(std::size_t vocab) : vocab_(vocab) {}
    sessrec::RankedScores score(const std::vector<sessrec::ItemIndex>& prefix) const override {
        sessrec::RankedScores s;
        s.values.assign(vocab_, 0.0);
        const auto next = static_cast<std::size_t>(prefix.back() + 1) % vocab_;
        s.values[next] = 1.0;
        return s;
    }
    std::size_t vocab_size() const override { return vocab_; }

private:
    std::size_t vocab_;
};

// Constant scores: every target lands at rank target+1 via the index
// tie-break, so targets with index >= N are guaranteed misses.
class ConstantModel : public sessrec::Recommender {
public:
    explicit ConstantModel(std::size_t vocab) : vocab_(vocab) {}
    sessrec::RankedScores score(const std::vector<sessrec::ItemIndex>&) const override {
        sessrec::RankedScores s;
        s.values.assign(vocab_, 0.0);
        return s;
    }
    std::size_t vocab_size() const override { return vocab_; }

private:
    std::size_t vocab_;
};

// ---------------------------------------------------------------------------
// Independent evaluation oracle: full sort per action, linear membership
// scan, long-double accumulation. Shares no code with evaluate_model.
// ---------------------------------------------------------------------------

struct OracleMetrics {
    double hr = 0.0;
    double mrr = 0.0;
    std::size_t actions = 0;
};

inline OracleMetrics oracle_evaluate(const sessrec::Recommender& model,
                                     const std::vector<sessrec::Session>& test_sessions,
                                     std::size_t n) {
    long double hit_total = 0.0L;
    long double rr_total = 0.0L;
    std::size_t count = 0;
    for (const auto& sess : test_sessions) {
        for (std::size_t k = 1; k < sess.items.size(); ++k) {
            std::vector<sessrec::ItemIndex> prefix(sess.items.begin(),
                                                   sess.items.begin() + static_cast<std::ptrdiff_t>(k));
            const auto scores = model.score(prefix);
            std::vector<std::pair<double, sessrec::ItemIndex>> order;
            order.reserve(scores.values.size());
            for (std::size_t i = 0; i < scores.values.size(); ++i) {
                order.emplace_back(scores.values[i], static_cast<sessrec::ItemIndex>(i));
            }
            std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            const auto limit = std::min(n, order.size());
            for (std::size_t pos = 0; pos < limit; ++pos) {
                if (order[pos].second == sess.items[k]) {
                    hit_total += 1.0L;
                    rr_total += 1.0L / static_cast<long double>(pos + 1);
                    break;
                }
            }
            ++count;
        }
    }
    OracleMetrics m;
    m.actions = count;
    if (count > 0) {
        m.hr = static_cast<double>(hit_total / static_cast<long double>(count));
        m.mrr = static_cast<double>(rr_total / static_cast<long double>(count));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Exhaustive-scan SKNN oracle: no inverted index, no partial sorts. Applies
// the same recency and neighbor tie rules as the library so score vectors
// match bit for bit.
// ---------------------------------------------------------------------------

inline std::vector<double> oracle_sknn_score(const sessrec::SknnConfig& cfg,
                                             const std::vector<sessrec::Session>& train,
                                             std::size_t vocab_size,
                                             const std::vector<sessrec::ItemIndex>& prefix) {
    std::vector<sessrec::ItemIndex> pset = prefix;
    std::sort(pset.begin(), pset.end());
    pset.erase(std::unique(pset.begin(), pset.end()), pset.end());

    struct Cand {
        std::size_t slot;
        double start;
        std::vector<sessrec::ItemIndex> set;
        double sim;
    };
    std::vector<Cand> cands;
    for (std::size_t slot = 0; slot < train.size(); ++slot) {
        std::vector<sessrec::ItemIndex> set = train[slot].items;
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        bool overlap = false;
        for (auto i : pset) {
            if (std::binary_search(set.begin(), set.end(), i)) {
                overlap = true;
                break;
            }
        }
        if (overlap) cands.push_back({slot, train[slot].start_time, std::move(set), 0.0});
    }

    std::vector<double> out(vocab_size, 0.0);
    if (cands.empty()) return out;

    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.start != b.start) return a.start > b.start;
        return a.slot > b.slot;
    });
    if (cands.size() > static_cast<std::size_t>(cfg.sample_size)) {
        cands.resize(static_cast<std::size_t>(cfg.sample_size));
    }
    for (auto& c : cands) c.sim = sessrec::session_similarity(pset, c.set, cfg.similarity);
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.start != b.start) return a.start > b.start;
        return a.slot > b.slot;
    });
    if (cands.size() > static_cast<std::size_t>(cfg.k)) cands.resize(static_cast<std::size_t>(cfg.k));

    for (const auto& c : cands) {
        for (auto item : c.set) {
            out[static_cast<std::size_t>(item)] +=
                cfg.neighbor_item_scoring == sessrec::NeighborItemScoring::similarity_sum ? c.sim : 1.0;
        }
    }
    for (auto i : pset) {
        if (cfg.exclude_prefix_items) out[static_cast<std::size_t>(i)] = -1.0;
    }
    return out;
}

// Textbook computational form of the Pearson coefficient.
inline double oracle_pearson(const std::vector<std::pair<double, double>>& pts) {
    const auto n = static_cast<long double>(pts.size());
    long double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (const auto& [x, y] : pts) {
        sx += x;
        sy += y;
        sxy += static_cast<long double>(x) * y;
        sxx += static_cast<long double>(x) * x;
        syy += static_cast<long double>(y) * y;
    }
    return static_cast<double>((n * sxy - sx * sy) /
                               std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

}  // namespace testutil
