#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/errors.hpp"
#include "sessrec/recommender.hpp"

namespace sessrec {

enum class Similarity { cosine, jaccard };
enum class NeighborItemScoring { similarity_sum, popularity_in_neighborhood };

struct SknnConfig {
    int k = 100;
    int sample_size = 500;
    Similarity similarity = Similarity::cosine;
    NeighborItemScoring neighbor_item_scoring = NeighborItemScoring::similarity_sum;
    bool exclude_prefix_items = true;

    void validate() const {
        if (k < 1) throw ConfigError("sknn k must be >= 1");
        if (sample_size < 1) throw ConfigError("sknn sample_size must be >= 1");
        if (k > sample_size) throw ConfigError("sknn k must not exceed sample_size");
    }
};

// `s1` and `s2` are item sets given as sorted unique index vectors.
inline double session_similarity(const std::vector<ItemIndex>& s1,
                                 const std::vector<ItemIndex>& s2, Similarity metric) {
    if (s1.empty() || s2.empty()) throw DataError("session similarity of an empty item set");
    std::size_t inter = 0;
    for (std::size_t i = 0, j = 0; i < s1.size() && j < s2.size();) {
        if (s1[i] == s2[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (s1[i] < s2[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const auto n1 = static_cast<double>(s1.size());
    const auto n2 = static_cast<double>(s2.size());
    if (metric == Similarity::jaccard) {
        return static_cast<double>(inter) / (n1 + n2 - static_cast<double>(inter));
    }
    return static_cast<double>(inter) / std::sqrt(n1 * n2);
}

class SknnModel : public Recommender {
public:
    SknnModel() = default;
    SknnModel(SknnConfig config, const std::vector<Session>& train_sessions,
              std::size_t vocab_size) {
        fit(std::move(config), train_sessions, vocab_size);
    }

    void fit(SknnConfig config, const std::vector<Session>& train_sessions,
             std::size_t vocab_size) {
        config.validate();
        if (train_sessions.empty()) throw DataError("sknn fit on empty training partition");
        config_ = config;
        n_items_ = vocab_size;
        item_sets_.clear();
        start_times_.clear();
        item_sets_.reserve(train_sessions.size());
        start_times_.reserve(train_sessions.size());
        for (const auto& s : train_sessions) {
            std::vector<ItemIndex> set = s.items;
            std::sort(set.begin(), set.end());
            set.erase(std::unique(set.begin(), set.end()), set.end());
            item_sets_.push_back(std::move(set));
            start_times_.push_back(s.start_time);
        }
        // Recency rank: ascending (start_time, position in training order),
        // so a larger rank means a more recent session.
        std::vector<std::size_t> order(item_sets_.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
            return start_times_[a] < start_times_[b];
        });
        recency_rank_.resize(item_sets_.size());
        for (std::size_t r = 0; r < order.size(); ++r) recency_rank_[order[r]] = r;

        index_.assign(n_items_, {});
        for (std::size_t slot = 0; slot < item_sets_.size(); ++slot) {
            for (ItemIndex item : item_sets_[slot]) {
                index_[static_cast<std::size_t>(item)].push_back(slot);
            }
        }
    }

    struct ScoreDetail {
        RankedScores scores;
        std::size_t n_candidates = 0;
        std::size_t n_neighbors = 0;
    };

    ScoreDetail score_detailed(const std::vector<ItemIndex>& prefix) const {
        if (prefix.empty()) throw DataError("sknn score on empty prefix");
        std::vector<ItemIndex> prefix_set = prefix;
        std::sort(prefix_set.begin(), prefix_set.end());
        prefix_set.erase(std::unique(prefix_set.begin(), prefix_set.end()), prefix_set.end());

        std::vector<std::size_t> candidates;
        for (ItemIndex item : prefix_set) {
            if (item < 0 || static_cast<std::size_t>(item) >= n_items_) {
                throw DataError("sknn score: prefix item outside vocabulary");
            }
            const auto& slots = index_[static_cast<std::size_t>(item)];
            candidates.insert(candidates.end(), slots.begin(), slots.end());
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

        ScoreDetail out;
        out.scores.values.assign(n_items_, 0.0);
        if (candidates.empty()) return out;  // no overlap anywhere: uniform zeros

        // Most recent sample_size overlapping sessions.
        const auto sample = std::min<std::size_t>(candidates.size(),
                                                  static_cast<std::size_t>(config_.sample_size));
        std::partial_sort(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(sample),
                          candidates.end(), [this](std::size_t a, std::size_t b) {
                              return recency_rank_[a] > recency_rank_[b];
                          });
        candidates.resize(sample);
        out.n_candidates = candidates.size();

        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(candidates.size());
        for (std::size_t slot : candidates) {
            sims.emplace_back(session_similarity(prefix_set, item_sets_[slot], config_.similarity),
                              slot);
        }
        const auto k = std::min<std::size_t>(sims.size(), static_cast<std::size_t>(config_.k));
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                          [this](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return recency_rank_[a.second] > recency_rank_[b.second];
                          });
        sims.resize(k);
        out.n_neighbors = sims.size();

        for (const auto& [sim, slot] : sims) {
            for (ItemIndex item : item_sets_[slot]) {
                out.scores.values[static_cast<std::size_t>(item)] +=
                    config_.neighbor_item_scoring == NeighborItemScoring::similarity_sum ? sim : 1.0;
            }
        }
        if (config_.exclude_prefix_items) {
            // Accumulated scores are >= 0, so any negative value sorts last.
            for (ItemIndex item : prefix_set) {
                out.scores.values[static_cast<std::size_t>(item)] = -1.0;
            }
        }
        return out;
    }

    RankedScores score(const std::vector<ItemIndex>& prefix) const override {
        return score_detailed(prefix).scores;
    }

    std::size_t vocab_size() const override { return n_items_; }
    const SknnConfig& config() const { return config_; }
    std::size_t session_count() const { return item_sets_.size(); }
    const std::vector<ItemIndex>& item_set(std::size_t slot) const { return item_sets_[slot]; }
    double start_time(std::size_t slot) const { return start_times_[slot]; }

private:
    SknnConfig config_;
    std::size_t n_items_ = 0;
    std::vector<std::vector<ItemIndex>> item_sets_;
    std::vector<double> start_times_;
    std::vector<std::size_t> recency_rank_;
    std::vector<std::vector<std::size_t>> index_;  // item -> session slots
};

}  // namespace sessrec
