#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/errors.hpp"

namespace sessrec {

using ItemIndex = std::int32_t;

// One row of a raw session log.
struct InteractionEvent {
    std::string session_id;
    std::string item_id;
    double timestamp = 0.0;  // seconds since epoch
};

// Post-preprocessing session. Item ids are dense vocabulary indices;
// `timestamps` runs parallel to `items` and is retained for snapshots
// and recency ordering.
struct Session {
    std::string session_id;
    std::vector<ItemIndex> items;
    std::vector<double> timestamps;
    double start_time = 0.0;
};

// One evaluation step: a revealed prefix and the next item to predict.
// `propensity` is zero until filled by the propensity stage.
struct Action {
    std::string session_id;
    std::vector<ItemIndex> prefix;
    ItemIndex target = 0;
    double propensity = 0.0;
};

// Per-item prediction scores over the training vocabulary.
struct RankedScores {
    std::vector<double> values;
};

// Item ids are opaque strings at the boundary; indices are assigned in
// ascending lexicographic id order, so index order == id order and the
// ranking tie-break below is portable across runs and languages.
class ItemVocab {
public:
    ItemVocab() = default;

    static ItemVocab from_ids(std::vector<std::string> ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        ItemVocab v;
        v.ids_ = std::move(ids);
        v.index_.reserve(v.ids_.size());
        for (std::size_t i = 0; i < v.ids_.size(); ++i) {
            v.index_.emplace(v.ids_[i], static_cast<ItemIndex>(i));
        }
        return v;
    }

    std::optional<ItemIndex> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    ItemIndex index_of(const std::string& id) const {
        auto idx = find(id);
        if (!idx) throw DataError("unknown item id: " + id);
        return *idx;
    }

    const std::string& id_of(ItemIndex i) const {
        if (i < 0 || static_cast<std::size_t>(i) >= ids_.size()) {
            throw DataError("item index out of range: " + std::to_string(i));
        }
        return ids_[static_cast<std::size_t>(i)];
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, ItemIndex> index_;
};

struct Dataset {
    ItemVocab vocab;
    std::vector<Session> train_sessions;
    std::vector<Session> test_sessions;
    std::vector<std::int64_t> item_counts;  // training-partition occurrence counts, per vocab index
};

// Iterative revealing: session [i1..iL] yields L-1 actions, action k
// predicting item k+1 from the first k items.
inline std::vector<Action> actions_from_session(const Session& session) {
    if (session.items.size() < 2) {
        throw DataError("session '" + session.session_id + "' has fewer than 2 items");
    }
    std::vector<Action> actions;
    actions.reserve(session.items.size() - 1);
    for (std::size_t k = 1; k < session.items.size(); ++k) {
        Action a;
        a.session_id = session.session_id;
        a.prefix.assign(session.items.begin(), session.items.begin() + static_cast<std::ptrdiff_t>(k));
        a.target = session.items[k];
        actions.push_back(std::move(a));
    }
    return actions;
}

// Highest-score items, descending; ties broken by ascending item index
// (== ascending item id). Returns fewer than n only when the vocabulary
// is smaller than n.
inline std::vector<ItemIndex> top_n(const RankedScores& scores, std::size_t n) {
    if (n < 1) throw ContractViolation("top_n requires n >= 1");
    const auto& v = scores.values;
    std::vector<ItemIndex> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&v](ItemIndex a, ItemIndex b) {
        if (v[static_cast<std::size_t>(a)] != v[static_cast<std::size_t>(b)])
            return v[static_cast<std::size_t>(a)] > v[static_cast<std::size_t>(b)];
        return a < b;
    };
    if (n >= idx.size()) {
        std::sort(idx.begin(), idx.end(), better);
        return idx;
    }
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), better);
    idx.resize(n);
    return idx;
}

// 1-based rank of `target` under the same ordering as top_n, computed
// without sorting the vocabulary.
inline std::size_t rank_of(const RankedScores& scores, ItemIndex target) {
    const auto& v = scores.values;
    if (target < 0 || static_cast<std::size_t>(target) >= v.size()) {
        throw ContractViolation("rank_of: target outside vocabulary");
    }
    const double t = v[static_cast<std::size_t>(target)];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] > t) ++rank;
        else if (v[j] == t && static_cast<ItemIndex>(j) < target) ++rank;
    }
    return rank;
}

}  // namespace sessrec
