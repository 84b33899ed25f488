#pragma once

#include <cstddef>
#include <vector>

#include "sessrec/core.hpp"

namespace sessrec {

// Common scoring contract for trained models. score() must be a pure,
// deterministic function of the model and the prefix, and must cover the
// full training vocabulary so rankings are comparable across models.
class Recommender {
public:
    virtual ~Recommender() = default;
    virtual RankedScores score(const std::vector<ItemIndex>& prefix) const = 0;
    virtual std::size_t vocab_size() const = 0;
};

}  // namespace sessrec
