#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/errors.hpp"

namespace sessrec {

// Min-max normalization to [0,1]; a constant vector maps to all zeros.
// Makes the two models' score scales commensurate before averaging.
inline RankedScores normalize_scores(const RankedScores& scores) {
    RankedScores out;
    out.values.resize(scores.values.size());
    if (scores.values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(scores.values.begin(), scores.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(std::isfinite(lo) && std::isfinite(hi))) {
        throw ContractViolation("normalize_scores requires finite scores");
    }
    if (hi == lo) return out;
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < scores.values.size(); ++i) {
        out.values[i] = (scores.values[i] - lo) * inv;
    }
    return out;
}

struct FixedEnsembleConfig {
    double threshold = 0.0;  // propensity cutoff, e.g. the 10% percentile value
    double w2 = 0.8;         // weight of GRU4REC below the threshold, of SKNN above

    void validate() const {
        if (!(w2 >= 0.0) || w2 > 1.0) throw ConfigError("ensemble w2 must be in [0,1]");
        if (!std::isfinite(threshold)) throw ConfigError("ensemble threshold must be finite");
    }
};

// Inputs must be normalized score vectors over the same vocabulary. The
// weight roles flip at the threshold: GRU4REC gets w2 on low-propensity
// actions, SKNN gets w2 on the rest.
inline RankedScores fixed_weight_combine(const RankedScores& s_knn, const RankedScores& s_gru,
                                         double action_propensity,
                                         const FixedEnsembleConfig& config) {
    if (s_knn.values.size() != s_gru.values.size()) {
        throw ContractViolation("fixed_weight_combine: vocabulary size mismatch");
    }
    const bool low = action_propensity < config.threshold;
    const double w_gru = low ? config.w2 : 1.0 - config.w2;
    const double w_knn = 1.0 - w_gru;
    RankedScores out;
    out.values.resize(s_knn.values.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = w_gru * s_gru.values[i] + w_knn * s_knn.values[i];
    }
    return out;
}

struct DynamicEnsembleConfig {
    double alpha = 0.0;       // sigmoid shift, grid-searched on validation HR
    double p_mean_hat = 0.0;  // mean of log propensity over training actions
    double p_std_hat = 1.0;   // sample std of the same
    static constexpr double epsilon = 1e-9;

    void validate() const {
        if (!(p_std_hat > 0.0)) throw ConfigError("ensemble p_std_hat must be positive");
        if (!std::isfinite(alpha) || !std::isfinite(p_mean_hat) || !std::isfinite(p_std_hat)) {
            throw ConfigError("ensemble dynamic parameters must be finite");
        }
    }
};

// w1 = sigmoid of the negated, shifted log-normalized propensity; w2 = 1−w1.
// w1 weights GRU4REC so it dominates on low-propensity actions, matching
// the fixed scheme's strata roles.
inline std::pair<double, double> dynamic_weights(double action_propensity,
                                                 const DynamicEnsembleConfig& config) {
    if (!(action_propensity >= 0.0)) {
        throw ContractViolation("dynamic_weights requires non-negative propensity");
    }
    const double p_norm =
        (std::log(action_propensity + DynamicEnsembleConfig::epsilon) - config.p_mean_hat) /
        config.p_std_hat;
    const double w1 = 1.0 / (1.0 + std::exp(p_norm + config.alpha));
    return {w1, 1.0 - w1};
}

inline RankedScores dynamic_weight_combine(const RankedScores& s_knn, const RankedScores& s_gru,
                                           double action_propensity,
                                           const DynamicEnsembleConfig& config) {
    if (s_knn.values.size() != s_gru.values.size()) {
        throw ContractViolation("dynamic_weight_combine: vocabulary size mismatch");
    }
    const auto [w1, w2] = dynamic_weights(action_propensity, config);
    RankedScores out;
    out.values.resize(s_knn.values.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = w1 * s_gru.values[i] + w2 * s_knn.values[i];
    }
    return out;
}

struct LogStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, n-1 denominator
};

// Mean and std of log(p + eps) over training-action propensities; the test
// items fully overlap the training vocabulary, so training actions stand in
// for the unseen test distribution.
inline LogStats estimate_log_stats(const std::vector<double>& train_propensities) {
    if (train_propensities.size() < 2) {
        throw DataError("log-propensity stats need at least 2 training actions");
    }
    const auto n = static_cast<double>(train_propensities.size());
    double sum = 0.0;
    std::vector<double> logs(train_propensities.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
        logs[i] = std::log(train_propensities[i] + DynamicEnsembleConfig::epsilon);
        sum += logs[i];
    }
    LogStats stats;
    stats.mean = sum / n;
    double ss = 0.0;
    for (double v : logs) ss += (v - stats.mean) * (v - stats.mean);
    if (ss <= 0.0) {
        throw DataError("log propensities have zero variance; dynamic ensemble unavailable");
    }
    stats.stddev = std::sqrt(ss / (n - 1.0));
    return stats;
}

// Search grid for the sigmoid shift.
inline std::vector<double> alpha_grid() {
    std::vector<double> grid;
    for (int i = -12; i <= 12; ++i) grid.push_back(static_cast<double>(i) * 0.25);
    return grid;
}

}  // namespace sessrec
