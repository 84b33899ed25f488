#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/errors.hpp"

namespace sessrec {

struct FitDiagnostics {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n_items = 0;
};

struct PowerLawParams {
    double gamma = 1.0;
    double exponent = 1.0;  // (gamma + 1) / 2
    std::optional<FitDiagnostics> fit;

    static PowerLawParams fixed(double gamma) {
        if (!std::isfinite(gamma) || gamma < 0.0) {
            throw ConfigError("gamma must be finite and >= 0");
        }
        PowerLawParams p;
        p.gamma = gamma;
        p.exponent = (gamma + 1.0) / 2.0;
        return p;
    }
};

struct ItemPropensityTable {
    std::vector<double> values;  // indexed by ItemIndex
    PowerLawParams params;
};

// OLS on the log-log frequency-rank curve; the slope magnitude is gamma.
inline PowerLawParams fit_gamma(const std::vector<std::int64_t>& item_counts) {
    if (item_counts.size() < 10) {
        throw DataError("gamma fit needs at least 10 distinct items, got " +
                        std::to_string(item_counts.size()));
    }
    std::vector<std::int64_t> sorted = item_counts;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (sorted.back() < 1) throw DataError("gamma fit requires positive item counts");
    if (sorted.front() == sorted.back()) {
        throw DataError("gamma fit is degenerate: all item counts are equal");
    }

    const auto n = static_cast<double>(sorted.size());
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs(sorted.size()), ys(sorted.size());
    for (std::size_t r = 0; r < sorted.size(); ++r) {
        xs[r] = std::log(static_cast<double>(r + 1));
        ys[r] = std::log(static_cast<double>(sorted[r]));
        sx += xs[r];
        sy += ys[r];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t r = 0; r < sorted.size(); ++r) {
        const double dx = xs[r] - mx, dy = ys[r] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (syy <= 0.0) {
        throw DataError("gamma fit is degenerate: all item counts are equal");
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t r = 0; r < sorted.size(); ++r) {
        const double e = ys[r] - (intercept + slope * xs[r]);
        ss_res += e * e;
    }
    PowerLawParams p = PowerLawParams::fixed(std::abs(slope));
    p.fit = FitDiagnostics{slope, intercept, 1.0 - ss_res / syy, sorted.size()};
    return p;
}

inline ItemPropensityTable item_propensity(const std::vector<std::int64_t>& item_counts,
                                           const PowerLawParams& params) {
    ItemPropensityTable table;
    table.params = params;
    table.values.resize(item_counts.size());
    for (std::size_t i = 0; i < item_counts.size(); ++i) {
        if (item_counts[i] < 1) {
            throw ContractViolation("item_propensity requires counts >= 1");
        }
        table.values[i] = std::pow(static_cast<double>(item_counts[i]), params.exponent);
    }
    return table;
}

inline double action_propensity_target(const Action& action, const ItemPropensityTable& table) {
    if (action.target < 0 || static_cast<std::size_t>(action.target) >= table.values.size()) {
        throw DataError("action target is not in the propensity table");
    }
    return table.values[static_cast<std::size_t>(action.target)];
}

inline double action_propensity_historical(const Action& action, const ItemPropensityTable& table) {
    if (action.prefix.empty()) {
        throw DataError("historical propensity needs a non-empty prefix");
    }
    double sum = 0.0;
    for (ItemIndex i : action.prefix) {
        if (i < 0 || static_cast<std::size_t>(i) >= table.values.size()) {
            throw DataError("prefix item is not in the propensity table");
        }
        sum += table.values[static_cast<std::size_t>(i)];
    }
    return sum / static_cast<double>(action.prefix.size());
}

enum class StratifyMethod { target, historical };

inline double action_propensity(const Action& action, const ItemPropensityTable& table,
                                StratifyMethod method) {
    return method == StratifyMethod::target ? action_propensity_target(action, table)
                                            : action_propensity_historical(action, table);
}

struct StratumSplit {
    double cutoff_percentile = 0.0;
    double cutoff_value = 0.0;
    std::vector<std::size_t> q1;  // propensity < cutoff_value
    std::vector<std::size_t> q2;  // complement
};

// Nearest-rank percentile of a sample: the value at rank ceil(x*n/100),
// clamped to rank 1 so x=0 selects the minimum (and yields an empty Q1).
inline double percentile_nearest_rank(std::vector<double> values, double x) {
    if (values.empty()) throw ContractViolation("percentile of empty sample");
    if (!(x >= 0.0) || x > 100.0) throw ConfigError("percentile must be in [0,100]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(x * n / 100.0));
    rank = std::max<std::size_t>(rank, 1);
    rank = std::min<std::size_t>(rank, values.size());
    return values[rank - 1];
}

inline StratumSplit stratify(const std::vector<double>& action_propensities, double x) {
    if (action_propensities.size() < 2) {
        throw DataError("stratification needs at least 2 actions");
    }
    StratumSplit split;
    split.cutoff_percentile = x;
    split.cutoff_value = percentile_nearest_rank(action_propensities, x);
    for (std::size_t i = 0; i < action_propensities.size(); ++i) {
        (action_propensities[i] < split.cutoff_value ? split.q1 : split.q2).push_back(i);
    }
    return split;
}

struct CorrelationResult {
    double r = 0.0;
    // (log10 target propensity, log10 historical-mean propensity) per action
    std::vector<std::pair<double, double>> points;
};

inline CorrelationResult strata_correlation(const std::vector<Action>& actions,
                                            const ItemPropensityTable& table) {
    if (actions.size() < 2) throw DataError("correlation needs at least 2 actions");
    CorrelationResult out;
    out.points.reserve(actions.size());
    for (const auto& a : actions) {
        out.points.emplace_back(std::log10(action_propensity_target(a, table)),
                                std::log10(action_propensity_historical(a, table)));
    }
    const auto n = static_cast<double>(out.points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : out.points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& [x, y] : out.points) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw NumericError("correlation undefined: a propensity series has zero variance");
    }
    out.r = sxy / std::sqrt(sxx * syy);
    return out;
}

struct Histogram {
    double lo = 0.0;        // left edge of the first bin (log10 units)
    double bin_width = 0.0;
    std::vector<std::int64_t> counts;
};

// Histogram of log10 propensities; total mass equals the number of items.
inline Histogram log_propensity_histogram(const ItemPropensityTable& table, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("histogram needs at least 1 bin");
    if (table.values.empty()) throw DataError("histogram of empty propensity table");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : table.values) {
        if (v <= 0.0) throw ContractViolation("propensities must be positive");
        const double lv = std::log10(v);
        lo = std::min(lo, lv);
        hi = std::max(hi, lv);
    }
    Histogram h;
    h.lo = lo;
    h.bin_width = hi > lo ? (hi - lo) / static_cast<double>(n_bins) : 1.0;
    h.counts.assign(n_bins, 0);
    for (double v : table.values) {
        auto b = static_cast<std::size_t>((std::log10(v) - lo) / h.bin_width);
        b = std::min(b, n_bins - 1);
        ++h.counts[b];
    }
    return h;
}

}  // namespace sessrec
