#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sessrec/ensemble.hpp"
#include "sessrec/errors.hpp"

using namespace sessrec;
using Catch::Approx;

TEST_CASE("score normalization maps to the unit interval") {
    auto n = normalize_scores(RankedScores{{2.0, 4.0}});
    CHECK(n.values == std::vector<double>{0.0, 1.0});

    auto c = normalize_scores(RankedScores{{5.0, 5.0}});
    CHECK(c.values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("score normalization preserves the argsort") {
    std::mt19937_64 gen(61);
    for (int trial = 0; trial < 50; ++trial) {
        RankedScores s;
        for (int i = 0; i < 40; ++i) {
            s.values.push_back((static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.3) * 50.0);
        }
        auto n = normalize_scores(s);
        CHECK(top_n(n, 40) == top_n(s, 40));
        for (auto v : n.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(
        normalize_scores(RankedScores{{1.0, std::numeric_limits<double>::quiet_NaN()}}),
        ContractViolation);
}

TEST_CASE("fixed combine reverses the model roles across the threshold") {
    const RankedScores knn{{0.0, 1.0, 0.5}};
    const RankedScores gru{{1.0, 0.0, 0.25}};
    FixedEnsembleConfig cfg;
    cfg.threshold = 10.0;
    cfg.w2 = 1.0;

    // below the threshold w2 weights the GRU scores
    auto low = fixed_weight_combine(knn, gru, 5.0, cfg);
    CHECK(low.values == gru.values);
    // at or above it the same w2 weights SKNN
    auto high = fixed_weight_combine(knn, gru, 10.0, cfg);
    CHECK(high.values == knn.values);

    cfg.w2 = 0.8;
    auto mixed = fixed_weight_combine(knn, gru, 5.0, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(mixed.values[i] ==
              Approx(0.8 * gru.values[i] + 0.2 * knn.values[i]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(fixed_weight_combine(RankedScores{{1.0}}, gru, 5.0, cfg),
                    ContractViolation);
    FixedEnsembleConfig bad;
    bad.w2 = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fixed combine with equal weights ignores the threshold") {
    std::mt19937_64 gen(67);
    RankedScores knn, gru;
    for (int i = 0; i < 30; ++i) {
        knn.values.push_back(static_cast<double>(gen() % 100) / 100.0);
        gru.values.push_back(static_cast<double>(gen() % 100) / 100.0);
    }
    FixedEnsembleConfig a;
    a.threshold = 1.0;
    a.w2 = 0.5;
    FixedEnsembleConfig b;
    b.threshold = 1000.0;
    b.w2 = 0.5;
    auto low = fixed_weight_combine(knn, gru, 50.0, a);
    auto high = fixed_weight_combine(knn, gru, 50.0, b);
    CHECK(low.values == high.values);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(low.values[i] == Approx((knn.values[i] + gru.values[i]) / 2.0).epsilon(1e-15));
    }
}

TEST_CASE("combined scores conserve weight and interpolate") {
    std::mt19937_64 gen(71);
    DynamicEnsembleConfig dyn;
    dyn.alpha = 0.5;
    dyn.p_mean_hat = 1.0;
    dyn.p_std_hat = 2.0;
    FixedEnsembleConfig fixed;
    fixed.threshold = 3.0;
    fixed.w2 = 0.7;
    for (int trial = 0; trial < 100; ++trial) {
        RankedScores knn, gru;
        for (int i = 0; i < 10; ++i) {
            knn.values.push_back(static_cast<double>(gen() % 1000) / 1000.0);
            gru.values.push_back(static_cast<double>(gen() % 1000) / 1000.0);
        }
        const double p = static_cast<double>(gen() % 1000) / 10.0;

        auto [w1, w2] = dynamic_weights(p, dyn);
        CHECK(w1 + w2 == 1.0);
        CHECK(w1 > 0.0);
        CHECK(w1 < 1.0);

        for (const auto& combined : {fixed_weight_combine(knn, gru, p, fixed),
                                     dynamic_weight_combine(knn, gru, p, dyn)}) {
            for (std::size_t i = 0; i < 10; ++i) {
                const double lo = std::min(knn.values[i], gru.values[i]);
                const double hi = std::max(knn.values[i], gru.values[i]);
                CHECK(combined.values[i] >= lo - 1e-15);
                CHECK(combined.values[i] <= hi + 1e-15);
            }
        }
    }
}

TEST_CASE("dynamic weights at the sigmoid midpoint") {
    DynamicEnsembleConfig cfg;
    cfg.alpha = 0.7;
    cfg.p_mean_hat = 0.0;
    cfg.p_std_hat = 1.0;
    // log(p + eps) = -alpha puts the sigmoid exactly at 1/2
    const double p = std::exp(-0.7) - DynamicEnsembleConfig::epsilon;
    auto [w1, w2] = dynamic_weights(p, cfg);
    CHECK(w1 == Approx(0.5).margin(1e-9));
    CHECK(w2 == Approx(0.5).margin(1e-9));
}

TEST_CASE("dynamic weights hand value at log term one") {
    DynamicEnsembleConfig cfg;
    cfg.alpha = 0.0;
    cfg.p_mean_hat = 0.0;
    cfg.p_std_hat = 1.0;
    const double p = std::exp(1.0) - DynamicEnsembleConfig::epsilon;
    auto [w1, w2] = dynamic_weights(p, cfg);
    CHECK(w1 == Approx(1.0 / (1.0 + std::exp(1.0))).margin(1e-9));
    CHECK(w1 == Approx(0.2689).margin(1e-4));
    CHECK(w2 == Approx(1.0 - w1).epsilon(0));
}

TEST_CASE("dynamic gate is strictly decreasing in propensity") {
    DynamicEnsembleConfig cfg;
    cfg.alpha = -1.25;
    cfg.p_mean_hat = 2.0;
    cfg.p_std_hat = 0.7;
    double prev = 2.0;
    for (int i = 0; i < 1000; ++i) {
        const double p = 0.001 * std::pow(1.03, i);
        auto [w1, w2] = dynamic_weights(p, cfg);
        CHECK(w1 < prev);
        prev = w1;
    }
    // limits: huge propensity starves the GRU weight, tiny propensity feeds it
    CHECK(dynamic_weights(1e12, cfg).first < 1e-6);
    CHECK(dynamic_weights(0.0, cfg).first > 1.0 - 1e-6);
}

TEST_CASE("dynamic combine blends toward the GRU scores at low propensity") {
    const RankedScores knn{{0.9, 0.1, 0.4}};
    const RankedScores gru{{0.2, 0.8, 0.6}};
    DynamicEnsembleConfig cfg;
    cfg.alpha = 0.0;
    cfg.p_mean_hat = 0.0;
    cfg.p_std_hat = 1.0;

    auto near_gru = dynamic_weight_combine(knn, gru, 0.0, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(near_gru.values[i] == Approx(gru.values[i]).margin(1e-6));
    }

    // midpoint: arithmetic mean
    const double p_mid = std::exp(0.0) - DynamicEnsembleConfig::epsilon;
    auto mid = dynamic_weight_combine(knn, gru, p_mid, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(mid.values[i] == Approx((knn.values[i] + gru.values[i]) / 2.0).margin(1e-9));
    }

    CHECK_THROWS_AS(dynamic_weight_combine(knn, gru, -1.0, cfg), ContractViolation);
    DynamicEnsembleConfig bad;
    bad.p_std_hat = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("log stats over training propensities") {
    auto stats = estimate_log_stats({1.0, std::exp(2.0)});
    CHECK(stats.mean == Approx(1.0).margin(1e-7));
    CHECK(stats.stddev == Approx(std::sqrt(2.0)).margin(1e-7));

    auto again = estimate_log_stats({1.0, std::exp(2.0)});
    CHECK(stats.mean == again.mean);
    CHECK(stats.stddev == again.stddev);

    CHECK_THROWS_AS(estimate_log_stats({2.71828, 2.71828}), DataError);
    CHECK_THROWS_AS(estimate_log_stats({1.0}), DataError);
}

TEST_CASE("alpha grid spans [-3, 3] in quarter steps") {
    auto grid = alpha_grid();
    REQUIRE(grid.size() == 25);
    CHECK(grid.front() == -3.0);
    CHECK(grid.back() == 3.0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(grid[i] - grid[i - 1] == Approx(0.25).epsilon(0));
    }
}
