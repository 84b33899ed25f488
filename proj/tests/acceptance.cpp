// Shipping gate. One test case per criterion; a registered listener prints a
// PASS/FAIL line for each, so running this binary directly yields a checklist.
// Criterion 10 (full public-data reproduction) is informational, not gating.
#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sessrec/cli.hpp"

using namespace sessrec;

namespace {

class AcceptanceReporter : public Catch::EventListenerBase {
public:
    using Catch::EventListenerBase::EventListenerBase;

    void testCaseEnded(const Catch::TestCaseStats& stats) override {
        std::cout << "[acceptance] " << stats.testInfo->name << ": "
                  << (stats.totals.assertions.allOk() ? "PASS" : "FAIL") << std::endl;
    }
};

struct Stopwatch {
    std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    }
};

std::vector<Session> alternating_corpus() {
    std::vector<Session> out;
    for (int k = 0; k < 50; ++k) {
        std::vector<ItemIndex> items;
        for (int j = 0; j < 10; ++j) items.push_back(static_cast<ItemIndex>((j + k) % 2));
        out.push_back(testutil::make_session("s" + std::to_string(k), items, 10.0 * k));
    }
    return out;
}

}  // namespace

CATCH_REGISTER_LISTENER(AcceptanceReporter)

TEST_CASE("criterion 1: metric oracle equivalence") {
    Stopwatch timer;
    auto ds = testutil::make_zipf_dataset(200, 50, 50, 2, 8, 1.1, 20240501);
    const auto table = item_propensity(ds.item_counts, PowerLawParams::fixed(1.0));

    testutil::PopularityModel pop(ds.item_counts);
    SknnConfig sc;
    sc.k = 10;
    sc.sample_size = 30;
    SknnModel knn(sc, ds.train_sessions, ds.vocab.size());

    for (const Recommender* model : {static_cast<const Recommender*>(&pop),
                                     static_cast<const Recommender*>(&knn)}) {
        const auto got = evaluate_model(*model, ds.test_sessions, table, {20, 1});
        const auto want = testutil::oracle_evaluate(*model, ds.test_sessions, 20);
        REQUIRE(got.overall.action_count == want.actions);
        CHECK(std::abs(got.overall.hit_rate - want.hr) <= 1e-12);
        CHECK(std::abs(got.overall.mrr - want.mrr) <= 1e-12);
    }
    CHECK(timer.seconds() < 5.0);
}

TEST_CASE("criterion 2: sknn brute-force equivalence") {
    Stopwatch timer;
    std::mt19937_64 gen(7100);
    std::size_t ranking_mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t vocab = 2 + gen() % 11;
        const std::size_t n_sessions = 1 + gen() % 20;
        std::vector<Session> train;
        for (std::size_t k = 0; k < n_sessions; ++k) {
            std::vector<ItemIndex> items;
            const auto len = 2 + gen() % 6;
            for (std::size_t j = 0; j < len; ++j) {
                items.push_back(static_cast<ItemIndex>(gen() % vocab));
            }
            const double start = static_cast<double>(gen() % (n_sessions / 2 + 1)) * 10.0;
            train.push_back(testutil::make_session("s" + std::to_string(k), items, start));
        }
        SknnConfig c;
        c.k = 1 + static_cast<int>(gen() % 8);
        c.sample_size = c.k + static_cast<int>(gen() % 8);
        c.similarity = (gen() % 2 == 0) ? Similarity::cosine : Similarity::jaccard;
        c.neighbor_item_scoring = (gen() % 2 == 0) ? NeighborItemScoring::similarity_sum
                                                   : NeighborItemScoring::popularity_in_neighborhood;
        c.exclude_prefix_items = gen() % 2 == 0;

        SknnModel model(c, train, vocab);
        std::vector<ItemIndex> prefix;
        const auto plen = 1 + gen() % 4;
        for (std::size_t j = 0; j < plen; ++j) {
            prefix.push_back(static_cast<ItemIndex>(gen() % vocab));
        }
        RankedScores got = model.score(prefix);
        RankedScores want;
        want.values = testutil::oracle_sknn_score(c, train, vocab, prefix);
        REQUIRE(got.values.size() == want.values.size());
        if (top_n(got, vocab) != top_n(want, vocab)) ++ranking_mismatches;
    }
    CHECK(ranking_mismatches == 0);
    CHECK(timer.seconds() < 10.0);
}

TEST_CASE("criterion 3: propensity monotonicity and scale covariance") {
    std::mt19937_64 gen(7300);
    std::size_t order_violations = 0;
    double worst_rel = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + gen() % 39;
        std::vector<std::int64_t> counts(n);
        for (auto& c : counts) c = 1 + static_cast<std::int64_t>(gen() % 1000000);
        const auto scale = static_cast<std::int64_t>(2 + gen() % 8);
        std::vector<std::int64_t> scaled_counts(n);
        for (std::size_t i = 0; i < n; ++i) scaled_counts[i] = counts[i] * scale;

        std::vector<std::size_t> by_count(n);
        std::iota(by_count.begin(), by_count.end(), 0);
        std::sort(by_count.begin(), by_count.end(),
                  [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });

        for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
            const auto params = PowerLawParams::fixed(gamma);
            const auto base = item_propensity(counts, params);
            const auto scaled = item_propensity(scaled_counts, params);
            for (std::size_t i = 1; i < n; ++i) {
                const auto a = by_count[i - 1], b = by_count[i];
                const bool ok = counts[a] == counts[b] ? base.values[a] == base.values[b]
                                                       : base.values[a] < base.values[b];
                if (!ok) ++order_violations;
            }
            const double factor = std::pow(static_cast<double>(scale), params.exponent);
            for (std::size_t i = 0; i < n; ++i) {
                const double expect = factor * base.values[i];
                worst_rel = std::max(worst_rel, std::abs(scaled.values[i] - expect) / expect);
            }
        }
    }
    CHECK(order_violations == 0);
    CHECK(worst_rel <= 1e-12);
}

TEST_CASE("criterion 4: gamma recovery from a seeded zipf sample") {
    Stopwatch timer;
    testutil::ZipfSampler zipf(1000, 1.0, 42);
    std::vector<std::int64_t> counts(1000, 0);
    for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(zipf.draw())];
    std::vector<std::int64_t> observed;
    for (auto c : counts) {
        if (c > 0) observed.push_back(c);
    }
    const auto fit = fit_gamma(observed);
    INFO("fitted gamma " << fit.gamma);
    CHECK(std::abs(fit.gamma - 1.0) <= 0.1);
    CHECK(timer.seconds() < 5.0);
}

TEST_CASE("criterion 5: bpr-max gradient matches central finite differences") {
    std::mt19937_64 gen(7500);
    std::normal_distribution<double> score(0.0, 1.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double h = 1e-4;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n_neg = 1 + gen() % 12;
        const double target = score(gen);
        std::vector<double> negs(n_neg);
        for (auto& v : negs) v = score(gen);
        const double lambda = (t % 2 == 0) ? 0.0 : unit(gen);

        const auto grad = bpr_max_gradient(target, negs, lambda);
        const double fd_target = (bpr_max_loss(target + h, negs, lambda) -
                                  bpr_max_loss(target - h, negs, lambda)) /
                                 (2.0 * h);
        worst = std::max(worst, std::abs(grad.d_target - fd_target));
        for (std::size_t j = 0; j < n_neg; ++j) {
            auto up = negs, down = negs;
            up[j] += h;
            down[j] -= h;
            const double fd = (bpr_max_loss(target, up, lambda) -
                               bpr_max_loss(target, down, lambda)) /
                              (2.0 * h);
            worst = std::max(worst, std::abs(grad.d_negatives[j] - fd));
        }
    }
    INFO("worst component error " << worst);
    CHECK(worst < 1e-5);
}

TEST_CASE("criterion 6: gru4rec learns an alternating pattern") {
    Stopwatch timer;
    auto corpus = alternating_corpus();
    Gru4RecConfig c;
    c.hidden_size = 16;
    c.epochs = 20;
    c.batch_size = 32;
    c.learning_rate = 0.002;
    c.seed = 1;
    Gru4RecModel model(c, corpus, 2);

    std::size_t hits = 0, total = 0;
    for (ItemIndex first : {0, 1}) {
        std::vector<ItemIndex> prefix;
        for (int j = 0; j < 9; ++j) {
            prefix.push_back((first + j) % 2);
            const ItemIndex want = (prefix.back() + 1) % 2;
            if (top_n(model.score(prefix), 1)[0] == want) ++hits;
            ++total;
        }
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.95);

    const auto& losses = model.epoch_losses();
    REQUIRE(losses.size() == 20);
    for (std::size_t e = 1; e < 5; ++e) {
        CHECK(losses[e] <= losses[e - 1] * 1.05);
    }
    CHECK(timer.seconds() < 60.0);
}

TEST_CASE("criterion 7: ensemble weight identities") {
    std::mt19937_64 gen(7700);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t vocab = 30;
    auto rough_scores = [&] {
        RankedScores s;
        s.values.resize(vocab);
        // one-decimal grid forces score ties so argsort equality is non-trivial
        for (auto& v : s.values) v = std::round(unit(gen) * 10.0) / 10.0;
        return s;
    };

    std::size_t argsort_mismatches = 0, halfway_mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto knn = rough_scores();
        const auto gru = rough_scores();
        const double p = 0.5 + 3.5 * unit(gen);
        const double threshold = 0.5 + 3.5 * unit(gen);

        FixedEnsembleConfig favored_cfg{threshold, 1.0};
        const auto combined = fixed_weight_combine(knn, gru, p, favored_cfg);
        const auto& favored = p < threshold ? gru : knn;
        if (top_n(combined, vocab) != top_n(favored, vocab)) ++argsort_mismatches;

        const auto low = fixed_weight_combine(knn, gru, p, FixedEnsembleConfig{1e9, 0.5});
        const auto high = fixed_weight_combine(knn, gru, p, FixedEnsembleConfig{1e-9, 0.5});
        if (low.values != high.values) ++halfway_mismatches;
    }
    CHECK(argsort_mismatches == 0);
    CHECK(halfway_mismatches == 0);

    std::vector<double> sample;
    for (int i = 0; i < 200; ++i) sample.push_back(0.01 + 20.0 * unit(gen));
    DynamicEnsembleConfig dc;
    dc.alpha = -0.5;
    const auto stats = estimate_log_stats(sample);
    dc.p_mean_hat = stats.mean;
    dc.p_std_hat = stats.stddev;

    std::size_t weight_sum_violations = 0, monotonicity_violations = 0;
    double prev_w1 = 2.0;
    for (int i = 0; i < 1000; ++i) {
        const double p = 1e-4 * std::pow(1.02, static_cast<double>(i));
        const auto [w1, w2] = dynamic_weights(p, dc);
        if (w1 + w2 != 1.0) ++weight_sum_violations;
        if (!(w1 < prev_w1)) ++monotonicity_violations;
        prev_w1 = w1;
    }
    CHECK(weight_sum_violations == 0);
    CHECK(monotonicity_violations == 0);
}

TEST_CASE("criterion 8: stratification accounting") {
    auto ds = testutil::make_zipf_dataset(150, 40, 40, 2, 8, 1.2, 20240808);
    const auto table = item_propensity(ds.item_counts, PowerLawParams::fixed(1.0));
    testutil::PopularityModel pop(ds.item_counts);
    const auto result = evaluate_model(pop, ds.test_sessions, table, {20, 1});
    REQUIRE(result.records.size() >= 20);

    const std::vector<double> grid = {5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 100.0};
    std::size_t count_violations = 0, hit_violations = 0, rate_violations = 0;
    for (auto method : {StratifyMethod::target, StratifyMethod::historical}) {
        for (const auto& point : stratified_sweep(result.records, method, grid, 20)) {
            const std::size_t n1 = point.q1 ? point.q1->action_count : 0;
            const std::size_t n2 = point.q2 ? point.q2->action_count : 0;
            const std::size_t h1 = point.q1 ? point.q1->hits : 0;
            const std::size_t h2 = point.q2 ? point.q2->hits : 0;
            if (n1 + n2 != result.records.size()) ++count_violations;
            if (h1 + h2 != result.overall.hits) ++hit_violations;
            // each stratum's rate is exactly its integer numerator over its count,
            // so the integer identities above are the exact weighted decomposition
            for (const auto& part : {point.q1, point.q2}) {
                if (!part) continue;
                const double expect = static_cast<double>(part->hits) /
                                      static_cast<double>(part->action_count);
                if (part->hit_rate != expect) ++rate_violations;
            }
        }
    }
    CHECK(count_violations == 0);
    CHECK(hit_violations == 0);
    CHECK(rate_violations == 0);
}

TEST_CASE("criterion 9: bit-identical artifacts across pipeline reruns") {
    testutil::TempDir tmp("accept");
    const auto raw = tmp.path() / "raw.csv";
    {
        testutil::ZipfSampler zipf(15, 1.0, 101);
        std::ofstream out(raw, std::ios::binary);
        out << "session_id,item_id,timestamp\n";
        for (int k = 0; k < 60; ++k) {
            const double base = 1.0e6 + 3600.0 * k;
            for (int j = 0; j < 8; ++j) {
                out << "s" << k << ',' << testutil::item_id(static_cast<int>(zipf.draw())) << ','
                    << detail::fmt_double(base + j) << "\n";
            }
        }
    }

    Json cj;
    cj["seed"] = 1;
    cj["output_dir"] = (tmp.path() / "out").string();
    cj["dataset"] = {{"input", raw.string()},
                     {"test_split", {{"kind", "last_fraction"}, {"value", 0.2}}}};
    cj["propensity"] = {{"gamma", "fit"}};
    cj["sknn"] = {{"k", 5}, {"sample_size", 10}};
    cj["gru4rec"] = {{"hidden_size", 8}, {"epochs", 2}, {"batch_size", 16}};
    cj["ensemble"] = {{"threshold_percentile", 10.0}, {"w2_grid", {1.0, 0.5}}};
    cj["evaluation"] = {{"percentile_grid", {10.0, 50.0, 90.0}}, {"stratification", "historical"}};
    const auto cfg = RunConfig::from_json(cj);

    auto run_all = [&] {
        std::ostringstream log;
        cmd_preprocess(cfg, log);
        cmd_propensity(cfg, log);
        cmd_train(cfg, "sknn", log);
        cmd_train(cfg, "gru4rec", log);
        cmd_evaluate(cfg, {"sknn", "gru4rec"}, 1, log);
        cmd_ensemble(cfg, 1, log);
        cmd_report(cfg, log);
    };
    auto snapshot = [&] {
        std::map<std::string, std::string> files;
        for (const auto& entry :
             std::filesystem::recursive_directory_iterator(cfg.output_dir)) {
            if (!entry.is_regular_file()) continue;
            files[entry.path().lexically_relative(cfg.output_dir).string()] =
                testutil::read_file(entry.path());
        }
        return files;
    };

    run_all();
    const auto first = snapshot();
    run_all();
    const auto second = snapshot();

    REQUIRE(first.size() > 10);
    REQUIRE(first.size() == second.size());
    std::size_t differing = 0;
    for (const auto& [name, bytes] : first) {
        auto it = second.find(name);
        REQUIRE(it != second.end());
        if (it->second != bytes) {
            UNSCOPED_INFO("artifact differs across reruns: " << name);
            ++differing;
        }
    }
    CHECK(differing == 0);
}

TEST_CASE("criterion 10: full-data reproduction (optional, not gated)") {
    // The headline directional checks need the public Diginetica and
    // RetailRocket dumps plus hours of training, so they are not part of this
    // gate; README describes how to run them. Here we only confirm the
    // machinery they rely on resolves: dataset presets and the full staged
    // pipeline (exercised end to end by criterion 9).
    for (const std::string format : {"diginetica", "retailrocket", "30mu"}) {
        Json cj;
        cj["dataset"] = {{"input", "events.csv"}, {"format", format}};
        CHECK_NOTHROW(RunConfig::from_json(cj));
    }
    std::cout << "[acceptance] note: criterion 10 directional checks skipped"
                 " (require full public datasets)\n";
}
