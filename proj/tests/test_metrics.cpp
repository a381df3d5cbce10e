#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ckdprog/csv.hpp"
#include "ckdprog/metrics.hpp"
#include "ckdprog/rng.hpp"
#include "doctest.h"

using namespace ckdprog;

namespace {

// O(n^2) Mann-Whitney oracle: P(pos > neg) + 1/2 P(tie) over all pairs.
double oracle_roc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0;
    size_t np = 0, nn = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++np;
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    for (int v : y) nn += v == 0 ? 1 : 0;
    return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

// Exhaustive-threshold PR oracle: evaluate precision/recall from scratch at
// every distinct score (descending) and step-integrate sum(dR * P).
double oracle_pr(const std::vector<double>& s, const std::vector<int>& y) {
    std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
    size_t total_pos = 0;
    for (int v : y) total_pos += v == 1 ? 1 : 0;
    double area = 0.0, prev_recall = 0.0;
    for (double thr : thresholds) {
        size_t tp = 0, fp = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= thr) (y[i] == 1 ? tp : fp)++;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

std::pair<std::vector<double>, std::vector<int>> random_instance(Pcg32& rng, int max_n,
                                                                 bool with_ties) {
    for (;;) {
        int n = static_cast<int>(rng.uniform_int(2, max_n));
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < n; ++i) {
            s.push_back(with_ties ? rng.uniform_int(0, 9) * 0.1 : rng.uniform());
            y.push_back(rng.bernoulli(0.4) ? 1 : 0);
        }
        bool has_pos = std::count(y.begin(), y.end(), 1) > 0;
        bool has_neg = std::count(y.begin(), y.end(), 0) > 0;
        if (has_pos && has_neg) return {s, y};
    }
}

}  // namespace

TEST_CASE("roc_auc on hand-checked instances") {
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    // Pairs: (0.8 beats 0.6, 0.2), (0.4 loses to 0.6, beats 0.2) -> 3/4.
    CHECK(roc_auc({0.8, 0.6, 0.4, 0.2}, {1, 0, 1, 0}) == 0.75);
    // All scores tied: exactly one half.
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
}

TEST_CASE("pr_auc on hand-checked instances") {
    CHECK(pr_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    // Constant scores: single threshold, recall jumps 0 -> 1 at precision pi.
    CHECK(pr_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0}) == 0.25);
    CHECK(pr_auc({0.3, 0.3}, {1, 1}) == 1.0);  // no negatives
}

TEST_CASE("both AUCs match their oracles on 200 random tied instances") {
    Pcg32 rng(6001);
    for (int trial = 0; trial < 200; ++trial) {
        auto [s, y] = random_instance(rng, 50, trial % 2 == 0);
        CHECK(std::abs(roc_auc(s, y) - oracle_roc(s, y)) < 1e-12);
        CHECK(std::abs(pr_auc(s, y) - oracle_pr(s, y)) < 1e-12);
    }
}

TEST_CASE("AUCs are invariant under strictly monotone score transforms") {
    Pcg32 rng(6002);
    for (int trial = 0; trial < 50; ++trial) {
        auto [s, y] = random_instance(rng, 40, true);
        std::vector<double> t;
        for (double v : s) t.push_back(std::exp(3.0 * v) - 1.0);
        CHECK(roc_auc(s, y) == roc_auc(t, y));
        CHECK(pr_auc(s, y) == pr_auc(t, y));
    }
}

TEST_CASE("single-class inputs are rejected") {
    CHECK_THROWS(roc_auc({0.1, 0.9}, {1, 1}));
    CHECK_THROWS(roc_auc({0.1, 0.9}, {0, 0}));
    CHECK_THROWS(pr_auc({0.1, 0.9}, {0, 0}));  // no positive to recall
    CHECK_THROWS(roc_auc({}, {}));
    CHECK_THROWS(roc_auc({0.5}, {1, 0}));      // length mismatch
    CHECK_THROWS(roc_auc({0.5, 0.5}, {2, 0}));  // labels must be 0/1
}

TEST_CASE("confusion metrics match direct counting") {
    // thr 0.5: TP=1 FP=1 TN=1 FN=1.
    MetricReport r = confusion_metrics({0.7, 0.6, 0.4, 0.3}, {1, 0, 1, 0});
    CHECK(r.accuracy == 0.5);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.specificity == 0.5);
    CHECK(r.f1 == 0.5);
    CHECK(r.n_pos == 2);
    CHECK(r.n_neg == 2);
    CHECK(!r.degenerate);

    // A score exactly at the threshold predicts positive.
    MetricReport edge = confusion_metrics({0.5, 0.49}, {1, 0});
    CHECK(edge.accuracy == 1.0);
    CHECK(edge.recall == 1.0);

    Pcg32 rng(6003);
    for (int trial = 0; trial < 100; ++trial) {
        auto [s, y] = random_instance(rng, 50, true);
        MetricReport m = confusion_metrics(s, y, 0.45);
        long tp = 0, fp = 0, tn = 0, fn = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            bool pred = s[i] >= 0.45;
            if (pred && y[i] == 1) ++tp;
            if (pred && y[i] == 0) ++fp;
            if (!pred && y[i] == 0) ++tn;
            if (!pred && y[i] == 1) ++fn;
        }
        CHECK(m.accuracy == static_cast<double>(tp + tn) / static_cast<double>(s.size()));
        if (tp + fp > 0) CHECK(m.precision == static_cast<double>(tp) / static_cast<double>(tp + fp));
        if (tp + fn > 0) CHECK(m.recall == static_cast<double>(tp) / static_cast<double>(tp + fn));
        if (tn + fp > 0) {
            CHECK(m.specificity == static_cast<double>(tn) / static_cast<double>(tn + fp));
        }
    }
}

TEST_CASE("degenerate ratios are zero and flagged") {
    // Nothing predicted positive: precision 0/0.
    MetricReport r = confusion_metrics({0.1, 0.2}, {1, 0});
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.degenerate);

    // No negatives at all: specificity 0/0.
    MetricReport r2 = confusion_metrics({0.9, 0.8}, {1, 1});
    CHECK(r2.specificity == 0.0);
    CHECK(r2.degenerate);
}

TEST_CASE("evaluate_scores combines AUCs with threshold metrics") {
    MetricReport r = evaluate_scores({0.9, 0.7, 0.3, 0.1}, {1, 1, 0, 0});
    CHECK(r.roc_auc == 1.0);
    CHECK(r.pr_auc == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.threshold == 0.5);
}

TEST_CASE("metric csv fields round-trip") {
    MetricReport r;
    r.roc_auc = 0.875;
    r.pr_auc = 1.0 / 3.0;
    r.accuracy = 0.75;
    r.specificity = 0.5;
    r.precision = 0.7;
    r.recall = 0.9;
    r.f1 = 2 * 0.7 * 0.9 / 1.6;
    r.n_pos = 13;
    r.n_neg = 29;
    r.degenerate = true;

    std::vector<std::string> fields;
    split_csv_line("x,y," + metric_csv_fields(r), fields);
    MetricReport back = parse_metric_csv_fields(fields, 2);
    CHECK(back.roc_auc == r.roc_auc);
    CHECK(back.pr_auc == r.pr_auc);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.specificity == r.specificity);
    CHECK(back.precision == r.precision);
    CHECK(back.recall == r.recall);
    CHECK(back.f1 == r.f1);
    CHECK(back.threshold == r.threshold);
    CHECK(back.n_pos == r.n_pos);
    CHECK(back.n_neg == r.n_neg);
    CHECK(back.degenerate == r.degenerate);
}
