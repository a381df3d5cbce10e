#include "ckdprog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ckdprog/csv.hpp"

namespace ckdprog {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::runtime_error("metrics: scores and labels differ in length");
    }
    if (scores.empty()) throw std::runtime_error("metrics: empty input");
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::runtime_error("metrics: non-finite score");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::runtime_error("metrics: labels must be 0/1");
    }
}

// Indices sorted by score; direction +1 ascending, -1 descending.
std::vector<size_t> order_by_score(const std::vector<double>& scores, int direction) {
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return direction > 0 ? scores[a] < scores[b] : scores[a] > scores[b];
    });
    return idx;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<size_t>(y);
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::runtime_error("roc_auc: needs both classes");

    // Midranks over ascending scores; the rank-sum of the positives gives the
    // Mann-Whitney statistic with ties counted half.
    std::vector<size_t> idx = order_by_score(scores, +1);
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) pos_rank_sum += midrank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<size_t>(y);
    if (n_pos == 0) throw std::runtime_error("pr_auc: needs at least one positive");

    std::vector<size_t> idx = order_by_score(scores, -1);
    double area = 0.0;
    double prev_recall = 0.0;
    size_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        for (size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) {
                ++tp;
            } else {
                ++fp;
            }
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

MetricReport confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                               double threshold) {
    check_inputs(scores, labels);
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) {
            pred ? ++tp : ++fn;
        } else {
            pred ? ++fp : ++tn;
        }
    }
    MetricReport r;
    r.threshold = threshold;
    r.n_pos = tp + fn;
    r.n_neg = fp + tn;
    auto ratio = [&r](int64_t num, int64_t den) {
        if (den == 0) {
            r.degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    r.specificity = ratio(tn, tn + fp);
    r.precision = ratio(tp, tp + fp);
    r.recall = ratio(tp, tp + fn);
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

MetricReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold) {
    MetricReport r = confusion_metrics(scores, labels, threshold);
    r.roc_auc = roc_auc(scores, labels);
    r.pr_auc = pr_auc(scores, labels);
    return r;
}

const char* const kMetricCsvColumns =
    "roc_auc,pr_auc,accuracy,specificity,precision,recall,f1,threshold,n_pos,n_neg,degenerate";

std::string metric_csv_fields(const MetricReport& r) {
    std::string out;
    auto add = [&out](const std::string& s) {
        if (!out.empty()) out += ',';
        out += s;
    };
    add(format_double(r.roc_auc));
    add(format_double(r.pr_auc));
    add(format_double(r.accuracy));
    add(format_double(r.specificity));
    add(format_double(r.precision));
    add(format_double(r.recall));
    add(format_double(r.f1));
    add(format_double(r.threshold));
    add(std::to_string(r.n_pos));
    add(std::to_string(r.n_neg));
    add(r.degenerate ? "1" : "0");
    return out;
}

MetricReport parse_metric_csv_fields(const std::vector<std::string>& fields, size_t offset) {
    if (fields.size() < offset + 11) throw std::runtime_error("metrics: short CSV row");
    auto num = [&](size_t i) { return std::stod(fields[offset + i]); };
    MetricReport r;
    r.roc_auc = num(0);
    r.pr_auc = num(1);
    r.accuracy = num(2);
    r.specificity = num(3);
    r.precision = num(4);
    r.recall = num(5);
    r.f1 = num(6);
    r.threshold = num(7);
    r.n_pos = std::stoll(fields[offset + 8]);
    r.n_neg = std::stoll(fields[offset + 9]);
    r.degenerate = fields[offset + 10] == "1";
    return r;
}

}  // namespace ckdprog
