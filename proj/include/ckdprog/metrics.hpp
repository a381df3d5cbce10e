#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckdprog {

struct MetricReport {
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double accuracy = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double threshold = 0.5;
    int64_t n_pos = 0;
    int64_t n_neg = 0;
    bool degenerate = false;  // some 0/0 ratio was reported as 0
};

// Mann-Whitney form: P(score_pos > score_neg) + 1/2 P(tie), via midranks.
// Throws unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall step curve, thresholds descending with tied
// scores grouped; right-continuous step integration (sum of dRecall times the
// precision at that threshold). Throws when there are no positives.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Threshold metrics with predict-positive iff score >= threshold. 0/0 ratios
// come back as 0 with the degenerate flag set. roc_auc/pr_auc are left 0.
MetricReport confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                               double threshold = 0.5);

// confusion_metrics plus both AUCs.
MetricReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold = 0.5);

// Metric block of the report CSV; identity columns (follow-up etc.) are the
// caller's business.
extern const char* const kMetricCsvColumns;
std::string metric_csv_fields(const MetricReport& r);
MetricReport parse_metric_csv_fields(const std::vector<std::string>& fields, size_t offset);

}  // namespace ckdprog
