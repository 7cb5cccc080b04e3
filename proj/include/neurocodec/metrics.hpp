#ifndef NEUROCODEC_METRICS_HPP
#define NEUROCODEC_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

namespace neurocodec {

struct ClassificationMetrics {
  double balanced_accuracy = 0;
  double auroc = -1;   // -1 when not computed (no scores / multiclass)
  double auc_pr = -1;
  double kappa = 0;
  double weighted_f1 = 0;
  std::vector<std::string> warnings;
};

// Balanced accuracy (mean per-class recall; classes absent from y_true are
// excluded with a warning), AUROC with midrank tie handling, average-precision
// AUC-PR, Cohen's kappa, support-weighted F1. Scores are optional and only
// used for the binary curve metrics.
ClassificationMetrics classification_metrics(const std::vector<int>& y_true,
                                             const std::vector<int>& y_pred,
                                             const std::vector<double>& y_scores = {});

// Midrank AUROC; equals the pairwise P(score_pos > score_neg) + 0.5 P(tie).
// Throws MetricUndefined when y_true has a single class.
double auroc(const std::vector<int>& y_true, const std::vector<double>& scores);

// Step-wise precision-over-recall integral (average precision).
double auc_pr(const std::vector<int>& y_true, const std::vector<double>& scores);

double cohen_kappa(const std::vector<int>& y_true, const std::vector<int>& y_pred);
double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                         std::vector<std::string>* warnings = nullptr);
double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Pearson: MetricUndefined on zero variance in either input.
double pearson_corr(const std::vector<double>& y_true, const std::vector<double>& y_pred);
// R2: MetricUndefined on zero variance in y_true (constant y_pred is fine).
double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred);
double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred);

struct RegressionMetrics {
  std::optional<double> pearson;
  std::optional<double> r2;
  double rmse = 0;
};

// All three metrics; undefined ones come back empty instead of throwing.
RegressionMetrics regression_metrics(const std::vector<double>& y_true,
                                     const std::vector<double>& y_pred);

// Per-target metrics averaged across targets; a metric undefined for any
// target is undefined for the average.
RegressionMetrics regression_metrics_multi(const std::vector<std::vector<double>>& y_true,
                                           const std::vector<std::vector<double>>& y_pred);

}  // namespace neurocodec

#endif
