#include "neurocodec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "neurocodec/errors.hpp"

namespace neurocodec {

namespace {

int n_classes_of(const std::vector<int>& a, const std::vector<int>& b) {
  int n = 0;
  for (const int v : a) n = std::max(n, v + 1);
  for (const int v : b) n = std::max(n, v + 1);
  return n;
}

void check_lengths(size_t a, size_t b) {
  if (a == 0) throw MetricUndefined("empty input");
  if (a != b) throw MetricUndefined("length mismatch");
}

}  // namespace

double auroc(const std::vector<int>& y_true, const std::vector<double>& scores) {
  check_lengths(y_true.size(), scores.size());
  const int64_t n = static_cast<int64_t>(y_true.size());
  int64_t n_pos = 0;
  for (const int y : y_true) n_pos += (y == 1);
  const int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricUndefined("AUROC undefined with single-class y_true");

  // Midranks: ties share the average rank, which makes the rank-sum formula
  // equal pairwise counting with half-credit ties.
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });
  std::vector<double> rank(static_cast<size_t>(n));
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && scores[static_cast<size_t>(order[static_cast<size_t>(j + 1)])] ==
                            scores[static_cast<size_t>(order[static_cast<size_t>(i)])])
      ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (int64_t k = i; k <= j; ++k) rank[static_cast<size_t>(order[static_cast<size_t>(k)])] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0;
  for (int64_t k = 0; k < n; ++k)
    if (y_true[static_cast<size_t>(k)] == 1) rank_sum_pos += rank[static_cast<size_t>(k)];
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_pr(const std::vector<int>& y_true, const std::vector<double>& scores) {
  check_lengths(y_true.size(), scores.size());
  const int64_t n = static_cast<int64_t>(y_true.size());
  int64_t n_pos = 0;
  for (const int y : y_true) n_pos += (y == 1);
  if (n_pos == 0) throw MetricUndefined("AUC-PR undefined without positives");

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  // Average precision: sum over threshold groups of precision * recall gain.
  double ap = 0;
  int64_t tp = 0, fp = 0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    int64_t tp_group = 0, fp_group = 0;
    while (j < n && scores[static_cast<size_t>(order[static_cast<size_t>(j)])] ==
                        scores[static_cast<size_t>(order[static_cast<size_t>(i)])]) {
      if (y_true[static_cast<size_t>(order[static_cast<size_t>(j)])] == 1) ++tp_group;
      else ++fp_group;
      ++j;
    }
    tp += tp_group;
    fp += fp_group;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall_gain = static_cast<double>(tp_group) / static_cast<double>(n_pos);
    ap += precision * recall_gain;
    i = j;
  }
  return ap;
}

double cohen_kappa(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  const int k = n_classes_of(y_true, y_pred);
  const double n = static_cast<double>(y_true.size());
  std::vector<double> row(static_cast<size_t>(k), 0), col(static_cast<size_t>(k), 0);
  double diag = 0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    row[static_cast<size_t>(y_true[i])] += 1;
    col[static_cast<size_t>(y_pred[i])] += 1;
    if (y_true[i] == y_pred[i]) diag += 1;
  }
  const double p_o = diag / n;
  double p_e = 0;
  for (int c = 0; c < k; ++c) p_e += (row[static_cast<size_t>(c)] / n) * (col[static_cast<size_t>(c)] / n);
  if (p_e == 1.0) return 0.0;  // degenerate all-one-cell table
  return (p_o - p_e) / (1.0 - p_e);
}

double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                         std::vector<std::string>* warnings) {
  check_lengths(y_true.size(), y_pred.size());
  const int k = n_classes_of(y_true, y_pred);
  std::vector<int64_t> support(static_cast<size_t>(k), 0), hit(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++support[static_cast<size_t>(y_true[i])];
    if (y_true[i] == y_pred[i]) ++hit[static_cast<size_t>(y_true[i])];
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    if (support[static_cast<size_t>(c)] == 0) {
      if (warnings)
        warnings->push_back("class " + std::to_string(c) +
                            " absent from y_true; excluded from balanced accuracy");
      continue;
    }
    sum += static_cast<double>(hit[static_cast<size_t>(c)]) /
           static_cast<double>(support[static_cast<size_t>(c)]);
    ++present;
  }
  if (present == 0) throw MetricUndefined("no class present in y_true");
  return sum / static_cast<double>(present);
}

double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  const int k = n_classes_of(y_true, y_pred);
  std::vector<int64_t> tp(static_cast<size_t>(k), 0), fp(static_cast<size_t>(k), 0),
      fn(static_cast<size_t>(k), 0), support(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++support[static_cast<size_t>(y_true[i])];
    if (y_true[i] == y_pred[i]) ++tp[static_cast<size_t>(y_true[i])];
    else {
      ++fp[static_cast<size_t>(y_pred[i])];
      ++fn[static_cast<size_t>(y_true[i])];
    }
  }
  double f1_sum = 0;
  for (int c = 0; c < k; ++c) {
    const double denom = 2.0 * static_cast<double>(tp[static_cast<size_t>(c)]) +
                         static_cast<double>(fp[static_cast<size_t>(c)]) +
                         static_cast<double>(fn[static_cast<size_t>(c)]);
    const double f1 = denom > 0 ? 2.0 * static_cast<double>(tp[static_cast<size_t>(c)]) / denom : 0.0;
    f1_sum += f1 * static_cast<double>(support[static_cast<size_t>(c)]);
  }
  return f1_sum / static_cast<double>(y_true.size());
}

ClassificationMetrics classification_metrics(const std::vector<int>& y_true,
                                             const std::vector<int>& y_pred,
                                             const std::vector<double>& y_scores) {
  ClassificationMetrics m;
  m.balanced_accuracy = balanced_accuracy(y_true, y_pred, &m.warnings);
  m.kappa = cohen_kappa(y_true, y_pred);
  m.weighted_f1 = weighted_f1(y_true, y_pred);
  if (!y_scores.empty()) {
    m.auroc = auroc(y_true, y_scores);
    m.auc_pr = auc_pr(y_true, y_scores);
  }
  return m;
}

namespace {

struct Moments {
  double vt = 0, vp = 0, cov = 0, ss_res = 0, n = 0;
};

Moments moments_of(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  Moments m;
  m.n = static_cast<double>(y_true.size());
  double mt = 0, mp = 0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    mt += y_true[i];
    mp += y_pred[i];
  }
  mt /= m.n;
  mp /= m.n;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const double dt = y_true[i] - mt;
    const double dp = y_pred[i] - mp;
    m.vt += dt * dt;
    m.vp += dp * dp;
    m.cov += dt * dp;
    const double r = y_true[i] - y_pred[i];
    m.ss_res += r * r;
  }
  return m;
}

}  // namespace

double pearson_corr(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  const Moments m = moments_of(y_true, y_pred);
  if (m.vt == 0 || m.vp == 0)
    throw MetricUndefined("Pearson undefined: zero variance input");
  return m.cov / std::sqrt(m.vt * m.vp);
}

double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  const Moments m = moments_of(y_true, y_pred);
  if (m.vt == 0) throw MetricUndefined("R2 undefined: zero variance in y_true");
  return 1.0 - m.ss_res / m.vt;
}

double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  const Moments m = moments_of(y_true, y_pred);
  return std::sqrt(m.ss_res / m.n);
}

RegressionMetrics regression_metrics(const std::vector<double>& y_true,
                                     const std::vector<double>& y_pred) {
  const Moments m = moments_of(y_true, y_pred);
  RegressionMetrics out;
  out.rmse = std::sqrt(m.ss_res / m.n);
  if (m.vt != 0) out.r2 = 1.0 - m.ss_res / m.vt;
  if (m.vt != 0 && m.vp != 0) out.pearson = m.cov / std::sqrt(m.vt * m.vp);
  return out;
}

RegressionMetrics regression_metrics_multi(const std::vector<std::vector<double>>& y_true,
                                           const std::vector<std::vector<double>>& y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  RegressionMetrics acc;
  acc.pearson = 0.0;
  acc.r2 = 0.0;
  for (size_t t = 0; t < y_true.size(); ++t) {
    const RegressionMetrics m = regression_metrics(y_true[t], y_pred[t]);
    if (acc.pearson && m.pearson) *acc.pearson += *m.pearson;
    else acc.pearson.reset();
    if (acc.r2 && m.r2) *acc.r2 += *m.r2;
    else acc.r2.reset();
    acc.rmse += m.rmse;
  }
  const double nt = static_cast<double>(y_true.size());
  if (acc.pearson) *acc.pearson /= nt;
  if (acc.r2) *acc.r2 /= nt;
  acc.rmse /= nt;
  return acc;
}

}  // namespace neurocodec
