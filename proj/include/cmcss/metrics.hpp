#pragma once

#include <vector>

namespace cmcss {

struct MetricSet {
    double ba = 0.0;
    double auc = 0.0;
    double sen = 0.0;
    double spe = 0.0;
};

// SEN/SPE at `threshold` on the positive-class score (score >= threshold
// predicts positive); AUC is the Mann-Whitney pair statistic with ties
// counted as one half.
MetricSet compute_metrics(const std::vector<int>& labels, const std::vector<double>& scores,
                          double threshold = 0.5);

double auc_mann_whitney(const std::vector<int>& labels, const std::vector<double>& scores);

inline constexpr std::size_t kMinWilcoxonPairs = 6;

struct WilcoxonResult {
    double p_value = 1.0;
    double statistic = 0.0;   // W+ : sum of ranks of positive differences
    std::size_t n_used = 0;   // pairs left after dropping zero differences
    bool exact = false;
    bool all_zero = false;    // every difference was zero; p forced to 1
};

// Two-sided signed-rank test on paired samples (a - b). Exact null
// distribution for n <= 25 (mid-ranks for ties), tie-corrected normal
// approximation above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

double mean(const std::vector<double>& v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(const std::vector<double>& v);

}  // namespace cmcss
