#include "cmcss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmcss/error.hpp"

namespace cmcss {

double auc_mann_whitney(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw ContractError("labels and scores differ in length");
    // Rank-sum form of the pair count: sort once, average ranks over ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    for (int y : labels) {
        if (y == 1) ++n_pos;
        else if (y == 0) ++n_neg;
        else throw ContractError("labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw ContractError("AUC is undefined unless both classes are present");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricSet compute_metrics(const std::vector<int>& labels, const std::vector<double>& scores, double threshold) {
    MetricSet m;
    m.auc = auc_mann_whitney(labels, scores);
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) (predicted ? tp : fn)++;
        else (predicted ? fp : tn)++;
    }
    m.sen = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.spe = static_cast<double>(tn) / static_cast<double>(tn + fp);
    m.ba = 0.5 * (m.sen + m.spe);
    return m;
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("paired samples differ in length");
    if (a.size() < kMinWilcoxonPairs) throw ContractError("signed-rank test needs at least 6 pairs");
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    WilcoxonResult r;
    r.n_used = diff.size();
    if (diff.empty()) {
        r.all_zero = true;
        return r;
    }
    const std::size_t n = diff.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return std::abs(diff[x]) < std::abs(diff[y]); });
    // Doubled mid-ranks keep tied ranks integral for the exact recursion.
    std::vector<std::size_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
        for (std::size_t t = i; t < j; ++t) rank2[order[t]] = i + 1 + j;
        const double ties = static_cast<double>(j - i);
        tie_term += ties * ties * ties - ties;
        i = j;
    }
    std::size_t w2 = 0, total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (diff[i] > 0.0) w2 += rank2[i];
    }
    r.statistic = 0.5 * static_cast<double>(w2);

    if (n <= 25) {
        r.exact = true;
        // counts[s] = number of sign patterns with doubled positive rank sum s.
        std::vector<double> counts(total2 + 1, 0.0);
        counts[0] = 1.0;
        std::size_t reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            reach += rank2[i];
            for (std::size_t s = reach + 1; s-- > rank2[i];) counts[s] += counts[s - rank2[i]];
        }
        const double patterns = std::ldexp(1.0, static_cast<int>(n));
        double lower = 0.0, upper = 0.0;
        for (std::size_t s = 0; s <= total2; ++s) {
            if (s <= w2) lower += counts[s];
            if (s >= w2) upper += counts[s];
        }
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
        return r;
    }
    const double nd = static_cast<double>(n);
    const double mean_w = nd * (nd + 1.0) / 4.0;
    const double var_w = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    if (var_w <= 0.0) {
        r.p_value = 1.0;
        return r;
    }
    const double z = (r.statistic - mean_w) / std::sqrt(var_w);
    r.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
    return r;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace cmcss
