#include "cmcss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmcss/error.hpp"

namespace cmcss {

namespace {

double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

void require_pairable(const BatchView& batch) {
    if (batch.size() < 2) throw ContractError("contrastive terms need a batch of at least 2 subjects");
    if (batch.labels.size() != batch.size()) throw ContractError("batch labels and embeddings differ in length");
    if (!(batch.temperature > 0.0)) throw ContractError("temperature must be positive");
}

double similarity(const BatchView& b, std::size_t i, Modality u, std::size_t j, Modality v) {
    return dot(b.embeddings[i][u], b.embeddings[j][v]) / b.temperature;
}

// log S(i, j) computed with a max-shifted exponential sum.
double log_kernel(std::size_t i, std::size_t j, const BatchView& b,
                  const std::vector<std::pair<Modality, Modality>>& pairs) {
    std::vector<double> sims;
    sims.reserve(pairs.size());
    for (auto [u, v] : pairs) sims.push_back(similarity(b, i, u, j, v));
    return log_sum_exp(sims);
}

struct KernelTable {
    std::size_t m = 0;
    std::vector<double> log_s;  // m x m
    double operator()(std::size_t i, std::size_t j) const { return log_s[i * m + j]; }
};

KernelTable kernel_table(const BatchView& b, const std::vector<std::pair<Modality, Modality>>& pairs) {
    KernelTable t;
    t.m = b.size();
    t.log_s.resize(t.m * t.m);
    for (std::size_t i = 0; i < t.m; ++i)
        for (std::size_t j = 0; j < t.m; ++j) t.log_s[i * t.m + j] = log_kernel(i, j, b, pairs);
    return t;
}

// log of sum_{j != i} S(i, j) (row) or sum_{j != k} S(j, k) (column).
double log_row_denominator(const KernelTable& t, std::size_t i, bool include_self) {
    std::vector<double> terms;
    for (std::size_t j = 0; j < t.m; ++j)
        if (include_self || j != i) terms.push_back(t(i, j));
    return log_sum_exp(terms);
}

double log_col_denominator(const KernelTable& t, std::size_t k, bool include_self) {
    std::vector<double> terms;
    for (std::size_t j = 0; j < t.m; ++j)
        if (include_self || j != k) terms.push_back(t(j, k));
    return log_sum_exp(terms);
}

void check_index(std::size_t i, const BatchView& b) {
    if (i >= b.size()) throw ContractError("subject index " + std::to_string(i) + " outside batch");
}

}  // namespace

std::vector<std::pair<Modality, Modality>> modality_pairs(const ModalitySet& modalities) {
    const auto present = modalities.members();
    std::vector<std::pair<Modality, Modality>> pairs;
    if (present.size() == 1) {
        pairs.emplace_back(present[0], present[0]);
        return pairs;
    }
    for (Modality u : present)
        for (Modality v : present)
            if (u != v) pairs.emplace_back(u, v);
    return pairs;
}

double modality_pair_kernel(std::size_t i, std::size_t j, const BatchView& batch) {
    check_index(i, batch);
    check_index(j, batch);
    double s = 0.0;
    for (auto [u, v] : modality_pairs(batch.modalities)) s += std::exp(similarity(batch, i, u, j, v));
    return s;
}

double cmc_positive_prob(std::size_t i, const BatchView& batch) {
    require_pairable(batch);
    check_index(i, batch);
    const auto t = kernel_table(batch, modality_pairs(batch.modalities));
    return std::exp(t(i, i) - log_row_denominator(t, i, batch.denominator_includes_positive));
}

double cmc_negative_prob(std::size_t i, std::size_t k, const BatchView& batch) {
    require_pairable(batch);
    check_index(i, batch);
    check_index(k, batch);
    if (i == k) throw ContractError("cmc_negative_prob requires i != k");
    const auto t = kernel_table(batch, modality_pairs(batch.modalities));
    return std::exp(t(i, k) - log_col_denominator(t, k, batch.denominator_includes_positive));
}

double css_pair_prob(std::size_t i, std::size_t g, const BatchView& batch) {
    require_pairable(batch);
    check_index(i, batch);
    check_index(g, batch);
    if (i == g) throw ContractError("css_pair_prob requires i != g");
    const auto t = kernel_table(batch, modality_pairs(batch.modalities));
    return std::exp(t(i, g) - log_row_denominator(t, i, batch.denominator_includes_positive));
}

double cmc_loss(const BatchView& batch) {
    std::vector<EmbeddingGrad> unused;
    return contrastive_loss_with_grad(batch, {1.0, 0.0}, unused).cmc;
}

CssResult css_loss_detail(const BatchView& batch) {
    require_pairable(batch);
    const auto t = kernel_table(batch, modality_pairs(batch.modalities));
    const std::size_t m = batch.size();
    CssResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t group = 0;
        double acc = 0.0;
        const double log_den = log_row_denominator(t, i, batch.denominator_includes_positive);
        for (std::size_t g = 0; g < m; ++g) {
            if (g == i || batch.labels[g] != batch.labels[i]) continue;
            acc += t(i, g) - log_den;
            ++group;
        }
        if (group == 0) {
            ++r.empty_groups;
            continue;
        }
        sum += acc / static_cast<double>(group);
    }
    r.degenerate = r.empty_groups == m;
    r.value = r.degenerate ? 0.0 : -sum / static_cast<double>(m);
    return r;
}

double css_loss(const BatchView& batch) { return css_loss_detail(batch).value; }

LossValue joint_loss(const BatchView& batch, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");
    std::vector<EmbeddingGrad> unused;
    return contrastive_loss_with_grad(batch, {lambda, 1.0}, unused);
}

LossValue contrastive_loss_with_grad(const BatchView& batch, ObjectiveWeights weights,
                                     std::vector<EmbeddingGrad>& grads) {
    require_pairable(batch);
    const auto pairs = modality_pairs(batch.modalities);
    const std::size_t m = batch.size();
    const auto t = kernel_table(batch, pairs);
    const bool with_self = batch.denominator_includes_positive;
    const double inv_m = 1.0 / static_cast<double>(m);

    std::vector<double> log_row(m), log_col(m);
    for (std::size_t i = 0; i < m; ++i) {
        log_row[i] = log_row_denominator(t, i, with_self);
        log_col[i] = log_col_denominator(t, i, with_self);
    }

    // dLoss / dlog S(i, j)
    std::vector<double> coef(m * m, 0.0);
    auto add_row_denominator = [&](std::size_t i, double scale) {
        for (std::size_t j = 0; j < m; ++j)
            if (with_self || j != i) coef[i * m + j] += scale * std::exp(t(i, j) - log_row[i]);
    };

    LossValue out;
    out.lambda = weights.cmc;

    // Instance-discrimination (cross-modality) term.
    if (m >= 2) {
        double positive = 0.0, negative = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            positive += t(i, i) - log_row[i];
            for (std::size_t k = 0; k < m; ++k)
                if (k != i) negative += t(i, k) - log_col[k];
        }
        out.cmc = -inv_m * (positive - negative);
        if (weights.cmc != 0.0) {
            const double w = weights.cmc * inv_m;
            for (std::size_t i = 0; i < m; ++i) {
                coef[i * m + i] -= w;
                add_row_denominator(i, w);
                for (std::size_t k = 0; k < m; ++k)
                    if (k != i) coef[i * m + k] += w;
            }
            // Each column denominator appears once per i != k.
            const double col_scale = -w * static_cast<double>(m - 1);
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t j = 0; j < m; ++j)
                    if (with_self || j != k) coef[j * m + k] += col_scale * std::exp(t(j, k) - log_col[k]);
        }
    }

    // Same-outcome (cross-subject) term.
    {
        double sum = 0.0;
        std::size_t empty = 0;
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<std::size_t> group;
            for (std::size_t g = 0; g < m; ++g)
                if (g != i && batch.labels[g] == batch.labels[i]) group.push_back(g);
            if (group.empty()) {
                ++empty;
                continue;
            }
            const double inv_g = 1.0 / static_cast<double>(group.size());
            double acc = 0.0;
            for (std::size_t g : group) acc += t(i, g) - log_row[i];
            sum += acc * inv_g;
            if (weights.css != 0.0) {
                const double w = weights.css * inv_m;
                for (std::size_t g : group) coef[i * m + g] -= w * inv_g;
                add_row_denominator(i, w);
            }
        }
        out.css_degenerate = empty == m;
        out.css = out.css_degenerate ? 0.0 : -inv_m * sum;
    }
    out.total = weights.cmc * out.cmc + weights.css * out.css;
    if (!std::isfinite(out.total)) throw NumericError("non-finite contrastive loss");

    grads.assign(m, EmbeddingGrad{});
    for (std::size_t i = 0; i < m; ++i)
        for (Modality u : batch.modalities.members())
            grads[i][index_of(u)].assign(batch.embeddings[i][u].size(), 0.0);

    const double inv_tau = 1.0 / batch.temperature;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double c = coef[i * m + j];
            if (c == 0.0) continue;
            for (auto [u, v] : pairs) {
                // d log S(i, j) / d sim = softmax weight of this pair inside S(i, j)
                const double g = c * std::exp(similarity(batch, i, u, j, v) - t(i, j)) * inv_tau;
                const auto& fu = batch.embeddings[i][u];
                const auto& fv = batch.embeddings[j][v];
                auto& gu = grads[i][index_of(u)];
                auto& gv = grads[j][index_of(v)];
                for (std::size_t e = 0; e < fu.size(); ++e) {
                    gu[e] += g * fv[e];
                    gv[e] += g * fu[e];
                }
            }
        }
    }
    return out;
}

double weighted_cross_entropy(const std::array<double, 2>& p, int label, const std::array<double, 2>& class_weights) {
    if (label != 0 && label != 1) throw ContractError("label must be 0 or 1, got " + std::to_string(label));
    const auto l = static_cast<std::size_t>(label);
    return -class_weights[l] * std::log(std::max(p[l], 1e-12));
}

std::array<double, 2> inverse_frequency_weights(const std::vector<int>& labels) {
    std::array<double, 2> counts{0.0, 0.0};
    for (int y : labels) {
        if (y != 0 && y != 1) throw ContractError("label must be 0 or 1");
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    if (counts[0] == 0.0 || counts[1] == 0.0) return {1.0, 1.0};
    const double inv0 = 1.0 / counts[0], inv1 = 1.0 / counts[1];
    const double mean = 0.5 * (inv0 + inv1);
    return {inv0 / mean, inv1 / mean};
}

}  // namespace cmcss
