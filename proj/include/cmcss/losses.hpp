#pragma once

#include <array>
#include <utility>
#include <vector>

#include "cmcss/encoder.hpp"

namespace cmcss {

// A sampled set of m subjects with their embeddings and labels; the unit over
// which the contrastive losses are evaluated.
struct BatchView {
    std::vector<std::size_t> indices;       // cohort indices (informational)
    std::vector<EmbeddingSet> embeddings;
    std::vector<int> labels;
    double temperature = 1.0;
    ModalitySet modalities = ModalitySet::all();
    // When true, the denominators of the instance and same-outcome
    // probabilities also include the j == i (resp. j == k) term.
    bool denominator_includes_positive = false;

    std::size_t size() const { return embeddings.size(); }
};

// Modality pairs summed inside S(i, j): every ordered pair (u, v) with u != v
// of the present modalities, or the single self pair when only one is present.
std::vector<std::pair<Modality, Modality>> modality_pairs(const ModalitySet& modalities);

// S(i, j) = sum over pairs (u, v) of exp(f_u(i) . f_v(j) / tau).
double modality_pair_kernel(std::size_t i, std::size_t j, const BatchView& batch);

// p(i | s_i) = S(i, i) / sum_{j != i} S(i, j). Not bounded by one.
double cmc_positive_prob(std::size_t i, const BatchView& batch);
// p(i | s_k) = S(i, k) / sum_{j != k} S(j, k), i != k.
double cmc_negative_prob(std::size_t i, std::size_t k, const BatchView& batch);
// -(1/m) (sum_i log p(i|s_i) - sum_i sum_{k != i} log p(i|s_k))
double cmc_loss(const BatchView& batch);

// p(y_i = y_g | s_i, s_g) = S(i, g) / sum_{j != i} S(i, j), i != g.
double css_pair_prob(std::size_t i, std::size_t g, const BatchView& batch);

struct CssResult {
    double value = 0.0;
    std::size_t empty_groups = 0;  // subjects with no same-label partner
    bool degenerate = false;       // every group empty; value forced to 0
};
// -(1/m) sum_i (1/|G(i)|) sum_{g in G(i)} log p(y_i = y_g | s_i, s_g);
// subjects with empty G(i) contribute zero.
CssResult css_loss_detail(const BatchView& batch);
double css_loss(const BatchView& batch);

struct LossValue {
    double total = 0.0;
    double cmc = 0.0;
    double css = 0.0;
    double lambda = 1.0;
    bool css_degenerate = false;
};

// total = lambda * cmc + css
LossValue joint_loss(const BatchView& batch, double lambda);

// Coefficients of the pretraining objective: cmc_weight * cmc + css_weight * css.
// The joint objective is {lambda, 1}.
struct ObjectiveWeights {
    double cmc = 1.0;
    double css = 1.0;
};

using EmbeddingGrad = std::array<std::vector<double>, kModalityCount>;

// Loss value and its gradient with respect to every embedding coordinate.
// The returned LossValue reports total = weights.cmc * cmc + weights.css * css.
LossValue contrastive_loss_with_grad(const BatchView& batch, ObjectiveWeights weights,
                                     std::vector<EmbeddingGrad>& grads);

// -class_weights[label] * log(max(p[label], 1e-12))
double weighted_cross_entropy(const std::array<double, 2>& probabilities, int label,
                              const std::array<double, 2>& class_weights);

// Inverse class frequencies normalised to mean one over the two classes.
std::array<double, 2> inverse_frequency_weights(const std::vector<int>& labels);

}  // namespace cmcss
