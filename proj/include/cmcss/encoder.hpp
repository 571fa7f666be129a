#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmcss/cohort.hpp"
#include "cmcss/matrix.hpp"
#include "cmcss/modality.hpp"

namespace cmcss {

// Architecture hyperparameters. Defaults follow the published network:
// attention maps reduced to 10 columns, a 256/128 perceptron, 128-wide image
// and clinical features and 8-wide embeddings for every modality.
struct ModelShape {
    CohortDims dims;
    std::size_t reduce_width = 10;
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 128;
    std::size_t feature_width = 128;  // image and clinical feature width
    std::size_t embed_dim = 8;
    std::array<std::size_t, 3> conv_channels = {8, 16, 16};
    ModalitySet active = ModalitySet::all();

    std::size_t attention_width(Modality m) const;  // z for radiomics, d for connectomes
    // Spatial size after each strided convolution (3x3, stride 2, padding 1).
    std::array<std::pair<std::size_t, std::size_t>, 3> conv_output_sizes() const;
    std::size_t fusion_width() const { return embed_dim * active.count(); }

    bool operator==(const ModelShape&) const = default;
};

struct Linear {
    Matrix weight;  // out x in
    Matrix bias;    // out x 1

    bool operator==(const Linear&) const = default;
};

struct Conv2d {
    Matrix kernel;  // out x (in * 3 * 3)
    Matrix bias;    // out x 1

    bool operator==(const Conv2d&) const = default;
};

struct AttentionWeights {
    Matrix w_q, w_k, w_v;  // width x width

    bool operator==(const AttentionWeights&) const = default;
};

struct AttentionBranch {
    AttentionWeights attention;
    Linear reduce;    // width -> reduce_width, applied to each ROI row
    Linear hidden1;   // d * reduce_width -> hidden1
    Linear hidden2;   // hidden1 -> hidden2
    Linear project;   // hidden2 -> embed_dim

    bool operator==(const AttentionBranch&) const = default;
};

struct VolumeBranch {
    std::array<Conv2d, 3> conv;
    Linear fc;        // flattened conv output -> feature_width
    Linear project;   // feature_width -> embed_dim

    bool operator==(const VolumeBranch&) const = default;
};

struct ClinicalBranch {
    Linear fc;        // c_dim -> feature_width
    Linear project;   // feature_width -> embed_dim

    bool operator==(const ClinicalBranch&) const = default;
};

// Every trainable weight of the five extractors plus the fusion head.
// Gradients are carried in a second EncoderParams of identical shape.
struct EncoderParams {
    ModelShape shape;
    std::array<AttentionBranch, 3> attention;  // r, sc, fc
    VolumeBranch volume;
    ClinicalBranch clinical;
    Linear fusion;  // fusion_width -> 2

    // Visits every parameter matrix with its dotted path, in a fixed order.
    void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
    void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

    EncoderParams zeros_like() const;
    std::size_t parameter_count() const;
    void set_zero();
    void add(const EncoderParams& other, double scale = 1.0);
    bool operator==(const EncoderParams&) const = default;
};

// Scaled uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
EncoderParams init_params(const ModelShape& shape, std::uint64_t seed);
// Replaces the fusion head with a freshly initialised one.
void reset_fusion_head(EncoderParams& params, std::uint64_t seed);

struct EmbeddingSet {
    ModalitySet present;
    std::array<std::vector<double>, kModalityCount> vectors;

    const std::vector<double>& operator[](Modality m) const { return vectors[index_of(m)]; }
    std::vector<double>& operator[](Modality m) { return vectors[index_of(m)]; }
};

struct AttentionResult {
    Matrix attention;  // d x d, row-stochastic
    Matrix output;     // d x width
};

// Softmax(Q K^T / sqrt(d)) V with Q, K, V = x W_q, x W_k, x W_v and d the
// number of rows (ROIs) of x.
AttentionResult self_attention(const Matrix& x, const AttentionWeights& weights);

// v / ||v||; throws NumericError when ||v|| <= 1e-12.
std::vector<double> l2_normalize(std::span<const double> v);

// Softmax over the fused logits of the present embeddings, concatenated in
// canonical modality order.
std::array<double, 2> fuse_and_classify(const EmbeddingSet& embeddings, const EncoderParams& params);

// Intermediate activations of one modality branch, kept for the backward pass.
struct BranchTape {
    Matrix q, k, v, attention, attended, reduced;  // attention branches only
    std::vector<Matrix> conv_out;                  // volume branch only (post-ReLU, per layer)
    std::vector<double> flat, hidden1, hidden2, feature, projected, embedding;
    double projected_norm = 0.0;
};

struct SubjectTape {
    std::array<BranchTape, kModalityCount> branches;
    EmbeddingSet embeddings;
};

SubjectTape forward_subject(const SubjectRecord& record, const EncoderParams& params);
EmbeddingSet encode_subject(const SubjectRecord& record, const EncoderParams& params);

// Accumulates into `grads` the parameter gradient given dLoss/dEmbedding for
// each present modality.
void backward_subject(const SubjectRecord& record, const EncoderParams& params, const SubjectTape& tape,
                      const std::array<std::vector<double>, kModalityCount>& embedding_grads, EncoderParams& grads);

// Fusion head: logits and their backward pass. Returns dLoss/dEmbedding for
// each present modality and accumulates the fusion weight gradient.
std::array<double, 2> fusion_logits(const EmbeddingSet& embeddings, const EncoderParams& params);
std::array<std::vector<double>, kModalityCount> fusion_backward(const EmbeddingSet& embeddings,
                                                                const EncoderParams& params,
                                                                const std::array<double, 2>& logit_grad,
                                                                EncoderParams& grads);

std::vector<double> concat_embeddings(const EmbeddingSet& embeddings);

// Batch forward over subjects, parallel across subjects; results are
// identical to calling encode_subject in a loop.
std::vector<EmbeddingSet> encode_batch(const Cohort& cohort, const std::vector<std::size_t>& indices,
                                       const EncoderParams& params);

}  // namespace cmcss
