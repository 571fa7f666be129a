#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmcss/matrix.hpp"
#include "cmcss/modality.hpp"

namespace cmcss {

// Payload dimensions shared by every record of a cohort.
struct CohortDims {
    std::size_t d = 87;        // ROI count
    std::size_t z = 100;       // radiomic features per ROI
    std::size_t n_slices = 10;
    std::size_t h = 32;
    std::size_t w = 32;
    std::size_t c_dim = 16;    // clinical vector length

    bool operator==(const CohortDims&) const = default;
};

struct SubjectRecord {
    std::string subject_id;
    Matrix radiomics;              // d x z
    Matrix structural_connectome;  // d x d, symmetric, >= 0
    Matrix functional_connectome;  // d x d, symmetric, [-1, 1], unit diagonal
    Matrix image_volume;           // (n_slices * h) x w, slices stacked vertically, [0, 1]
    Matrix clinical;               // 1 x c_dim
    int label = 0;                 // 0 = low risk, 1 = high risk

    const Matrix& payload(Modality m) const;
    Matrix& payload(Modality m);

    bool operator==(const SubjectRecord&) const = default;
};

struct Cohort {
    CohortDims dims;
    std::vector<SubjectRecord> subjects;

    std::size_t size() const { return subjects.size(); }
    std::vector<int> labels() const;
    std::size_t count_label(int label) const;
    // Cohort restricted to the given subject indices, in the given order.
    Cohort subset(const std::vector<std::size_t>& indices) const;

    bool operator==(const Cohort&) const = default;
};

struct CohortConfig {
    std::size_t n_subjects = 64;
    CohortDims dims;
    double class_balance = 0.5;        // fraction of label-1 subjects
    std::size_t latent_dim = 8;
    double snr = 4.0;                  // class-mean separation in latent noise units
    double cross_modality_coupling = 0.9;
    std::uint64_t seed = 0;
};

// Throws ConfigError naming the first violated bound.
void validate(const CohortConfig& config);

// Shared-latent-factor cohort. Each subject draws a latent vector from a
// class-conditional Gaussian; every modality is a fixed random linear map of
// coupling * latent + (1 - coupling) * private noise, post-processed to the
// modality's value constraints.
Cohort generate_synthetic_cohort(const CohortConfig& config);

// Throws LoadError naming the subject and modality of the first violation.
void validate_record(const SubjectRecord& record, const CohortDims& dims);
void validate_cohort(const Cohort& cohort);

// Writes manifest.json plus one CSV per subject and modality; returns the
// manifest path.
std::filesystem::path save_cohort(const Cohort& cohort, const std::filesystem::path& directory);
Cohort load_cohort(const std::filesystem::path& manifest_path);

// Expected payload shape for a modality.
std::pair<std::size_t, std::size_t> payload_shape(Modality m, const CohortDims& dims);

}  // namespace cmcss
