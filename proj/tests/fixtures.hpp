#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "cmcss/cmcss.hpp"

namespace fixture {

// Small payloads so full-network tests stay fast.
inline cmcss::CohortDims tiny_dims() { return cmcss::CohortDims{5, 6, 2, 6, 6, 3}; }

inline cmcss::CohortConfig tiny_cohort(std::size_t n = 12, std::uint64_t seed = 1, double snr = 4.0) {
    cmcss::CohortConfig c;
    c.n_subjects = n;
    c.dims = tiny_dims();
    c.snr = snr;
    c.seed = seed;
    return c;
}

inline cmcss::ModelShape tiny_shape(cmcss::ModalitySet active = cmcss::ModalitySet::all()) {
    cmcss::ModelShape s;
    s.dims = tiny_dims();
    s.reduce_width = 3;
    s.hidden1 = 7;
    s.hidden2 = 6;
    s.feature_width = 5;
    s.embed_dim = 4;
    s.conv_channels = {2, 3, 2};
    s.active = active;
    return s;
}

inline cmcss::ArchitectureConfig tiny_architecture() {
    cmcss::ArchitectureConfig a;
    a.reduce_width = 3;
    a.hidden1 = 7;
    a.hidden2 = 6;
    a.feature_width = 5;
    a.embed_dim = 4;
    a.conv_channels = {2, 3, 2};
    return a;
}

inline cmcss::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    cmcss::Matrix m(r, c);
    for (double& v : m.values()) v = g(rng);
    return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("cmcss_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixture
