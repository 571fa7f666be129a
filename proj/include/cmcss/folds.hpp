#pragma once

#include <cstdint>
#include <vector>

#include "cmcss/cohort.hpp"

namespace cmcss {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

// Repeated stratified k-fold assignment. fold_of[r][s] is the test fold of
// subject s (cohort index) in repeat r.
struct FoldPlan {
    std::size_t k = 0;
    std::size_t repeats = 0;
    double inner_val_fraction = 1.0 / 9.0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> fold_of;

    std::vector<std::size_t> test_indices(std::size_t repeat, std::size_t fold) const;
    // Train/validation/test split for one (repeat, fold); the validation part
    // is a stratified draw from the fold complement.
    Split split(const std::vector<int>& labels, std::size_t repeat, std::size_t fold) const;
};

FoldPlan stratified_folds(const Cohort& cohort, std::size_t k, std::size_t repeats,
                          double inner_val_fraction, std::uint64_t seed);
FoldPlan stratified_folds(const std::vector<int>& labels, std::size_t k, std::size_t repeats,
                          double inner_val_fraction, std::uint64_t seed);

// Stratified holdout of `fraction` of `indices`; keeps at least one subject of
// each class on the training side and at least one subject in validation.
void stratified_holdout(const std::vector<std::size_t>& indices, const std::vector<int>& labels, double fraction,
                        std::uint64_t seed, std::vector<std::size_t>& kept, std::vector<std::size_t>& held_out);

// splitmix64 step; used to derive independent seeds from (seed, stream...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cmcss
