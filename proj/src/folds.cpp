#include "cmcss/folds.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cmcss/error.hpp"

namespace cmcss {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

FoldPlan stratified_folds(const Cohort& cohort, std::size_t k, std::size_t repeats, double inner_val_fraction,
                          std::uint64_t seed) {
    return stratified_folds(cohort.labels(), k, repeats, inner_val_fraction, seed);
}

FoldPlan stratified_folds(const std::vector<int>& labels, std::size_t k, std::size_t repeats,
                          double inner_val_fraction, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k must be >= 2");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (!(inner_val_fraction > 0.0 && inner_val_fraction < 1.0))
        throw ConfigError("inner_val_fraction must lie in (0, 1)");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < k)
            throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                              " subjects, fewer than k=" + std::to_string(k) + "; use a smaller k");
    }

    FoldPlan plan;
    plan.k = k;
    plan.repeats = repeats;
    plan.inner_val_fraction = inner_val_fraction;
    plan.seed = seed;
    plan.fold_of.assign(repeats, std::vector<std::size_t>(labels.size(), 0));
    for (std::size_t r = 0; r < repeats; ++r) {
        std::mt19937_64 rng(seed + r);
        // Round-robin per class; the second class continues where the first
        // stopped so fold sizes differ by at most one overall.
        std::size_t next = 0;
        for (auto members : by_class) {
            std::shuffle(members.begin(), members.end(), rng);
            for (std::size_t s : members) {
                plan.fold_of[r][s] = next;
                next = (next + 1) % k;
            }
        }
    }
    return plan;
}

std::vector<std::size_t> FoldPlan::test_indices(std::size_t repeat, std::size_t fold) const {
    std::vector<std::size_t> out;
    const auto& assign = fold_of.at(repeat);
    for (std::size_t s = 0; s < assign.size(); ++s)
        if (assign[s] == fold) out.push_back(s);
    return out;
}

void stratified_holdout(const std::vector<std::size_t>& indices, const std::vector<int>& labels, double fraction,
                        std::uint64_t seed, std::vector<std::size_t>& kept, std::vector<std::size_t>& held_out) {
    kept.clear();
    held_out.clear();
    std::mt19937_64 rng(seed);
    for (int c = 0; c < 2; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i : indices)
            if (labels.at(i) == c) members.push_back(i);
        std::shuffle(members.begin(), members.end(), rng);
        auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        if (take == 0 && members.size() >= 3) take = 1;
        if (members.size() >= 1) take = std::min(take, members.size() - 1);
        held_out.insert(held_out.end(), members.begin(), members.begin() + static_cast<long>(take));
        kept.insert(kept.end(), members.begin() + static_cast<long>(take), members.end());
    }
    if (held_out.empty() && kept.size() > 1) {
        held_out.push_back(kept.back());
        kept.pop_back();
    }
    std::sort(kept.begin(), kept.end());
    std::sort(held_out.begin(), held_out.end());
}

Split FoldPlan::split(const std::vector<int>& labels, std::size_t repeat, std::size_t fold) const {
    Split s;
    s.test = test_indices(repeat, fold);
    std::vector<std::size_t> rest;
    const auto& assign = fold_of.at(repeat);
    for (std::size_t i = 0; i < assign.size(); ++i)
        if (assign[i] != fold) rest.push_back(i);
    stratified_holdout(rest, labels, inner_val_fraction, derive_seed(seed, repeat * 1000003 + fold), s.train,
                       s.validation);
    return s;
}

}  // namespace cmcss
