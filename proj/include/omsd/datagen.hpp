#pragma once

#include "omsd/dataset.hpp"
#include "omsd/envs.hpp"

namespace omsd::data {

struct MixtureSpec {
    std::vector<Vector> means;   // joint-action space
    double stddev = 0.3;         // shared across components
    std::vector<double> weights; // sums to 1

    void validate() const;
    // Default bandit dataset: equal-weight components at +-0.8 per dim.
    static MixtureSpec bandit_default();
};

// n joint actions iid from the mixture, clamped to [-1,1]^d; rewards from
// bandit_reward; constant dummy state of dimension 1.
Dataset gen_bandit_dataset(const MixtureSpec& spec, long n, uint64_t seed);

// Half the samples near each of the two all-equal corners of [0,1]^n_agents.
Dataset gen_mode_bandit_dataset(int n_agents, long n, double mode_std, uint64_t seed);

enum class SpreadTier { Expert, Medium, Random };

// Scripted SpreadLite episodes. Expert assigns agents to landmarks under a
// per-episode random permutation and drives each agent at full speed toward
// its landmark; medium mixes expert and uniform actions per step; random is
// uniform.
Dataset gen_spread_dataset(SpreadTier tier, long n_episodes, uint64_t seed);

const char* spread_tier_name(SpreadTier tier);

// Plain isotropic Gaussian action dataset (no clamping); used for score
// oracle studies where boundary effects would bias the analytic comparison.
Dataset gen_gaussian_dataset(const Vector& mean, double stddev, long n, uint64_t seed);

}  // namespace omsd::data
