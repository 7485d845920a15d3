#pragma once

#include <string>

#include "omsd/dataset.hpp"
#include "omsd/envs.hpp"
#include "omsd/policy.hpp"

namespace omsd::analysis {

using nn::Matrix;
using nn::Vector;

// 100 * (s - s_random) / (s_expert - s_random)
double normalized_score(double s, double s_random, double s_expert);

// Total variation between a two-corner joint (mass 1/2 on all-zeros and
// all-ones) and the product of its per-agent marginals.
double tv_factorized_analytic(int n);      // 1 - 2^(1-n)
double tv_factorized_enumerate(int n);     // explicit 2^n corner sum, n <= 20

struct CornerMass {
    uint32_t corner = 0;  // bit k = agent k's half
    double joint = 0.0;
    double product = 0.0;
};

struct FactorizationReport {
    int n_agents = 0;
    int bins = 0;
    double analytic_tv = 0.0;
    double empirical_tv = 0.0;
    std::vector<Vector> marginals;       // per agent, histogram probabilities
    std::vector<CornerMass> mode_table;  // populated when bins == 2
    std::vector<std::string> warnings;
};

// Histogram the per-agent marginals and the joint over [0,1]^n on a binned
// grid and compare the product of marginals against the joint.
FactorizationReport tv_factorized_empirical(const data::Dataset& dataset, int bins);

struct ScoreReport {
    std::vector<uint64_t> seeds;
    std::vector<double> seed_means;
    std::vector<double> seed_stds;  // across episodes within a seed
    double pooled_mean = 0.0;
    double pooled_std = 0.0;  // sample std across seed means
    bool has_normalization = false;
    double s_random = 0.0;
    double s_expert = 0.0;
    double normalized = 0.0;

    std::string to_csv() const;
};

ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::BanditEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds);
ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::ModeBanditEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds);
ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::SpreadLiteEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds);

void add_normalization(ScoreReport& report, double s_random, double s_expert);

// 2-component PCA over dataset (state, joint action) vectors with the logged
// policy trajectory overlaid. Deterministic output for identical inputs.
struct VizResult {
    Matrix dataset_proj;  // 2 x m
    Matrix policy_proj;   // 2 x k, trajectory order
    std::vector<long> policy_steps;
    std::string csv;
    std::string svg;
    std::vector<std::string> warnings;
};

VizResult pca_policy_viz(const data::Dataset& dataset, const policy::TrainLog& log,
                         long max_points = 2000);

// Monotone-chain hull and containment helpers for trajectory-endpoint checks.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> points);
bool point_in_hull(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& hull);

}  // namespace omsd::analysis
