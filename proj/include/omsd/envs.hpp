#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "omsd/errors.hpp"
#include "omsd/rng.hpp"

namespace omsd::envs {

using Vector = Eigen::VectorXd;

// 2-agent continuous bandit. Joint actions in [-1,1]^2; coordinated corners
// (1,1) and (-1,-1) pay +1, anti-coordinated corners pay -1.
struct BanditEnv {
    static constexpr int n_agents = 2;
    double kernel_width = 0.3;  // sigma_r
};

double bandit_reward(const BanditEnv& env, const Vector& joint_action);

// n-agent single-state game on [0,1]^n with two optimal corners (all-ones,
// all-zeros); reward is the larger of two product Gaussian kernels.
struct ModeBanditEnv {
    int n_agents = 2;
    double kernel_width = 0.3;
};

double mode_bandit_reward(const ModeBanditEnv& env, const Vector& joint_action);

// Scripted cooperative-navigation toy: 3 holonomic point agents spread over
// 3 landmarks in [-1,1]^2. State = agent positions then landmark positions.
struct SpreadLiteEnv {
    static constexpr int n_agents = 3;
    static constexpr int n_landmarks = 3;
    static constexpr int state_dim = 2 * n_agents + 2 * n_landmarks;  // 12
    static constexpr int action_dim_per_agent = 2;
    int episode_length = 25;
    double dt = 0.1;
    double collision_radius = 0.15;
    double collision_penalty = 1.0;
};

Vector spread_reset(const SpreadLiteEnv& env, Rng& rng);
double spread_reward(const SpreadLiteEnv& env, const Vector& state);

struct StepResult {
    Vector next_state;
    double reward = 0.0;
    bool done = false;
};

StepResult spread_step(const SpreadLiteEnv& env, const Vector& state, const Vector& joint_action,
                       int step_index);

struct Transition {
    Vector state;
    Vector joint_action;
    double reward = 0.0;
    Vector next_state;
    bool done = false;
};

struct Trajectory {
    std::vector<Transition> transitions;
    double episode_return = 0.0;
    long clamp_warnings = 0;  // policy outputs that left the action box
};

// One decentralized policy per agent: state -> own action.
using PolicyFn = std::function<Vector(const Vector&)>;

// Deterministic given (policies, seed). Bandit episodes have length 1.
Trajectory rollout(const std::vector<PolicyFn>& policies, const BanditEnv& env, uint64_t seed);
Trajectory rollout(const std::vector<PolicyFn>& policies, const ModeBanditEnv& env, uint64_t seed);
Trajectory rollout(const std::vector<PolicyFn>& policies, const SpreadLiteEnv& env, uint64_t seed);

}  // namespace omsd::envs
