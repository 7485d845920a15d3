#include "omsd/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace omsd::envs {

namespace {

double gaussian_kernel(const Vector& a, const Vector& c, double width) {
    return std::exp(-(a - c).squaredNorm() / (2.0 * width * width));
}

void check_box(const Vector& a, double lo, double hi, const char* op) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a(i) < lo || a(i) > hi)
            throw DomainError(std::string(op) + ": action component " + std::to_string(i) +
                              " = " + std::to_string(a(i)) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
}

Vector clamp_with_count(const Vector& a, double lo, double hi, long& warnings) {
    Vector out = a;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (out(i) < lo || out(i) > hi) {
            out(i) = std::clamp(out(i), lo, hi);
            ++warnings;
        }
    }
    return out;
}

}  // namespace

double bandit_reward(const BanditEnv& env, const Vector& joint_action) {
    if (joint_action.size() != 2) throw ShapeError("bandit_reward: expected 2-d joint action");
    check_box(joint_action, -1.0, 1.0, "bandit_reward");
    const double w = env.kernel_width;
    Vector m1(2), m2(2), x1(2), x2(2);
    m1 << 1, 1;
    m2 << -1, -1;
    x1 << 1, -1;
    x2 << -1, 1;
    return gaussian_kernel(joint_action, m1, w) + gaussian_kernel(joint_action, m2, w) -
           gaussian_kernel(joint_action, x1, w) - gaussian_kernel(joint_action, x2, w);
}

double mode_bandit_reward(const ModeBanditEnv& env, const Vector& joint_action) {
    if (joint_action.size() != env.n_agents)
        throw ShapeError("mode_bandit_reward: joint action dim != n_agents");
    check_box(joint_action, 0.0, 1.0, "mode_bandit_reward");
    const Vector ones = Vector::Ones(env.n_agents);
    const Vector zeros = Vector::Zero(env.n_agents);
    return std::max(gaussian_kernel(joint_action, ones, env.kernel_width),
                    gaussian_kernel(joint_action, zeros, env.kernel_width));
}

Vector spread_reset(const SpreadLiteEnv& env, Rng& rng) {
    Vector state(SpreadLiteEnv::state_dim);
    for (Eigen::Index i = 0; i < state.size(); ++i) state(i) = rng.uniform(-1.0, 1.0);
    (void)env;
    return state;
}

double spread_reward(const SpreadLiteEnv& env, const Vector& state) {
    double reward = 0.0;
    // -sum over landmarks of min agent distance
    for (int l = 0; l < SpreadLiteEnv::n_landmarks; ++l) {
        const Vector lm = state.segment(2 * SpreadLiteEnv::n_agents + 2 * l, 2);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < SpreadLiteEnv::n_agents; ++i)
            best = std::min(best, (state.segment(2 * i, 2) - lm).norm());
        reward -= best;
    }
    // collision penalty per overlapping agent pair
    for (int i = 0; i < SpreadLiteEnv::n_agents; ++i)
        for (int j = i + 1; j < SpreadLiteEnv::n_agents; ++j)
            if ((state.segment(2 * i, 2) - state.segment(2 * j, 2)).norm() < env.collision_radius)
                reward -= env.collision_penalty;
    return reward;
}

StepResult spread_step(const SpreadLiteEnv& env, const Vector& state, const Vector& joint_action,
                       int step_index) {
    if (state.size() != SpreadLiteEnv::state_dim)
        throw ShapeError("spread_step: bad state dimension");
    if (joint_action.size() != SpreadLiteEnv::n_agents * SpreadLiteEnv::action_dim_per_agent)
        throw ShapeError("spread_step: bad joint action dimension");
    check_box(joint_action, -1.0, 1.0, "spread_step");

    StepResult result;
    result.next_state = state;
    for (int i = 0; i < SpreadLiteEnv::n_agents; ++i) {
        Vector pos = state.segment(2 * i, 2) + env.dt * joint_action.segment(2 * i, 2);
        pos = pos.cwiseMax(-1.0).cwiseMin(1.0);
        result.next_state.segment(2 * i, 2) = pos;
    }
    result.reward = spread_reward(env, result.next_state);
    result.done = (step_index + 1 >= env.episode_length);
    return result;
}

Trajectory rollout(const std::vector<PolicyFn>& policies, const BanditEnv& env, uint64_t seed) {
    (void)seed;  // bandit episodes are deterministic single steps
    if (policies.size() != BanditEnv::n_agents)
        throw ConfigError("rollout: bandit needs one policy per agent");
    Trajectory traj;
    Vector state = Vector::Zero(1);
    Vector action(2);
    for (int i = 0; i < 2; ++i) {
        Vector a = policies[i](state);
        if (a.size() != 1) throw ShapeError("rollout: bandit agent action must be 1-d");
        action(i) = a(0);
    }
    action = clamp_with_count(action, -1.0, 1.0, traj.clamp_warnings);
    Transition tr;
    tr.state = state;
    tr.joint_action = action;
    tr.reward = bandit_reward(env, action);
    tr.next_state = state;
    tr.done = true;
    traj.episode_return = tr.reward;
    traj.transitions.push_back(std::move(tr));
    return traj;
}

Trajectory rollout(const std::vector<PolicyFn>& policies, const ModeBanditEnv& env, uint64_t seed) {
    (void)seed;
    if (static_cast<int>(policies.size()) != env.n_agents)
        throw ConfigError("rollout: mode bandit needs one policy per agent");
    Trajectory traj;
    Vector state = Vector::Zero(1);
    Vector action(env.n_agents);
    for (int i = 0; i < env.n_agents; ++i) {
        Vector a = policies[i](state);
        if (a.size() != 1) throw ShapeError("rollout: mode bandit agent action must be 1-d");
        action(i) = a(0);
    }
    for (Eigen::Index i = 0; i < action.size(); ++i) {
        if (action(i) < 0.0 || action(i) > 1.0) {
            action(i) = std::clamp(action(i), 0.0, 1.0);
            ++traj.clamp_warnings;
        }
    }
    Transition tr;
    tr.state = state;
    tr.joint_action = action;
    tr.reward = mode_bandit_reward(env, action);
    tr.next_state = state;
    tr.done = true;
    traj.episode_return = tr.reward;
    traj.transitions.push_back(std::move(tr));
    return traj;
}

Trajectory rollout(const std::vector<PolicyFn>& policies, const SpreadLiteEnv& env, uint64_t seed) {
    if (static_cast<int>(policies.size()) != SpreadLiteEnv::n_agents)
        throw ConfigError("rollout: spread needs one policy per agent");
    Rng rng(seed);
    Trajectory traj;
    Vector state = spread_reset(env, rng);
    for (int step = 0; step < env.episode_length; ++step) {
        Vector action(SpreadLiteEnv::n_agents * 2);
        for (int i = 0; i < SpreadLiteEnv::n_agents; ++i) {
            Vector a = policies[i](state);
            if (a.size() != 2) throw ShapeError("rollout: spread agent action must be 2-d");
            action.segment(2 * i, 2) = a;
        }
        action = clamp_with_count(action, -1.0, 1.0, traj.clamp_warnings);
        StepResult res = spread_step(env, state, action, step);
        Transition tr;
        tr.state = state;
        tr.joint_action = action;
        tr.reward = res.reward;
        tr.next_state = res.next_state;
        tr.done = res.done;
        traj.episode_return += res.reward;
        traj.transitions.push_back(std::move(tr));
        state = res.next_state;
    }
    return traj;
}

}  // namespace omsd::envs
