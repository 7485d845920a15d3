#include "omsd/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace omsd::data {

namespace {

using envs::BanditEnv;
using envs::ModeBanditEnv;
using envs::SpreadLiteEnv;

// Std of the Gaussian noise on scripted expert actions (before clipping).
constexpr double kExpertActionStd = 0.3;

void set_return_stats(DatasetMeta& meta, const std::vector<double>& returns) {
    meta.mean_return =
        std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    meta.max_return = *std::max_element(returns.begin(), returns.end());
}

}  // namespace

void MixtureSpec::validate() const {
    if (means.empty() || means.size() != weights.size())
        throw ConfigError("mixture: means/weights size mismatch");
    if (stddev <= 0.0) throw ConfigError("mixture: stddev must be positive");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("mixture: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture: weights must sum to 1");
    for (const auto& m : means)
        if (m.size() != means[0].size()) throw ConfigError("mixture: inconsistent mean dims");
}

MixtureSpec MixtureSpec::bandit_default() {
    MixtureSpec spec;
    Vector m0(2), m1(2);
    m0 << 0.8, 0.8;
    m1 << -0.8, -0.8;
    spec.means = {m0, m1};
    spec.weights = {0.5, 0.5};
    spec.stddev = 0.3;
    return spec;
}

Dataset gen_bandit_dataset(const MixtureSpec& spec, long n, uint64_t seed) {
    spec.validate();
    if (n < 1) throw ConfigError("gen_bandit_dataset: n must be >= 1");
    const int dim = static_cast<int>(spec.means[0].size());

    Dataset d;
    d.meta.env_id = "bandit";
    d.meta.n_agents = dim;
    d.meta.state_dim = 1;
    d.meta.action_dims.assign(static_cast<size_t>(dim), 1);
    d.meta.n_transitions = n;
    d.meta.quality = "mixture";
    d.meta.seed = seed;

    d.states = Matrix::Zero(1, n);
    d.next_states = Matrix::Zero(1, n);
    d.actions.resize(dim, n);
    d.rewards.resize(n);
    d.dones.assign(static_cast<size_t>(n), 1);

    BanditEnv env;
    Rng rng(seed);
    std::vector<double> cum(spec.weights.size());
    std::partial_sum(spec.weights.begin(), spec.weights.end(), cum.begin());
    std::vector<double> returns(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double u = rng.uniform();
        size_t comp = 0;
        while (comp + 1 < cum.size() && u >= cum[comp]) ++comp;
        Vector a(dim);
        for (int k = 0; k < dim; ++k)
            a(k) = std::clamp(rng.normal(spec.means[comp](k), spec.stddev), -1.0, 1.0);
        d.actions.col(i) = a;
        d.rewards(i) = (dim == 2) ? bandit_reward(env, a) : 0.0;
        returns[static_cast<size_t>(i)] = d.rewards(i);
    }
    set_return_stats(d.meta, returns);
    return d;
}

Dataset gen_mode_bandit_dataset(int n_agents, long n, double mode_std, uint64_t seed) {
    if (n < 2) throw ConfigError("gen_mode_bandit_dataset: n must be >= 2");
    if (n_agents < 1) throw ConfigError("gen_mode_bandit_dataset: n_agents must be >= 1");
    if (mode_std < 0.0) throw ConfigError("gen_mode_bandit_dataset: mode_std must be >= 0");

    Dataset d;
    d.meta.env_id = "mode_bandit";
    d.meta.n_agents = n_agents;
    d.meta.state_dim = 1;
    d.meta.action_dims.assign(static_cast<size_t>(n_agents), 1);
    d.meta.n_transitions = n;
    d.meta.quality = "two_mode";
    d.meta.seed = seed;

    d.states = Matrix::Zero(1, n);
    d.next_states = Matrix::Zero(1, n);
    d.actions.resize(n_agents, n);
    d.rewards.resize(n);
    d.dones.assign(static_cast<size_t>(n), 1);

    ModeBanditEnv env;
    env.n_agents = n_agents;
    Rng rng(seed);
    std::vector<double> returns(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double corner = (rng.uniform() < 0.5) ? 0.0 : 1.0;
        Vector a(n_agents);
        for (int k = 0; k < n_agents; ++k)
            a(k) = std::clamp(corner + (mode_std > 0.0 ? rng.normal(0.0, mode_std) : 0.0), 0.0, 1.0);
        d.actions.col(i) = a;
        d.rewards(i) = mode_bandit_reward(env, a);
        returns[static_cast<size_t>(i)] = d.rewards(i);
    }
    set_return_stats(d.meta, returns);
    return d;
}

const char* spread_tier_name(SpreadTier tier) {
    switch (tier) {
        case SpreadTier::Expert: return "expert";
        case SpreadTier::Medium: return "medium";
        case SpreadTier::Random: return "random";
    }
    return "unknown";
}

Dataset gen_spread_dataset(SpreadTier tier, long n_episodes, uint64_t seed) {
    if (n_episodes < 1) throw ConfigError("gen_spread_dataset: n_episodes must be >= 1");
    SpreadLiteEnv env;
    const long n = n_episodes * env.episode_length;

    Dataset d;
    d.meta.env_id = "spread_lite";
    d.meta.n_agents = SpreadLiteEnv::n_agents;
    d.meta.state_dim = SpreadLiteEnv::state_dim;
    d.meta.action_dims.assign(SpreadLiteEnv::n_agents, SpreadLiteEnv::action_dim_per_agent);
    d.meta.n_transitions = n;
    d.meta.quality = spread_tier_name(tier);
    d.meta.seed = seed;

    d.states.resize(d.meta.state_dim, n);
    d.actions.resize(d.meta.joint_action_dim(), n);
    d.rewards.resize(n);
    d.next_states.resize(d.meta.state_dim, n);
    d.dones.assign(static_cast<size_t>(n), 0);

    Rng rng(seed);
    std::vector<double> returns;
    returns.reserve(static_cast<size_t>(n_episodes));
    long col = 0;
    for (long ep = 0; ep < n_episodes; ++ep) {
        Vector state = envs::spread_reset(env, rng);
        // expert landmark assignment for this episode
        std::array<int, SpreadLiteEnv::n_agents> assign{0, 1, 2};
        for (int i = SpreadLiteEnv::n_agents - 1; i > 0; --i)
            std::swap(assign[static_cast<size_t>(i)],
                      assign[rng.index(static_cast<uint64_t>(i + 1))]);

        double episode_return = 0.0;
        for (int step = 0; step < env.episode_length; ++step) {
            Vector action(SpreadLiteEnv::n_agents * 2);
            const bool expert_step =
                tier == SpreadTier::Expert || (tier == SpreadTier::Medium && rng.uniform() < 0.5);
            for (int i = 0; i < SpreadLiteEnv::n_agents; ++i) {
                Vector a(2);
                if (expert_step) {
                    const Vector lm = state.segment(
                        2 * SpreadLiteEnv::n_agents + 2 * assign[static_cast<size_t>(i)], 2);
                    const Vector pos = state.segment(2 * i, 2);
                    // Full speed toward the landmark, preserving direction
                    // (a per-component clip would quantize far-away headings
                    // to box corners), plus behavior noise so the dataset's
                    // action density is wide enough to model.
                    Vector v = (lm - pos) / env.dt;
                    const double speed = v.cwiseAbs().maxCoeff();
                    if (speed > 1.0) v /= speed;
                    v(0) += rng.normal(0.0, kExpertActionStd);
                    v(1) += rng.normal(0.0, kExpertActionStd);
                    a = v.cwiseMax(-1.0).cwiseMin(1.0);
                } else {
                    a << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
                }
                action.segment(2 * i, 2) = a;
            }
            const auto res = envs::spread_step(env, state, action, step);
            d.states.col(col) = state;
            d.actions.col(col) = action;
            d.rewards(col) = res.reward;
            d.next_states.col(col) = res.next_state;
            d.dones[static_cast<size_t>(col)] = res.done ? 1 : 0;
            episode_return += res.reward;
            state = res.next_state;
            ++col;
        }
        returns.push_back(episode_return);
    }
    set_return_stats(d.meta, returns);
    return d;
}

Dataset gen_gaussian_dataset(const Vector& mean, double stddev, long n, uint64_t seed) {
    if (n < 1) throw ConfigError("gen_gaussian_dataset: n must be >= 1");
    if (stddev <= 0.0) throw ConfigError("gen_gaussian_dataset: stddev must be positive");
    const int dim = static_cast<int>(mean.size());

    Dataset d;
    d.meta.env_id = "gaussian";
    d.meta.n_agents = 1;
    d.meta.state_dim = 1;
    d.meta.action_dims = {dim};
    d.meta.n_transitions = n;
    d.meta.quality = "gaussian";
    d.meta.seed = seed;

    d.states = Matrix::Zero(1, n);
    d.next_states = Matrix::Zero(1, n);
    d.actions.resize(dim, n);
    d.rewards = Vector::Zero(n);
    d.dones.assign(static_cast<size_t>(n), 1);

    Rng rng(seed);
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) d.actions(k, i) = rng.normal(mean(k), stddev);
    d.meta.mean_return = 0.0;
    d.meta.max_return = 0.0;
    return d;
}

}  // namespace omsd::data
