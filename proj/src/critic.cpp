#include "omsd/critic.hpp"

#include <cmath>
#include <filesystem>

#include "omsd/checkpoint.hpp"

namespace omsd::critic {

using nn::ForwardCache;
using nn::MlpGrads;
using nn::MlpSpec;

void CriticTrainConfig::validate() const {
    if (steps_per_epoch < 1 || epochs < 1 || batch_size < 1)
        throw ConfigError("critic config: counts must be positive");
    if (expectile_tau <= 0.0 || expectile_tau >= 1.0)
        throw ConfigError("critic config: expectile tau must be in (0,1)");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("critic config: gamma must be in [0,1]");
}

JointCritic JointCritic::create(int state_dim, int action_dim, int action_offset,
                                const CriticTrainConfig& config, Rng& rng) {
    JointCritic c;
    c.state_dim = state_dim;
    c.action_dim = action_dim;
    c.action_offset = action_offset;
    c.expectile_tau = config.expectile_tau;
    c.gamma = config.gamma;
    c.target_tau = config.target_tau;

    MlpSpec q_spec;
    q_spec.input_dim = state_dim + action_dim;
    q_spec.hidden_dims = config.hidden_dims;
    q_spec.output_dim = 1;
    MlpSpec v_spec = q_spec;
    v_spec.input_dim = state_dim;

    Rng r1 = rng.child(1), r2 = rng.child(2), r3 = rng.child(3);
    c.q1 = nn::MlpParams::init(q_spec, r1);
    c.q2 = nn::MlpParams::init(q_spec, r2);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    c.v = nn::MlpParams::init(v_spec, r3);

    nn::OptimizerConfig opt;
    opt.lr = config.lr;
    c.opt_q1 = nn::OptimizerState::create(c.q1, opt);
    c.opt_q2 = nn::OptimizerState::create(c.q2, opt);
    c.opt_v = nn::OptimizerState::create(c.v, opt);
    return c;
}

Matrix JointCritic::action_block(const Matrix& joint_actions) const {
    if (joint_actions.rows() == action_dim && action_offset == 0) return joint_actions;
    return joint_actions.middleRows(action_offset, action_dim);
}

Vector JointCritic::min_q(const Matrix& states, const Matrix& actions) const {
    Matrix x(state_dim + action_dim, states.cols());
    x.topRows(state_dim) = states;
    x.bottomRows(action_dim) = actions;
    const Matrix v1 = nn::mlp_forward(q1, x);
    const Matrix v2 = nn::mlp_forward(q2, x);
    return v1.cwiseMin(v2).row(0);
}

Vector JointCritic::v_value(const Matrix& states) const {
    return nn::mlp_forward(v, states).row(0);
}

double expectile_loss(double u, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw ConfigError("expectile_loss: tau must be in (0,1)");
    const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
    return w * u * u;
}

double v_step(JointCritic& critic, const data::Batch& batch) {
    const Eigen::Index n = batch.size();
    Matrix x(critic.state_dim + critic.action_dim, n);
    x.topRows(critic.state_dim) = batch.states;
    x.bottomRows(critic.action_dim) = critic.action_block(batch.actions);

    const Matrix qt1 = nn::mlp_forward(critic.q1_target, x);
    const Matrix qt2 = nn::mlp_forward(critic.q2_target, x);
    const Matrix q_min = qt1.cwiseMin(qt2);

    ForwardCache cache;
    const Matrix v_out = nn::mlp_forward(critic.v, batch.states, &cache);

    double loss = 0.0;
    Matrix upstream(1, n);
    const double tau = critic.expectile_tau;
    for (Eigen::Index b = 0; b < n; ++b) {
        const double u = q_min(0, b) - v_out(0, b);
        const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
        loss += w * u * u;
        // dL/dV = -2 w u / n
        upstream(0, b) = -2.0 * w * u / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
        throw DivergenceError("v_step: non-finite loss at step " + std::to_string(critic.opt_v.step));

    MlpGrads grads = nn::mlp_backward(critic.v, cache, upstream);
    nn::optimizer_step(critic.opt_v, critic.v, grads);
    return loss;
}

double q_step(JointCritic& critic, const data::Batch& batch) {
    const Eigen::Index n = batch.size();
    Matrix x(critic.state_dim + critic.action_dim, n);
    x.topRows(critic.state_dim) = batch.states;
    x.bottomRows(critic.action_dim) = critic.action_block(batch.actions);

    const Vector v_next = critic.v_value(batch.next_states);
    Vector target(n);
    for (Eigen::Index b = 0; b < n; ++b)
        target(b) = batch.rewards(b) + critic.gamma * (1.0 - batch.dones(b)) * v_next(b);

    double loss = 0.0;
    std::pair<nn::MlpParams*, nn::OptimizerState*> nets[2] = {{&critic.q1, &critic.opt_q1},
                                                              {&critic.q2, &critic.opt_q2}};
    for (auto& [params, opt] : nets) {
        ForwardCache cache;
        const Matrix q_out = nn::mlp_forward(*params, x, &cache);
        Matrix upstream(1, n);
        for (Eigen::Index b = 0; b < n; ++b) {
            const double resid = q_out(0, b) - target(b);
            loss += resid * resid;
            upstream(0, b) = 2.0 * resid / static_cast<double>(n);
        }
        MlpGrads grads = nn::mlp_backward(*params, cache, upstream);
        nn::optimizer_step(*opt, *params, grads);
    }
    loss /= static_cast<double>(2 * n);
    if (!std::isfinite(loss))
        throw DivergenceError("q_step: non-finite loss at step " + std::to_string(critic.opt_q1.step));

    nn::soft_update(critic.q1_target, critic.q1, critic.target_tau);
    nn::soft_update(critic.q2_target, critic.q2, critic.target_tau);
    return loss;
}

Matrix critic_action_grad(const JointCritic& critic, const Matrix& states, const Matrix& actions,
                          Vector* q_values) {
    const Eigen::Index n = states.cols();
    Matrix x(critic.state_dim + critic.action_dim, n);
    x.topRows(critic.state_dim) = states;
    x.bottomRows(critic.action_dim) = actions;

    ForwardCache c1, c2;
    const Matrix v1 = nn::mlp_forward(critic.q1, x, &c1);
    const Matrix v2 = nn::mlp_forward(critic.q2, x, &c2);

    Matrix mask1(1, n), mask2(1, n);
    for (Eigen::Index b = 0; b < n; ++b) {
        const bool first = v1(0, b) <= v2(0, b);
        mask1(0, b) = first ? 1.0 : 0.0;
        mask2(0, b) = first ? 0.0 : 1.0;
    }
    const MlpGrads g1 = nn::mlp_backward(critic.q1, c1, mask1);
    const MlpGrads g2 = nn::mlp_backward(critic.q2, c2, mask2);
    if (q_values) *q_values = v1.cwiseMin(v2).row(0);
    return (g1.input + g2.input).bottomRows(critic.action_dim);
}

CriticSet pretrain_critic(const data::Dataset& dataset, const CriticTrainConfig& config,
                          CriticMode mode, uint64_t seed, const std::string& checkpoint_dir) {
    config.validate();
    dataset.validate();
    Rng rng(seed);

    CriticSet set;
    set.mode = mode;
    const int joint_dim = dataset.meta.joint_action_dim();
    if (mode == CriticMode::Joint) {
        Rng crng = rng.child(0);
        set.critics.push_back(
            JointCritic::create(dataset.meta.state_dim, joint_dim, 0, config, crng));
    } else {
        for (int i = 0; i < dataset.meta.n_agents; ++i) {
            Rng crng = rng.child(static_cast<uint64_t>(i));
            set.critics.push_back(JointCritic::create(dataset.meta.state_dim,
                                                      dataset.meta.action_dims[static_cast<size_t>(i)],
                                                      dataset.agent_action_offset(i), config, crng));
        }
    }

    data::BatchSampler sampler(dataset, config.batch_size, rng.next_u64());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (int step = 0; step < config.steps_per_epoch; ++step) {
            const data::Batch batch = sampler.sample();
            for (auto& c : set.critics) {
                v_step(c, batch);
                q_step(c, batch);
            }
        }
        const bool last = (epoch + 1 == config.epochs);
        if (!checkpoint_dir.empty() &&
            ((epoch + 1) % config.checkpoint_every_epochs == 0 || last)) {
            save_critic(set, checkpoint_dir, "critic_epoch" + std::to_string(epoch + 1));
        }
    }
    return set;
}

namespace {

const char* kRoles[] = {"q1", "q2", "q1t", "q2t", "v"};

nn::MlpParams& role_params(JointCritic& c, int role) {
    switch (role) {
        case 0: return c.q1;
        case 1: return c.q2;
        case 2: return c.q1_target;
        case 3: return c.q2_target;
        default: return c.v;
    }
}

}  // namespace

void save_critic(const CriticSet& set, const std::string& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < set.critics.size(); ++i) {
        const JointCritic& c = set.critics[i];
        for (int role = 0; role < 5; ++role) {
            nn::Checkpoint ckpt;
            ckpt.add_params("net", role_params(const_cast<JointCritic&>(c), role));
            ckpt.meta["role"] = kRoles[role];
            ckpt.meta["agent"] = static_cast<int>(i);
            ckpt.meta["mode"] = set.mode == CriticMode::Joint ? "joint" : "independent";
            ckpt.meta["expectile_tau"] = c.expectile_tau;
            ckpt.meta["gamma"] = c.gamma;
            ckpt.meta["action_offset"] = c.action_offset;
            ckpt.save(dir + "/" + stem + "_a" + std::to_string(i) + "_" + kRoles[role] + ".nn");
        }
    }
}

CriticSet load_critic(const std::string& dir, const std::string& stem,
                      const CriticTrainConfig& config) {
    CriticSet set;
    int agent = 0;
    while (true) {
        const std::string base = dir + "/" + stem + "_a" + std::to_string(agent) + "_";
        if (!std::filesystem::exists(base + "q1.nn")) break;
        JointCritic c;
        for (int role = 0; role < 5; ++role) {
            const auto ckpt = nn::Checkpoint::load(base + kRoles[role] + ".nn");
            role_params(c, role) = ckpt.get_params("net");
            if (role == 0) {
                set.mode = ckpt.meta.at("mode").get<std::string>() == "joint"
                               ? CriticMode::Joint
                               : CriticMode::Independent;
                c.expectile_tau = ckpt.meta.at("expectile_tau").get<double>();
                c.gamma = ckpt.meta.at("gamma").get<double>();
                c.action_offset = ckpt.meta.at("action_offset").get<int>();
            }
        }
        c.action_dim = static_cast<int>(c.q1.spec.input_dim - c.v.spec.input_dim);
        c.state_dim = c.v.spec.input_dim;
        c.target_tau = config.target_tau;
        nn::OptimizerConfig opt;
        opt.lr = config.lr;
        c.opt_q1 = nn::OptimizerState::create(c.q1, opt);
        c.opt_q2 = nn::OptimizerState::create(c.q2, opt);
        c.opt_v = nn::OptimizerState::create(c.v, opt);
        set.critics.push_back(std::move(c));
        ++agent;
    }
    if (set.critics.empty()) throw ConfigError("load_critic: no checkpoints under " + dir);
    return set;
}

AwrActorSet make_awr_actors(const data::DatasetMeta& meta, const std::vector<int>& hidden_dims,
                            double lr, Rng& rng) {
    AwrActorSet set;
    for (int i = 0; i < meta.n_agents; ++i) {
        MlpSpec spec;
        spec.input_dim = meta.state_dim;
        spec.hidden_dims = hidden_dims;
        spec.output_dim = meta.action_dims[static_cast<size_t>(i)];
        spec.output_activation = nn::OutputActivation::Tanh;
        Rng arng = rng.child(static_cast<uint64_t>(i));
        set.actors.push_back(nn::MlpParams::init(spec, arng));
        nn::OptimizerConfig opt;
        opt.lr = lr;
        set.opts.push_back(nn::OptimizerState::create(set.actors.back(), opt));
    }
    return set;
}

double awr_actor_step(const JointCritic& critic, AwrActorSet& actors, const data::Batch& batch,
                      double temperature, AdvClamp clamp_mode) {
    const Eigen::Index n = batch.size();
    const Vector q = critic.min_q(batch.states, critic.action_block(batch.actions));
    const Vector v = critic.v_value(batch.states);

    Vector weights(n);
    for (Eigen::Index b = 0; b < n; ++b) {
        double adv = q(b) - v(b);
        if (clamp_mode == AdvClamp::AdvClampUnit) adv = std::clamp(adv, -1.0, 1.0);
        double w = std::exp(temperature * adv);
        if (clamp_mode == AdvClamp::ExpClamp100) w = std::min(w, 100.0);
        weights(b) = w;
    }

    double loss = 0.0;
    int offset = 0;
    for (size_t i = 0; i < actors.actors.size(); ++i) {
        const int dim = actors.actors[i].spec.output_dim;
        const Matrix target = batch.actions.middleRows(offset, dim);
        ForwardCache cache;
        const Matrix out = nn::mlp_forward(actors.actors[i], batch.states, &cache);
        Matrix upstream = out - target;
        for (Eigen::Index b = 0; b < n; ++b) {
            loss += weights(b) * upstream.col(b).squaredNorm();
            upstream.col(b) *= 2.0 * weights(b) / static_cast<double>(n);
        }
        MlpGrads grads = nn::mlp_backward(actors.actors[i], cache, upstream);
        nn::optimizer_step(actors.opts[i], actors.actors[i], grads);
        offset += dim;
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw DivergenceError("awr_actor_step: non-finite loss");
    return loss;
}

}  // namespace omsd::critic
