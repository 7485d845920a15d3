#pragma once

#include <optional>
#include <string>

#include "omsd/dataset.hpp"
#include "omsd/nn.hpp"

namespace omsd::critic {

using nn::Matrix;
using nn::Vector;

enum class AdvClamp { ExpClamp100, AdvClampUnit };

struct CriticTrainConfig {
    int steps_per_epoch = 1000;
    int epochs = 200;
    double expectile_tau = 0.7;
    double temperature = 3.0;  // AWR actor
    double lr = 3e-4;
    double gamma = 0.99;
    double target_tau = 0.005;
    int batch_size = 512;
    AdvClamp adv_clamp = AdvClamp::ExpClamp100;
    int checkpoint_every_epochs = 50;
    std::vector<int> hidden_dims = {256, 256};

    void validate() const;
};

// Double Q with targets plus expectile-regressed V. For independent critics
// the action block is a per-agent slice of the joint action columns.
struct JointCritic {
    nn::MlpParams q1, q2, q1_target, q2_target, v;
    nn::OptimizerState opt_q1, opt_q2, opt_v;
    double expectile_tau = 0.7;
    double gamma = 0.99;
    double target_tau = 0.005;
    int state_dim = 0;
    int action_dim = 0;
    int action_offset = 0;  // row offset into the joint action block

    static JointCritic create(int state_dim, int action_dim, int action_offset,
                              const CriticTrainConfig& config, Rng& rng);

    Matrix action_block(const Matrix& joint_actions) const;
    // min(Q1, Q2) over columns of (states, actions).
    Vector min_q(const Matrix& states, const Matrix& actions) const;
    Vector v_value(const Matrix& states) const;
};

double expectile_loss(double u, double tau);

double v_step(JointCritic& critic, const data::Batch& batch);
double q_step(JointCritic& critic, const data::Batch& batch);

// d min(Q1,Q2)/d action for each column; optionally returns the min-Q values.
Matrix critic_action_grad(const JointCritic& critic, const Matrix& states, const Matrix& actions,
                          Vector* q_values = nullptr);

enum class CriticMode { Joint, Independent };

struct CriticSet {
    CriticMode mode = CriticMode::Joint;
    std::vector<JointCritic> critics;  // 1 for Joint, n_agents for Independent
};

CriticSet pretrain_critic(const data::Dataset& dataset, const CriticTrainConfig& config,
                          CriticMode mode, uint64_t seed, const std::string& checkpoint_dir = "");

void save_critic(const CriticSet& set, const std::string& dir, const std::string& stem);
CriticSet load_critic(const std::string& dir, const std::string& stem,
                      const CriticTrainConfig& config);

// Advantage-weighted regression actor (the "pretrained IQL" baseline).
struct AwrActorSet {
    std::vector<nn::MlpParams> actors;
    std::vector<nn::OptimizerState> opts;
};

AwrActorSet make_awr_actors(const data::DatasetMeta& meta, const std::vector<int>& hidden_dims,
                            double lr, Rng& rng);

double awr_actor_step(const JointCritic& critic, AwrActorSet& actors, const data::Batch& batch,
                      double temperature, AdvClamp clamp_mode);

}  // namespace omsd::critic
