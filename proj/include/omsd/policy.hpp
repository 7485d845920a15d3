#pragma once

#include <functional>
#include <string>

#include "omsd/critic.hpp"
#include "omsd/dataset.hpp"
#include "omsd/diffusion.hpp"
#include "omsd/envs.hpp"
#include "omsd/nn.hpp"

namespace omsd::policy {

using nn::Matrix;
using nn::Vector;

enum class Algorithm { Omsd, BrpoJal, BrpoInd, BrpoIgo };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

struct ExtractionConfig {
    Algorithm algorithm = Algorithm::Omsd;
    double beta = 1.0;
    long steps = 100000;
    int batch_size = 256;
    double lr = 3e-4;
    nn::Anneal anneal = nn::Anneal::Cosine;
    long eval_interval = 1000;  // 0 disables rollout evaluation
    int eval_episodes = 10;
    long log_interval = 100;
    double t_eval = 0.02;
    std::vector<int> hidden_dims = {256, 256};
    std::vector<int> order;  // actor update order; empty = identity
    // Sequential updates read earlier agents' actions from the parameters
    // already updated this step (true) or from the step-start snapshot.
    bool prefix_uses_updated = true;

    void validate() const;
};

// Deterministic tanh actors, one per agent (a single joint actor for JAL).
struct ActorSet {
    std::vector<nn::MlpParams> actors;
    std::vector<nn::OptimizerState> opts;
    std::vector<int> action_dims;
    std::vector<int> action_offsets;  // rows within the joint action
    std::vector<int> order;           // update order over actor indices
    int state_dim = 0;

    int n_actors() const { return static_cast<int>(actors.size()); }
    int joint_action_dim() const;
    Matrix joint_actions(const Matrix& states) const;
    // Decentralized execution closures over the joint action layout.
    std::vector<envs::PolicyFn> env_policies(int n_agents) const;
};

ActorSet make_actors(const data::DatasetMeta& meta, const ExtractionConfig& config, uint64_t seed);
ActorSet make_joint_actor(const data::DatasetMeta& meta, const ExtractionConfig& config,
                          uint64_t seed);

struct LogRecord {
    long step = 0;
    int agent = 0;
    double q_grad_norm = 0.0;
    double score_norm = 0.0;
    bool has_eval = false;
    double eval_mean = 0.0;
    double eval_std = 0.0;
    Vector probe_action;  // joint action at the probe state
};

struct TrainLog {
    int joint_action_dim = 0;
    std::vector<LogRecord> records;

    std::string to_csv() const;
    void save_csv(const std::string& path) const;
};

struct ExtractionInputs {
    const data::Dataset* dataset = nullptr;
    const critic::CriticSet* critics = nullptr;
    // One score model per actor; JAL passes a single joint model.
    const std::vector<diffusion::ScoreModel>* scores = nullptr;
};

struct StepStats {
    std::vector<double> q_grad_norm;  // mean per-sample norm, per actor
    std::vector<double> score_norm;   // includes the 1/beta factor
};

StepStats extraction_step(ActorSet& actors, const ExtractionInputs& inputs,
                          const data::Batch& batch, const ExtractionConfig& config);

// Mean/std of episode returns for rollout evaluation at a given step.
using EvalFn = std::function<std::pair<double, double>(const ActorSet&, long step)>;

struct ExtractionResult {
    ActorSet actors;
    TrainLog log;
};

ExtractionResult extract(const ExtractionInputs& inputs, const ExtractionConfig& config,
                         uint64_t seed, const EvalFn& eval = {},
                         const Vector* probe_state = nullptr);

void save_actors(const ActorSet& actors, const std::string& dir, const std::string& stem);
ActorSet load_actors(const std::string& dir, const std::string& stem);

}  // namespace omsd::policy
