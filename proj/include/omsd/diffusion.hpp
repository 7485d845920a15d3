#pragma once

#include <utility>

#include "omsd/dataset.hpp"
#include "omsd/nn.hpp"

namespace omsd::diffusion {

using nn::Matrix;
using nn::Vector;

// Continuous-time variance-preserving schedule:
//   alpha_t = exp(-t^2 (beta_max - beta_min)/4 - t beta_min/2), sigma_t = sqrt(1 - alpha_t^2)
struct VpSchedule {
    double beta_min = 0.1;
    double beta_max = 20.0;

    double alpha(double t) const;
    double sigma(double t) const;
    std::pair<double, double> alpha_sigma(double t) const;  // throws DomainError outside [0,1]
};

// a_t = alpha_t * a + sigma_t * eps
Matrix perturb(const Matrix& actions, double t, const Matrix& eps, const VpSchedule& schedule);

enum class CondMode { Independent, Joint, Sequential };

struct ScoreModelConfig {
    CondMode mode = CondMode::Independent;
    int agent_index = 0;
    int state_dim = 0;
    int action_dim = 0;  // modeled action
    int prefix_dim = 0;  // conditioning actions (sequential mode)
    int cond_embed_dim = 32;
    int time_projection_dim = 32;
    int time_embed_dim = 64;
    std::vector<int> hidden_dims = {512, 512};
    double t_min = 0.02;
    double t_max = 0.98;
};

// Conditional noise predictor eps_hat(a_t | s, prefix, t). The trunk takes
// (cond embedding, noisy action, time embedding) concatenated; a learnable
// linear skip from the noisy action is added to the trunk output. The trunk's
// output layer and the skip start at zero, so a fresh model predicts zero.
struct ScoreModel {
    ScoreModelConfig config;
    VpSchedule schedule;
    nn::MlpParams cond_embed;  // (state_dim + prefix_dim) -> cond_embed_dim
    nn::TimeEmbedding time_embed;
    nn::MlpParams trunk;
    nn::MlpParams skip;  // action_dim -> action_dim, linear

    static ScoreModel create(const ScoreModelConfig& config, uint64_t seed);

    Matrix predict_eps(const Matrix& noisy_actions, const Matrix& states, const Matrix& prefix,
                       const Vector& t) const;
};

// -eps_hat(alpha_t a, s, prefix, t) / sigma_t with a deterministic zero-noise
// probe; the low-noise approximation of the behavior score at a.
Matrix score_at(const ScoreModel& model, const Matrix& actions, const Matrix& states,
                const Matrix& prefix, double t_eval = 0.02);

// Diagnostic reverse-time sampler (never on the policy path).
Vector ancestral_sample(const ScoreModel& model, const Vector& state, const Vector& prefix,
                        int n_steps, Rng& rng);

struct DiffusionTrainConfig {
    long steps = 100000;
    int batch_size = 512;
    double lr = 3e-4;
    nn::Anneal anneal = nn::Anneal::Cosine;
    double t_min = 0.02;
    double t_max = 0.98;
    int cond_embed_dim = 32;
    int time_projection_dim = 32;
    int time_embed_dim = 64;
    std::vector<int> hidden_dims = {512, 512};

    void validate() const;
};

struct ScoreTrainer {
    ScoreModel model;
    nn::OptimizerState opt_trunk, opt_cond, opt_time, opt_skip;
    std::vector<int> action_rows;  // joint-action rows of the modeled action
    std::vector<int> prefix_rows;  // joint-action rows feeding the prefix

    static ScoreTrainer create(const ScoreModelConfig& model_config,
                               const DiffusionTrainConfig& train_config,
                               std::vector<int> action_rows, std::vector<int> prefix_rows,
                               uint64_t seed);

    // Mean squared eps-prediction error with one optimizer step; returns the
    // pre-step loss.
    double denoise_step(const data::Batch& batch, Rng& rng);
    double eval_loss(const data::Batch& batch, Rng& rng) const;
};

// Agent i's model conditions on the dataset actions of order[0..i-1].
std::vector<ScoreModel> train_sequential_set(const data::Dataset& dataset,
                                             const std::vector<int>& order,
                                             const DiffusionTrainConfig& config, uint64_t seed);
std::vector<ScoreModel> train_independent_set(const data::Dataset& dataset,
                                              const DiffusionTrainConfig& config, uint64_t seed);
ScoreModel train_joint_model(const data::Dataset& dataset, const DiffusionTrainConfig& config,
                             uint64_t seed);

void save_score_model(const ScoreModel& model, const std::string& path);
ScoreModel load_score_model(const std::string& path);

}  // namespace omsd::diffusion
