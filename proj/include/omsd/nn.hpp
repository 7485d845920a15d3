#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "omsd/errors.hpp"
#include "omsd/rng.hpp"

namespace omsd::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Relu };
enum class OutputActivation { None, Tanh };

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;  // may be empty: single linear layer
    int output_dim = 0;
    Activation activation = Activation::Relu;
    OutputActivation output_activation = OutputActivation::None;

    void validate() const;
    // (rows, cols) of each weight matrix, input to output order.
    std::vector<std::pair<int, int>> layer_shapes() const;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static MlpParams zeros(const MlpSpec& spec);
    // Uniform init scaled by 1/sqrt(fan_in), one child stream per layer.
    static MlpParams init(const MlpSpec& spec, Rng& rng);

    long param_count() const;
    bool all_finite() const;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> post;  // post-activation of each hidden layer
    Matrix output;
};

// x is input_dim x batch; returns output_dim x batch.
Matrix mlp_forward(const MlpParams& params, const Matrix& x, ForwardCache* cache = nullptr);

struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;  // gradient w.r.t. the forward input

    static MlpGrads zeros(const MlpParams& params);
    void accumulate(const MlpGrads& other);
    void scale(double s);
    bool all_finite() const;
};

// Gradients of sum_b upstream(:,b) . output(:,b) w.r.t. params and input.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream);

enum class Anneal { Constant, Cosine };

struct OptimizerConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled
    Anneal anneal = Anneal::Constant;
    long total_steps = 0;  // cosine horizon
};

struct OptimizerState {
    OptimizerConfig config;
    long step = 0;  // completed steps
    std::vector<Matrix> m_w, v_w;
    std::vector<Vector> m_b, v_b;

    static OptimizerState create(const MlpParams& params, const OptimizerConfig& config);
    double effective_lr() const;
};

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads);

// target' = (1 - tau) * target + tau * online
void soft_update(MlpParams& target, const MlpParams& online, double tau);

// Gaussian Fourier features over scalar time followed by one dense layer.
// Frequencies are drawn once at init and never trained.
struct TimeEmbedding {
    int projection_dim = 32;
    int embedding_dim = 64;
    double freq_scale = 16.0;
    Vector frequencies;  // projection_dim
    MlpParams dense;     // 2*projection_dim -> embedding_dim, linear

    static TimeEmbedding create(int projection_dim, int embedding_dim, Rng& rng);

    // t: batch of times; returns 2*projection_dim x batch [sin; cos] features.
    Matrix features(const Vector& t) const;
    Matrix forward(const Vector& t, ForwardCache* cache = nullptr) const;
};

}  // namespace omsd::nn
