#include "omsd/nn.hpp"

#include <cmath>
#include <string>

namespace omsd::nn {

void MlpSpec::validate() const {
    if (input_dim < 1 || output_dim < 1)
        throw ConfigError("MlpSpec: input/output dims must be >= 1");
    for (int h : hidden_dims)
        if (h < 1) throw ConfigError("MlpSpec: hidden dims must be >= 1");
}

std::vector<std::pair<int, int>> MlpSpec::layer_shapes() const {
    std::vector<std::pair<int, int>> shapes;
    int in = input_dim;
    for (int h : hidden_dims) {
        shapes.emplace_back(h, in);
        in = h;
    }
    shapes.emplace_back(output_dim, in);
    return shapes;
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    for (auto [rows, cols] : spec.layer_shapes()) {
        p.weights.push_back(Matrix::Zero(rows, cols));
        p.biases.push_back(Vector::Zero(rows));
    }
    return p;
}

MlpParams MlpParams::init(const MlpSpec& spec, Rng& rng) {
    MlpParams p = zeros(spec);
    for (size_t l = 0; l < p.weights.size(); ++l) {
        Rng layer_rng = rng.child(l);
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.weights[l].cols()));
        for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
            for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
                p.weights[l](i, j) = layer_rng.uniform(-bound, bound);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
            p.biases[l](i) = layer_rng.uniform(-bound, bound);
    }
    return p;
}

long MlpParams::param_count() const {
    long n = 0;
    for (size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

bool MlpParams::all_finite() const {
    for (size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x, ForwardCache* cache) {
    if (x.rows() != params.spec.input_dim)
        throw ShapeError("mlp_forward: input has " + std::to_string(x.rows()) +
                         " rows, spec expects " + std::to_string(params.spec.input_dim));
    if (cache) {
        cache->input = x;
        cache->post.clear();
    }
    Matrix h = x;
    const size_t n_layers = params.weights.size();
    for (size_t l = 0; l < n_layers; ++l) {
        Matrix z = (params.weights[l] * h).colwise() + params.biases[l];
        if (l + 1 < n_layers) {
            h = z.cwiseMax(0.0);
            if (cache) cache->post.push_back(h);
        } else {
            if (params.spec.output_activation == OutputActivation::Tanh)
                h = z.array().tanh().matrix();
            else
                h = std::move(z);
        }
    }
    if (cache) cache->output = h;
    return h;
}

MlpGrads MlpGrads::zeros(const MlpParams& params) {
    MlpGrads g;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        g.weights.push_back(Matrix::Zero(params.weights[l].rows(), params.weights[l].cols()));
        g.biases.push_back(Vector::Zero(params.biases[l].size()));
    }
    return g;
}

void MlpGrads::accumulate(const MlpGrads& other) {
    for (size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
}

void MlpGrads::scale(double s) {
    for (size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= s;
        biases[l] *= s;
    }
    if (input.size() > 0) input *= s;
}

bool MlpGrads::all_finite() const {
    for (size_t l = 0; l < weights.size(); ++l)
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream) {
    const size_t n_layers = params.weights.size();
    if (upstream.rows() != params.spec.output_dim || upstream.cols() != cache.input.cols())
        throw ShapeError("mlp_backward: upstream shape mismatch");

    MlpGrads g;
    g.weights.resize(n_layers);
    g.biases.resize(n_layers);

    Matrix delta = upstream;
    if (params.spec.output_activation == OutputActivation::Tanh)
        delta = delta.cwiseProduct((1.0 - cache.output.array().square()).matrix());

    for (size_t l = n_layers; l-- > 0;) {
        const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
        g.weights[l] = delta * below.transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > 0) {
            delta = params.weights[l].transpose() * delta;
            // relu mask from the cached post-activation
            delta = delta.cwiseProduct((cache.post[l - 1].array() > 0.0).cast<double>().matrix());
        } else {
            g.input = params.weights[0].transpose() * delta;
        }
    }
    return g;
}

OptimizerState OptimizerState::create(const MlpParams& params, const OptimizerConfig& config) {
    OptimizerState s;
    s.config = config;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        s.m_w.push_back(Matrix::Zero(params.weights[l].rows(), params.weights[l].cols()));
        s.v_w.push_back(Matrix::Zero(params.weights[l].rows(), params.weights[l].cols()));
        s.m_b.push_back(Vector::Zero(params.biases[l].size()));
        s.v_b.push_back(Vector::Zero(params.biases[l].size()));
    }
    return s;
}

double OptimizerState::effective_lr() const {
    if (config.anneal == Anneal::Constant || config.total_steps <= 0) return config.lr;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(config.total_steps));
    return config.lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

namespace {

template <typename T>
void adam_update(T& param, T& m, T& v, const T& grad, double lr, double b1, double b2,
                 double eps, double wd, long t) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double mc = 1.0 - std::pow(b1, static_cast<double>(t));
    const double vc = 1.0 - std::pow(b2, static_cast<double>(t));
    T m_hat = m / mc;
    T v_hat = v / vc;
    if (wd != 0.0) param -= lr * wd * param;
    param -= (lr * m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
}

}  // namespace

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads) {
    if (!grads.all_finite())
        throw DivergenceError("optimizer_step: non-finite gradient at step " +
                              std::to_string(state.step));
    const double lr = state.effective_lr();
    const long t = state.step + 1;
    const auto& c = state.config;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        adam_update(params.weights[l], state.m_w[l], state.v_w[l], grads.weights[l], lr, c.beta1,
                    c.beta2, c.eps, c.weight_decay, t);
        adam_update(params.biases[l], state.m_b[l], state.v_b[l], grads.biases[l], lr, c.beta1,
                    c.beta2, c.eps, c.weight_decay, t);
    }
    ++state.step;
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("soft_update: tau must be in [0, 1]");
    if (target.weights.size() != online.weights.size())
        throw ShapeError("soft_update: layer count mismatch");
    for (size_t l = 0; l < target.weights.size(); ++l) {
        if (target.weights[l].rows() != online.weights[l].rows() ||
            target.weights[l].cols() != online.weights[l].cols())
            throw ShapeError("soft_update: weight shape mismatch");
        target.weights[l] = (1.0 - tau) * target.weights[l] + tau * online.weights[l];
        target.biases[l] = (1.0 - tau) * target.biases[l] + tau * online.biases[l];
    }
}

TimeEmbedding TimeEmbedding::create(int projection_dim, int embedding_dim, Rng& rng) {
    TimeEmbedding te;
    te.projection_dim = projection_dim;
    te.embedding_dim = embedding_dim;
    te.frequencies = Vector(projection_dim);
    Rng freq_rng = rng.child(0x7e);
    for (int i = 0; i < projection_dim; ++i)
        te.frequencies(i) = freq_rng.normal(0.0, te.freq_scale);
    MlpSpec dense_spec;
    dense_spec.input_dim = 2 * projection_dim;
    dense_spec.output_dim = embedding_dim;
    te.dense = MlpParams::init(dense_spec, rng);
    return te;
}

Matrix TimeEmbedding::features(const Vector& t) const {
    Matrix feat(2 * projection_dim, t.size());
    for (Eigen::Index b = 0; b < t.size(); ++b) {
        for (int i = 0; i < projection_dim; ++i) {
            const double z = 2.0 * M_PI * frequencies(i) * t(b);
            feat(i, b) = std::sin(z);
            feat(projection_dim + i, b) = std::cos(z);
        }
    }
    return feat;
}

Matrix TimeEmbedding::forward(const Vector& t, ForwardCache* cache) const {
    return mlp_forward(dense, features(t), cache);
}

}  // namespace omsd::nn
