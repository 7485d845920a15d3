#include "omsd/diffusion.hpp"

#include <cmath>
#include <string>

#include "omsd/checkpoint.hpp"

namespace omsd::diffusion {

double VpSchedule::alpha(double t) const {
    return std::exp(-0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min);
}

double VpSchedule::sigma(double t) const {
    const double a = alpha(t);
    return std::sqrt(std::max(0.0, 1.0 - a * a));
}

std::pair<double, double> VpSchedule::alpha_sigma(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("vp schedule: t outside [0,1]");
    const double a = alpha(t);
    return {a, std::sqrt(std::max(0.0, 1.0 - a * a))};
}

Matrix perturb(const Matrix& actions, double t, const Matrix& eps, const VpSchedule& schedule) {
    if (eps.rows() != actions.rows() || eps.cols() != actions.cols())
        throw ShapeError("perturb: eps shape mismatch");
    const auto [a, s] = schedule.alpha_sigma(t);
    return a * actions + s * eps;
}

ScoreModel ScoreModel::create(const ScoreModelConfig& config, uint64_t seed) {
    if (config.action_dim < 1) throw ConfigError("score model: action_dim must be >= 1");
    if (config.state_dim < 1) throw ConfigError("score model: state_dim must be >= 1");
    if (config.prefix_dim < 0) throw ConfigError("score model: prefix_dim must be >= 0");
    if (!(config.t_min > 0.0 && config.t_min < config.t_max && config.t_max <= 1.0))
        throw ConfigError("score model: need 0 < t_min < t_max <= 1");

    ScoreModel m;
    m.config = config;

    Rng root(seed);
    Rng r_cond = root.child(1);
    Rng r_time = root.child(2);
    Rng r_trunk = root.child(3);

    nn::MlpSpec cond_spec;
    cond_spec.input_dim = config.state_dim + config.prefix_dim;
    cond_spec.output_dim = config.cond_embed_dim;
    m.cond_embed = nn::MlpParams::init(cond_spec, r_cond);

    m.time_embed = nn::TimeEmbedding::create(config.time_projection_dim, config.time_embed_dim,
                                             r_time);

    nn::MlpSpec trunk_spec;
    trunk_spec.input_dim = config.cond_embed_dim + config.action_dim + config.time_embed_dim;
    trunk_spec.hidden_dims = config.hidden_dims;
    trunk_spec.output_dim = config.action_dim;
    m.trunk = nn::MlpParams::init(trunk_spec, r_trunk);
    // zero output head: a fresh model predicts eps_hat = 0
    m.trunk.weights.back().setZero();
    m.trunk.biases.back().setZero();

    nn::MlpSpec skip_spec;
    skip_spec.input_dim = config.action_dim;
    skip_spec.output_dim = config.action_dim;
    m.skip = nn::MlpParams::zeros(skip_spec);
    return m;
}

namespace {

struct EpsCaches {
    nn::ForwardCache cond, time, trunk, skip;
};

Matrix forward_eps(const ScoreModel& m, const Matrix& noisy, const Matrix& states,
                   const Matrix& prefix, const Vector& t, EpsCaches* caches) {
    const Eigen::Index batch = noisy.cols();
    if (noisy.rows() != m.config.action_dim) throw ShapeError("score model: bad action rows");
    if (states.rows() != m.config.state_dim || states.cols() != batch)
        throw ShapeError("score model: bad state shape");
    if (prefix.rows() != m.config.prefix_dim || (m.config.prefix_dim > 0 && prefix.cols() != batch))
        throw ShapeError("score model: bad prefix shape");
    if (t.size() != batch) throw ShapeError("score model: bad time shape");

    Matrix cond_in(m.config.state_dim + m.config.prefix_dim, batch);
    cond_in.topRows(m.config.state_dim) = states;
    if (m.config.prefix_dim > 0) cond_in.bottomRows(m.config.prefix_dim) = prefix;

    const Matrix cond = nn::mlp_forward(m.cond_embed, cond_in, caches ? &caches->cond : nullptr);
    const Matrix time = m.time_embed.forward(t, caches ? &caches->time : nullptr);

    Matrix trunk_in(cond.rows() + noisy.rows() + time.rows(), batch);
    trunk_in.topRows(cond.rows()) = cond;
    trunk_in.middleRows(cond.rows(), noisy.rows()) = noisy;
    trunk_in.bottomRows(time.rows()) = time;

    Matrix out = nn::mlp_forward(m.trunk, trunk_in, caches ? &caches->trunk : nullptr);
    out += nn::mlp_forward(m.skip, noisy, caches ? &caches->skip : nullptr);
    return out;
}

Matrix gather_rows(const Matrix& src, const std::vector<int>& rows, Eigen::Index batch) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), batch);
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
    return out;
}

struct NoiseDraw {
    Vector t;
    Matrix eps;
    Matrix noisy;
};

NoiseDraw draw_noise(const ScoreModel& m, const Matrix& actions, Rng& rng) {
    const Eigen::Index batch = actions.cols();
    NoiseDraw d;
    d.t.resize(batch);
    for (Eigen::Index b = 0; b < batch; ++b)
        d.t(b) = m.config.t_min + (m.config.t_max - m.config.t_min) * rng.uniform();
    d.eps.resize(actions.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index k = 0; k < actions.rows(); ++k) d.eps(k, b) = rng.normal();
    d.noisy.resize(actions.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto [a, s] = m.schedule.alpha_sigma(d.t(b));
        d.noisy.col(b) = a * actions.col(b) + s * d.eps.col(b);
    }
    return d;
}

}  // namespace

Matrix ScoreModel::predict_eps(const Matrix& noisy_actions, const Matrix& states,
                               const Matrix& prefix, const Vector& t) const {
    return forward_eps(*this, noisy_actions, states, prefix, t, nullptr);
}

Matrix score_at(const ScoreModel& model, const Matrix& actions, const Matrix& states,
                const Matrix& prefix, double t_eval) {
    if (!(t_eval >= model.config.t_min && t_eval <= model.config.t_max))
        throw DomainError("score_at: t_eval outside trained range");
    const auto [a, s] = model.schedule.alpha_sigma(t_eval);
    if (s <= 0.0) throw DomainError("score_at: degenerate noise level");
    const Matrix noisy = a * actions;  // deterministic zero-noise probe
    const Vector t = Vector::Constant(actions.cols(), t_eval);
    return -model.predict_eps(noisy, states, prefix, t) / s;
}

Vector ancestral_sample(const ScoreModel& model, const Vector& state, const Vector& prefix,
                        int n_steps, Rng& rng) {
    if (n_steps < 2) throw ConfigError("ancestral_sample: n_steps must be >= 2");
    const int d = model.config.action_dim;
    Matrix x(d, 1);
    for (int k = 0; k < d; ++k) x(k, 0) = rng.normal();

    Matrix states = state;
    Matrix pfx(model.config.prefix_dim, 1);
    if (model.config.prefix_dim > 0) pfx.col(0) = prefix;

    const double t_hi = model.config.t_max;
    const double t_lo = model.config.t_min;
    std::vector<double> ts(static_cast<size_t>(n_steps));
    for (int k = 0; k < n_steps; ++k)
        ts[static_cast<size_t>(k)] = t_hi - (t_hi - t_lo) * k / (n_steps - 1);

    Matrix x0(d, 1);
    for (int k = 0; k + 1 < n_steps; ++k) {
        const double t = ts[static_cast<size_t>(k)];
        const double s = ts[static_cast<size_t>(k + 1)];
        const auto [at, st] = model.schedule.alpha_sigma(t);
        const auto [as, ss] = model.schedule.alpha_sigma(s);
        const Vector tv = Vector::Constant(1, t);
        const Matrix eps_hat = model.predict_eps(x, states, pfx, tv);
        x0 = (x - st * eps_hat) / at;

        // exact Gaussian posterior of the earlier time given the later one
        const double a_ts = at / as;
        const double var_ts = std::max(0.0, st * st - a_ts * a_ts * ss * ss);
        const double denom = st * st;
        const double mean_x_coef = a_ts * ss * ss / denom;
        const double mean_x0_coef = as * var_ts / denom;
        const double post_std = std::sqrt(var_ts * ss * ss / denom);
        Matrix z(d, 1);
        for (int j = 0; j < d; ++j) z(j, 0) = rng.normal();
        x = mean_x_coef * x + mean_x0_coef * x0 + post_std * z;
    }
    // final denoised estimate at t_min
    const auto [af, sf] = model.schedule.alpha_sigma(t_lo);
    const Vector tv = Vector::Constant(1, t_lo);
    const Matrix eps_hat = model.predict_eps(x, states, pfx, tv);
    return ((x - sf * eps_hat) / af).col(0);
}

void DiffusionTrainConfig::validate() const {
    if (steps < 1) throw ConfigError("diffusion: steps must be >= 1");
    if (batch_size < 1) throw ConfigError("diffusion: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("diffusion: lr must be positive");
    if (!(t_min > 0.0 && t_min < t_max && t_max <= 1.0))
        throw ConfigError("diffusion: need 0 < t_min < t_max <= 1");
    if (hidden_dims.empty()) throw ConfigError("diffusion: trunk needs hidden layers");
}

ScoreTrainer ScoreTrainer::create(const ScoreModelConfig& model_config,
                                  const DiffusionTrainConfig& train_config,
                                  std::vector<int> action_rows, std::vector<int> prefix_rows,
                                  uint64_t seed) {
    train_config.validate();
    if (static_cast<int>(action_rows.size()) != model_config.action_dim)
        throw ConfigError("score trainer: action_rows/action_dim mismatch");
    if (static_cast<int>(prefix_rows.size()) != model_config.prefix_dim)
        throw ConfigError("score trainer: prefix_rows/prefix_dim mismatch");

    ScoreTrainer t;
    t.model = ScoreModel::create(model_config, seed);
    t.action_rows = std::move(action_rows);
    t.prefix_rows = std::move(prefix_rows);

    nn::OptimizerConfig oc;
    oc.lr = train_config.lr;
    oc.anneal = train_config.anneal;
    oc.total_steps = train_config.steps;
    t.opt_trunk = nn::OptimizerState::create(t.model.trunk, oc);
    t.opt_cond = nn::OptimizerState::create(t.model.cond_embed, oc);
    t.opt_time = nn::OptimizerState::create(t.model.time_embed.dense, oc);
    t.opt_skip = nn::OptimizerState::create(t.model.skip, oc);
    return t;
}

double ScoreTrainer::denoise_step(const data::Batch& batch, Rng& rng) {
    const Eigen::Index b = batch.size();
    const Matrix actions = gather_rows(batch.actions, action_rows, b);
    const Matrix prefix = gather_rows(batch.actions, prefix_rows, b);
    const NoiseDraw nd = draw_noise(model, actions, rng);

    EpsCaches caches;
    const Matrix eps_hat = forward_eps(model, nd.noisy, batch.states, prefix, nd.t, &caches);
    const Matrix resid = eps_hat - nd.eps;
    const double loss = resid.squaredNorm() / static_cast<double>(b);

    const Matrix upstream = (2.0 / static_cast<double>(b)) * resid;
    nn::MlpGrads trunk_g = nn::mlp_backward(model.trunk, caches.trunk, upstream);

    const int cd = model.config.cond_embed_dim;
    const int ad = model.config.action_dim;
    const int td = model.config.time_embed_dim;
    const nn::MlpGrads cond_g =
        nn::mlp_backward(model.cond_embed, caches.cond, trunk_g.input.topRows(cd));
    const nn::MlpGrads time_g =
        nn::mlp_backward(model.time_embed.dense, caches.time, trunk_g.input.bottomRows(td));
    const nn::MlpGrads skip_g = nn::mlp_backward(model.skip, caches.skip, upstream);
    (void)ad;

    nn::optimizer_step(opt_trunk, model.trunk, trunk_g);
    nn::optimizer_step(opt_cond, model.cond_embed, cond_g);
    nn::optimizer_step(opt_time, model.time_embed.dense, time_g);
    nn::optimizer_step(opt_skip, model.skip, skip_g);
    return loss;
}

double ScoreTrainer::eval_loss(const data::Batch& batch, Rng& rng) const {
    const Eigen::Index b = batch.size();
    const Matrix actions = gather_rows(batch.actions, action_rows, b);
    const Matrix prefix = gather_rows(batch.actions, prefix_rows, b);
    const NoiseDraw nd = draw_noise(model, actions, rng);
    const Matrix eps_hat = model.predict_eps(nd.noisy, batch.states, prefix, nd.t);
    return (eps_hat - nd.eps).squaredNorm() / static_cast<double>(b);
}

namespace {

ScoreModel train_one(const data::Dataset& dataset, CondMode mode, int agent_index,
                     std::vector<int> action_rows, std::vector<int> prefix_rows,
                     const DiffusionTrainConfig& config, Rng& agent_rng) {
    ScoreModelConfig mc;
    mc.mode = mode;
    mc.agent_index = agent_index;
    mc.state_dim = dataset.meta.state_dim;
    mc.action_dim = static_cast<int>(action_rows.size());
    mc.prefix_dim = static_cast<int>(prefix_rows.size());
    mc.cond_embed_dim = config.cond_embed_dim;
    mc.time_projection_dim = config.time_projection_dim;
    mc.time_embed_dim = config.time_embed_dim;
    mc.hidden_dims = config.hidden_dims;
    mc.t_min = config.t_min;
    mc.t_max = config.t_max;

    const uint64_t model_seed = agent_rng.next_u64();
    const uint64_t sampler_seed = agent_rng.next_u64();
    const uint64_t noise_seed = agent_rng.next_u64();

    ScoreTrainer trainer = ScoreTrainer::create(mc, config, std::move(action_rows),
                                                std::move(prefix_rows), model_seed);
    data::BatchSampler sampler(dataset, config.batch_size, sampler_seed);
    Rng noise_rng(noise_seed);
    for (long step = 0; step < config.steps; ++step) {
        const data::Batch batch = sampler.sample();
        trainer.denoise_step(batch, noise_rng);
    }
    return trainer.model;
}

std::vector<int> agent_rows(const data::Dataset& dataset, int agent) {
    const int off = dataset.agent_action_offset(agent);
    std::vector<int> rows;
    for (int k = 0; k < dataset.meta.action_dims[static_cast<size_t>(agent)]; ++k)
        rows.push_back(off + k);
    return rows;
}

}  // namespace

std::vector<ScoreModel> train_sequential_set(const data::Dataset& dataset,
                                             const std::vector<int>& order,
                                             const DiffusionTrainConfig& config, uint64_t seed) {
    dataset.validate();
    config.validate();
    const int n = dataset.meta.n_agents;
    if (static_cast<int>(order.size()) != n)
        throw ConfigError("train_sequential_set: order size mismatch");
    std::vector<bool> seen(static_cast<size_t>(n), false);
    for (int a : order) {
        if (a < 0 || a >= n || seen[static_cast<size_t>(a)])
            throw ConfigError("train_sequential_set: order is not a permutation");
        seen[static_cast<size_t>(a)] = true;
    }

    Rng root(seed);
    std::vector<ScoreModel> models(static_cast<size_t>(n));
    std::vector<int> prefix_rows;
    for (int pos = 0; pos < n; ++pos) {
        const int agent = order[static_cast<size_t>(pos)];
        Rng agent_rng = root.child(static_cast<uint64_t>(pos));
        models[static_cast<size_t>(agent)] =
            train_one(dataset, CondMode::Sequential, agent, agent_rows(dataset, agent),
                      prefix_rows, config, agent_rng);
        const auto rows = agent_rows(dataset, agent);
        prefix_rows.insert(prefix_rows.end(), rows.begin(), rows.end());
    }
    return models;
}

std::vector<ScoreModel> train_independent_set(const data::Dataset& dataset,
                                              const DiffusionTrainConfig& config, uint64_t seed) {
    dataset.validate();
    config.validate();
    Rng root(seed);
    std::vector<ScoreModel> models;
    for (int agent = 0; agent < dataset.meta.n_agents; ++agent) {
        Rng agent_rng = root.child(static_cast<uint64_t>(agent));
        models.push_back(train_one(dataset, CondMode::Independent, agent,
                                   agent_rows(dataset, agent), {}, config, agent_rng));
    }
    return models;
}

ScoreModel train_joint_model(const data::Dataset& dataset, const DiffusionTrainConfig& config,
                             uint64_t seed) {
    dataset.validate();
    config.validate();
    Rng root(seed);
    Rng agent_rng = root.child(0);
    std::vector<int> rows;
    for (int k = 0; k < dataset.meta.joint_action_dim(); ++k) rows.push_back(k);
    return train_one(dataset, CondMode::Joint, 0, std::move(rows), {}, config, agent_rng);
}

namespace {

const char* mode_name(CondMode mode) {
    switch (mode) {
        case CondMode::Independent: return "independent";
        case CondMode::Joint: return "joint";
        case CondMode::Sequential: return "sequential";
    }
    return "unknown";
}

CondMode mode_from_name(const std::string& name) {
    if (name == "independent") return CondMode::Independent;
    if (name == "joint") return CondMode::Joint;
    if (name == "sequential") return CondMode::Sequential;
    throw FormatError("score model checkpoint: unknown mode '" + name + "'");
}

}  // namespace

void save_score_model(const ScoreModel& model, const std::string& path) {
    nn::Checkpoint ckpt;
    ckpt.meta["kind"] = "score_model";
    ckpt.meta["mode"] = mode_name(model.config.mode);
    ckpt.meta["agent_index"] = model.config.agent_index;
    ckpt.meta["state_dim"] = model.config.state_dim;
    ckpt.meta["action_dim"] = model.config.action_dim;
    ckpt.meta["prefix_dim"] = model.config.prefix_dim;
    ckpt.meta["cond_embed_dim"] = model.config.cond_embed_dim;
    ckpt.meta["time_projection_dim"] = model.config.time_projection_dim;
    ckpt.meta["time_embed_dim"] = model.config.time_embed_dim;
    ckpt.meta["hidden_dims"] = model.config.hidden_dims;
    ckpt.meta["t_min"] = model.config.t_min;
    ckpt.meta["t_max"] = model.config.t_max;
    ckpt.meta["beta_min"] = model.schedule.beta_min;
    ckpt.meta["beta_max"] = model.schedule.beta_max;
    ckpt.meta["freq_scale"] = model.time_embed.freq_scale;
    ckpt.add_params("cond_embed", model.cond_embed);
    ckpt.add_params("trunk", model.trunk);
    ckpt.add_params("skip", model.skip);
    ckpt.add_params("time_dense", model.time_embed.dense);
    ckpt.add_vector("time_frequencies", model.time_embed.frequencies);
    ckpt.save(path);
}

ScoreModel load_score_model(const std::string& path) {
    const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
    if (ckpt.meta.value("kind", "") != "score_model")
        throw FormatError("checkpoint is not a score model: " + path);
    ScoreModel m;
    m.config.mode = mode_from_name(ckpt.meta.at("mode").get<std::string>());
    m.config.agent_index = ckpt.meta.at("agent_index").get<int>();
    m.config.state_dim = ckpt.meta.at("state_dim").get<int>();
    m.config.action_dim = ckpt.meta.at("action_dim").get<int>();
    m.config.prefix_dim = ckpt.meta.at("prefix_dim").get<int>();
    m.config.cond_embed_dim = ckpt.meta.at("cond_embed_dim").get<int>();
    m.config.time_projection_dim = ckpt.meta.at("time_projection_dim").get<int>();
    m.config.time_embed_dim = ckpt.meta.at("time_embed_dim").get<int>();
    m.config.hidden_dims = ckpt.meta.at("hidden_dims").get<std::vector<int>>();
    m.config.t_min = ckpt.meta.at("t_min").get<double>();
    m.config.t_max = ckpt.meta.at("t_max").get<double>();
    m.schedule.beta_min = ckpt.meta.at("beta_min").get<double>();
    m.schedule.beta_max = ckpt.meta.at("beta_max").get<double>();
    m.cond_embed = ckpt.get_params("cond_embed");
    m.trunk = ckpt.get_params("trunk");
    m.skip = ckpt.get_params("skip");
    m.time_embed.dense = ckpt.get_params("time_dense");
    m.time_embed.frequencies = ckpt.get_vector("time_frequencies");
    m.time_embed.projection_dim = m.config.time_projection_dim;
    m.time_embed.embedding_dim = m.config.time_embed_dim;
    m.time_embed.freq_scale = ckpt.meta.at("freq_scale").get<double>();
    return m;
}

}  // namespace omsd::diffusion
