#include "omsd/policy.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "omsd/checkpoint.hpp"

namespace omsd::policy {

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Omsd: return "omsd";
        case Algorithm::BrpoJal: return "brpo_jal";
        case Algorithm::BrpoInd: return "brpo_ind";
        case Algorithm::BrpoIgo: return "brpo_igo";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "omsd") return Algorithm::Omsd;
    if (name == "brpo_jal") return Algorithm::BrpoJal;
    if (name == "brpo_ind") return Algorithm::BrpoInd;
    if (name == "brpo_igo") return Algorithm::BrpoIgo;
    throw ConfigError("unknown algorithm '" + name + "'");
}

void ExtractionConfig::validate() const {
    if (beta <= 0.0) throw ConfigError("extraction: beta must be positive");
    if (steps < 1) throw ConfigError("extraction: steps must be >= 1");
    if (batch_size < 1) throw ConfigError("extraction: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("extraction: lr must be positive");
    if (eval_interval < 0) throw ConfigError("extraction: eval_interval must be >= 0");
    if (eval_episodes < 1) throw ConfigError("extraction: eval_episodes must be >= 1");
    if (log_interval < 1) throw ConfigError("extraction: log_interval must be >= 1");
    if (!(t_eval > 0.0 && t_eval < 1.0)) throw ConfigError("extraction: t_eval outside (0,1)");
}

int ActorSet::joint_action_dim() const {
    int total = 0;
    for (int d : action_dims) total += d;
    return total;
}

Matrix ActorSet::joint_actions(const Matrix& states) const {
    Matrix out(joint_action_dim(), states.cols());
    for (int i = 0; i < n_actors(); ++i)
        out.middleRows(action_offsets[static_cast<size_t>(i)],
                       action_dims[static_cast<size_t>(i)]) =
            nn::mlp_forward(actors[static_cast<size_t>(i)], states);
    return out;
}

std::vector<envs::PolicyFn> ActorSet::env_policies(int n_agents) const {
    std::vector<envs::PolicyFn> policies;
    if (n_actors() == n_agents) {
        for (int i = 0; i < n_actors(); ++i) {
            nn::MlpParams params = actors[static_cast<size_t>(i)];
            policies.push_back([params](const Vector& state) -> Vector {
                const Matrix s = state;
                return nn::mlp_forward(params, s).col(0);
            });
        }
        return policies;
    }
    if (n_actors() == 1) {
        const int joint = joint_action_dim();
        if (joint % n_agents != 0)
            throw ConfigError("joint actor: action dim not divisible across agents");
        const int per = joint / n_agents;
        const nn::MlpParams params = actors[0];
        for (int i = 0; i < n_agents; ++i) {
            policies.push_back([params, i, per](const Vector& state) -> Vector {
                const Matrix s = state;
                return nn::mlp_forward(params, s).col(0).segment(i * per, per);
            });
        }
        return policies;
    }
    throw ConfigError("actor count does not match agent count");
}

namespace {

std::vector<int> resolve_order(int n, const std::vector<int>& requested) {
    std::vector<int> order;
    if (requested.empty()) {
        for (int i = 0; i < n; ++i) order.push_back(i);
        return order;
    }
    if (static_cast<int>(requested.size()) != n)
        throw ConfigError("extraction: order size does not match actor count");
    std::vector<bool> seen(static_cast<size_t>(n), false);
    for (int a : requested) {
        if (a < 0 || a >= n || seen[static_cast<size_t>(a)])
            throw ConfigError("extraction: order is not a permutation");
        seen[static_cast<size_t>(a)] = true;
    }
    return requested;
}

ActorSet build_actors(const data::DatasetMeta& meta, const ExtractionConfig& config,
                      bool joint_actor, uint64_t seed) {
    ActorSet set;
    set.state_dim = meta.state_dim;
    Rng root(seed);

    nn::OptimizerConfig oc;
    oc.lr = config.lr;
    oc.anneal = config.anneal;
    oc.total_steps = config.steps;

    const int n = joint_actor ? 1 : meta.n_agents;
    int offset = 0;
    for (int i = 0; i < n; ++i) {
        const int dim = joint_actor ? meta.joint_action_dim()
                                    : meta.action_dims[static_cast<size_t>(i)];
        nn::MlpSpec spec;
        spec.input_dim = meta.state_dim;
        spec.hidden_dims = config.hidden_dims;
        spec.output_dim = dim;
        spec.output_activation = nn::OutputActivation::Tanh;
        Rng actor_rng = root.child(static_cast<uint64_t>(i));
        set.actors.push_back(nn::MlpParams::init(spec, actor_rng));
        set.opts.push_back(nn::OptimizerState::create(set.actors.back(), oc));
        set.action_dims.push_back(dim);
        set.action_offsets.push_back(offset);
        offset += dim;
    }
    set.order = joint_actor ? std::vector<int>{0} : resolve_order(n, config.order);
    return set;
}

double mean_column_norm(const Matrix& m) {
    double total = 0.0;
    for (Eigen::Index b = 0; b < m.cols(); ++b) total += m.col(b).norm();
    return total / static_cast<double>(m.cols());
}

Matrix gather_prefix(const Matrix& joint, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), joint.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = joint.row(rows[i]);
    return out;
}

}  // namespace

ActorSet make_actors(const data::DatasetMeta& meta, const ExtractionConfig& config,
                     uint64_t seed) {
    config.validate();
    return build_actors(meta, config, false, seed);
}

ActorSet make_joint_actor(const data::DatasetMeta& meta, const ExtractionConfig& config,
                          uint64_t seed) {
    config.validate();
    return build_actors(meta, config, true, seed);
}

StepStats extraction_step(ActorSet& actors, const ExtractionInputs& inputs,
                          const data::Batch& batch, const ExtractionConfig& config) {
    if (!inputs.critics || !inputs.scores) throw ConfigError("extraction: missing inputs");
    const int n = actors.n_actors();
    if (static_cast<int>(inputs.scores->size()) != n)
        throw ConfigError("extraction: score model count does not match actor count");
    const bool independent_critics = config.algorithm == Algorithm::BrpoInd;
    if (independent_critics) {
        if (inputs.critics->mode != critic::CriticMode::Independent ||
            static_cast<int>(inputs.critics->critics.size()) != n)
            throw ConfigError("extraction: independent critics required");
    } else if (inputs.critics->critics.size() != 1) {
        throw ConfigError("extraction: a single joint critic is required");
    }

    const Matrix& states = batch.states;
    Matrix joint = actors.joint_actions(states);
    StepStats stats;
    stats.q_grad_norm.assign(static_cast<size_t>(n), 0.0);
    stats.score_norm.assign(static_cast<size_t>(n), 0.0);

    const bool sequential =
        config.algorithm == Algorithm::Omsd || config.algorithm == Algorithm::BrpoJal;

    if (sequential) {
        const Matrix snapshot = joint;
        std::vector<int> prefix_rows;
        for (int i : actors.order) {
            const int off = actors.action_offsets[static_cast<size_t>(i)];
            const int dim = actors.action_dims[static_cast<size_t>(i)];
            nn::ForwardCache cache;
            const Matrix own = nn::mlp_forward(actors.actors[static_cast<size_t>(i)], states,
                                               &cache);
            joint.middleRows(off, dim) = own;

            const Matrix q_grad_joint =
                critic::critic_action_grad(inputs.critics->critics[0], states, joint);
            const Matrix q_grad = q_grad_joint.middleRows(off, dim);

            const Matrix& prefix_src = config.prefix_uses_updated ? joint : snapshot;
            const Matrix prefix = gather_prefix(prefix_src, prefix_rows);
            const Matrix score =
                diffusion::score_at((*inputs.scores)[static_cast<size_t>(i)], own, states,
                                    prefix, config.t_eval) /
                config.beta;

            const Matrix upstream = -(q_grad + score);
            const nn::MlpGrads grads =
                nn::mlp_backward(actors.actors[static_cast<size_t>(i)], cache, upstream);
            nn::optimizer_step(actors.opts[static_cast<size_t>(i)],
                               actors.actors[static_cast<size_t>(i)], grads);

            if (config.prefix_uses_updated)
                joint.middleRows(off, dim) =
                    nn::mlp_forward(actors.actors[static_cast<size_t>(i)], states);
            for (int k = 0; k < dim; ++k) prefix_rows.push_back(off + k);

            stats.q_grad_norm[static_cast<size_t>(i)] = mean_column_norm(q_grad);
            stats.score_norm[static_cast<size_t>(i)] = mean_column_norm(score);
        }
        return stats;
    }

    // simultaneous updates from the step-start snapshot
    std::vector<nn::ForwardCache> caches(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int off = actors.action_offsets[static_cast<size_t>(i)];
        const int dim = actors.action_dims[static_cast<size_t>(i)];
        joint.middleRows(off, dim) = nn::mlp_forward(actors.actors[static_cast<size_t>(i)],
                                                     states, &caches[static_cast<size_t>(i)]);
    }
    Matrix q_grad_joint;
    if (!independent_critics)
        q_grad_joint = critic::critic_action_grad(inputs.critics->critics[0], states, joint);

    std::vector<nn::MlpGrads> grads;
    grads.reserve(static_cast<size_t>(n));
    const Matrix empty_prefix(0, states.cols());
    for (int i = 0; i < n; ++i) {
        const int off = actors.action_offsets[static_cast<size_t>(i)];
        const int dim = actors.action_dims[static_cast<size_t>(i)];
        const Matrix own = joint.middleRows(off, dim);
        const Matrix q_grad =
            independent_critics
                ? critic::critic_action_grad(inputs.critics->critics[static_cast<size_t>(i)],
                                             states, own)
                : Matrix(q_grad_joint.middleRows(off, dim));
        const Matrix score = diffusion::score_at((*inputs.scores)[static_cast<size_t>(i)], own,
                                                 states, empty_prefix, config.t_eval) /
                             config.beta;
        const Matrix upstream = -(q_grad + score);
        grads.push_back(nn::mlp_backward(actors.actors[static_cast<size_t>(i)],
                                         caches[static_cast<size_t>(i)], upstream));
        stats.q_grad_norm[static_cast<size_t>(i)] = mean_column_norm(q_grad);
        stats.score_norm[static_cast<size_t>(i)] = mean_column_norm(score);
    }
    for (int i = 0; i < n; ++i)
        nn::optimizer_step(actors.opts[static_cast<size_t>(i)],
                           actors.actors[static_cast<size_t>(i)],
                           grads[static_cast<size_t>(i)]);
    return stats;
}

std::string TrainLog::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(12);
    out << "step,agent,q_grad_norm,score_norm,eval_mean,eval_std";
    for (int k = 0; k < joint_action_dim; ++k) out << ",action_" << k;
    out << "\n";
    for (const LogRecord& r : records) {
        out << r.step << "," << r.agent << "," << r.q_grad_norm << "," << r.score_norm << ",";
        if (r.has_eval) out << r.eval_mean;
        out << ",";
        if (r.has_eval) out << r.eval_std;
        for (Eigen::Index k = 0; k < r.probe_action.size(); ++k) out << "," << r.probe_action(k);
        out << "\n";
    }
    return out.str();
}

void TrainLog::save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResourceError("cannot open log file: " + path);
    f << to_csv();
}

ExtractionResult extract(const ExtractionInputs& inputs, const ExtractionConfig& config,
                         uint64_t seed, const EvalFn& eval, const Vector* probe_state) {
    config.validate();
    if (!inputs.dataset) throw ConfigError("extraction: missing dataset");
    const data::Dataset& dataset = *inputs.dataset;

    Rng root(seed);
    const uint64_t actor_seed = root.next_u64();
    const uint64_t sampler_seed = root.next_u64();

    ExtractionResult result;
    result.actors = (config.algorithm == Algorithm::BrpoJal)
                        ? make_joint_actor(dataset.meta, config, actor_seed)
                        : make_actors(dataset.meta, config, actor_seed);
    result.log.joint_action_dim = result.actors.joint_action_dim();

    data::BatchSampler sampler(dataset, config.batch_size, sampler_seed);
    const Matrix probe = probe_state ? Matrix(*probe_state) : Matrix(dataset.states.col(0));

    for (long step = 0; step < config.steps; ++step) {
        const data::Batch batch = sampler.sample();
        const StepStats stats = extraction_step(result.actors, inputs, batch, config);

        const long done = step + 1;
        const bool last = done == config.steps;
        const bool log_now = last || done % config.log_interval == 0;
        if (!log_now) continue;

        bool has_eval = false;
        double eval_mean = 0.0, eval_std = 0.0;
        if (eval && config.eval_interval > 0 && (last || done % config.eval_interval == 0)) {
            std::tie(eval_mean, eval_std) = eval(result.actors, done);
            has_eval = true;
        }
        const Matrix probe_action = result.actors.joint_actions(probe);
        for (int i = 0; i < result.actors.n_actors(); ++i) {
            LogRecord r;
            r.step = done;
            r.agent = i;
            r.q_grad_norm = stats.q_grad_norm[static_cast<size_t>(i)];
            r.score_norm = stats.score_norm[static_cast<size_t>(i)];
            r.has_eval = has_eval;
            r.eval_mean = eval_mean;
            r.eval_std = eval_std;
            r.probe_action = probe_action.col(0);
            result.log.records.push_back(std::move(r));
        }
    }
    return result;
}

void save_actors(const ActorSet& actors, const std::string& dir, const std::string& stem) {
    for (int i = 0; i < actors.n_actors(); ++i) {
        nn::Checkpoint ckpt;
        ckpt.meta["kind"] = "actor";
        ckpt.meta["n_actors"] = actors.n_actors();
        ckpt.meta["index"] = i;
        ckpt.meta["action_offset"] = actors.action_offsets[static_cast<size_t>(i)];
        ckpt.meta["action_dim"] = actors.action_dims[static_cast<size_t>(i)];
        ckpt.meta["state_dim"] = actors.state_dim;
        ckpt.meta["order"] = actors.order;
        ckpt.add_params("actor", actors.actors[static_cast<size_t>(i)]);
        ckpt.save(dir + "/" + stem + "_actor" + std::to_string(i) + ".ckpt");
    }
}

ActorSet load_actors(const std::string& dir, const std::string& stem) {
    ActorSet set;
    const nn::Checkpoint first = nn::Checkpoint::load(dir + "/" + stem + "_actor0.ckpt");
    if (first.meta.value("kind", "") != "actor")
        throw FormatError("checkpoint is not an actor: " + stem);
    const int n = first.meta.at("n_actors").get<int>();
    set.state_dim = first.meta.at("state_dim").get<int>();
    set.order = first.meta.at("order").get<std::vector<int>>();
    for (int i = 0; i < n; ++i) {
        const nn::Checkpoint ckpt =
            (i == 0) ? first : nn::Checkpoint::load(dir + "/" + stem + "_actor" +
                                                    std::to_string(i) + ".ckpt");
        set.actors.push_back(ckpt.get_params("actor"));
        set.opts.push_back(nn::OptimizerState::create(set.actors.back(), nn::OptimizerConfig{}));
        set.action_offsets.push_back(ckpt.meta.at("action_offset").get<int>());
        set.action_dims.push_back(ckpt.meta.at("action_dim").get<int>());
    }
    return set;
}

}  // namespace omsd::policy
