#include "omsd/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "omsd/datagen.hpp"
#include "omsd/hash.hpp"

namespace fs = std::filesystem;

namespace omsd::pipeline {

namespace {

const nlohmann::json& require(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("config: missing field '" + key + "'");
    return j.at(key);
}

std::vector<int> int_list(const nlohmann::json& j) { return j.get<std::vector<int>>(); }

void parse_critic(const nlohmann::json& j, critic::CriticTrainConfig& c, uint64_t& seed) {
    seed = j.value("seed", uint64_t{0});
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.epochs = j.value("epochs", c.epochs);
    c.expectile_tau = j.value("expectile_tau", c.expectile_tau);
    c.temperature = j.value("temperature", c.temperature);
    c.lr = j.value("lr", c.lr);
    c.gamma = j.value("gamma", c.gamma);
    c.target_tau = j.value("target_tau", c.target_tau);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
    if (j.contains("hidden_dims")) c.hidden_dims = int_list(j.at("hidden_dims"));
    c.validate();
}

void parse_diffusion(const nlohmann::json& j, diffusion::DiffusionTrainConfig& c,
                     uint64_t& seed) {
    seed = j.value("seed", uint64_t{0});
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.t_min = j.value("t_min", c.t_min);
    c.t_max = j.value("t_max", c.t_max);
    if (j.contains("hidden_dims")) c.hidden_dims = int_list(j.at("hidden_dims"));
    c.validate();
}

void parse_extraction(const nlohmann::json& j, policy::ExtractionConfig& c) {
    c.beta = j.value("beta", c.beta);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.t_eval = j.value("t_eval", c.t_eval);
    if (j.contains("hidden_dims")) c.hidden_dims = int_list(j.at("hidden_dims"));
    if (j.contains("order")) c.order = int_list(j.at("order"));
    c.prefix_uses_updated = j.value("prefix_uses_updated", c.prefix_uses_updated);
    c.validate();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
    const int version = require(j, "config_version").get<int>();
    if (version != kConfigVersion)
        throw ConfigError("config: unsupported config_version " + std::to_string(version));

    RunConfig c;
    c.raw = j;
    c.env_id = require(j, "env").get<std::string>();
    if (c.env_id != "bandit" && c.env_id != "mode_bandit" && c.env_id != "spread_lite")
        throw ConfigError("config: unknown env '" + c.env_id + "'");
    c.algorithm = policy::algorithm_from_name(require(j, "algorithm").get<std::string>());
    c.output_dir = require(j, "output_dir").get<std::string>();
    c.seeds = require(j, "seeds").get<std::vector<uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    for (size_t i = 0; i < c.seeds.size(); ++i)
        for (size_t k = i + 1; k < c.seeds.size(); ++k)
            if (c.seeds[i] == c.seeds[k]) throw ConfigError("config: seeds must be distinct");

    const nlohmann::json& ds = require(j, "dataset");
    if (ds.contains("path")) {
        c.dataset_path = ds.at("path").get<std::string>();
        if (!fs::exists(c.dataset_path))
            throw ConfigError("config: dataset path does not exist: " + c.dataset_path);
    } else if (ds.contains("generate")) {
        c.generate = ds.at("generate");
    } else {
        throw ConfigError("config: dataset needs 'path' or 'generate'");
    }

    if (j.contains("critic")) parse_critic(j.at("critic"), c.critic, c.critic_seed);
    if (j.contains("diffusion")) parse_diffusion(j.at("diffusion"), c.diffusion, c.diffusion_seed);
    if (j.contains("extraction")) parse_extraction(j.at("extraction"), c.extraction);
    c.extraction.algorithm = c.algorithm;

    if (j.contains("evaluation")) {
        const nlohmann::json& e = j.at("evaluation");
        c.eval_episodes = e.value("episodes", c.eval_episodes);
        if (e.contains("s_random") && e.contains("s_expert"))
            c.normalization = {e.at("s_random").get<double>(), e.at("s_expert").get<double>()};
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return from_json(j);
}

namespace {

data::Dataset obtain_dataset(const RunConfig& config) {
    if (!config.dataset_path.empty()) return data::load_dataset(config.dataset_path);
    const nlohmann::json& g = config.generate;
    const uint64_t seed = g.value("seed", uint64_t{0});
    if (config.env_id == "bandit") {
        data::MixtureSpec spec = data::MixtureSpec::bandit_default();
        if (g.contains("mode_mean")) {
            const double m = g.at("mode_mean").get<double>();
            spec.means[0].setConstant(m);
            spec.means[1].setConstant(-m);
        }
        spec.stddev = g.value("stddev", spec.stddev);
        return data::gen_bandit_dataset(spec, g.value("n", 1000000L), seed);
    }
    if (config.env_id == "mode_bandit") {
        return data::gen_mode_bandit_dataset(g.value("n_agents", 2), g.value("n", 100000L),
                                             g.value("mode_std", 0.05), seed);
    }
    // spread_lite
    const std::string tier = g.value("tier", "medium");
    data::SpreadTier t;
    if (tier == "expert") t = data::SpreadTier::Expert;
    else if (tier == "medium") t = data::SpreadTier::Medium;
    else if (tier == "random") t = data::SpreadTier::Random;
    else throw ConfigError("config: unknown spread tier '" + tier + "'");
    return data::gen_spread_dataset(t, g.value("episodes", 2000L), seed);
}

policy::EvalFn make_eval_fn(const RunConfig& config, uint64_t run_seed) {
    const int episodes = config.extraction.eval_episodes;
    const std::string env_id = config.env_id;
    return [env_id, episodes, run_seed](const policy::ActorSet& actors,
                                        long step) -> std::pair<double, double> {
        const std::vector<uint64_t> seeds = {run_seed ^ static_cast<uint64_t>(step)};
        analysis::ScoreReport r;
        if (env_id == "bandit")
            r = analysis::evaluate_actors(actors, envs::BanditEnv{}, episodes, seeds);
        else if (env_id == "mode_bandit")
            r = analysis::evaluate_actors(actors, envs::ModeBanditEnv{}, episodes, seeds);
        else
            r = analysis::evaluate_actors(actors, envs::SpreadLiteEnv{}, episodes, seeds);
        return {r.seed_means[0], r.seed_stds[0]};
    };
}

std::pair<double, double> final_eval(const RunConfig& config, const policy::ActorSet& actors,
                                     uint64_t run_seed) {
    const std::vector<uint64_t> seeds = {run_seed + 777};
    analysis::ScoreReport r;
    if (config.env_id == "bandit")
        r = analysis::evaluate_actors(actors, envs::BanditEnv{}, config.eval_episodes, seeds);
    else if (config.env_id == "mode_bandit")
        r = analysis::evaluate_actors(actors, envs::ModeBanditEnv{}, config.eval_episodes, seeds);
    else
        r = analysis::evaluate_actors(actors, envs::SpreadLiteEnv{}, config.eval_episodes, seeds);
    return {r.seed_means[0], r.seed_stds[0]};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResourceError("cannot write artifact: " + path);
    f << text;
}

}  // namespace

RunResult run_pipeline(const RunConfig& config) {
    config.critic.validate();
    config.diffusion.validate();
    config.extraction.validate();

    const fs::path dir(config.output_dir);
    fs::create_directories(dir);

    std::map<std::string, std::string> artifacts;  // relative path -> sha256
    const auto record = [&](const std::string& rel) {
        artifacts[rel] = hash::sha256_file((dir / rel).string());
    };
    const auto write_manifest = [&](const std::string& status, const std::string& phase,
                                    const std::string& error) {
        nlohmann::json m;
        m["config_version"] = kConfigVersion;
        m["config"] = config.raw;
        m["status"] = status;
        if (!phase.empty()) m["phase"] = phase;
        if (!error.empty()) m["error"] = error;
        m["artifacts"] = artifacts;
        write_text((dir / "manifest.json").string(), m.dump(2) + "\n");
    };

    std::string phase = "dataset";
    try {
        // phase: dataset
        data::Dataset dataset = obtain_dataset(config);
        dataset.validate();
        data::save_dataset(dataset, (dir / "dataset.bin").string());
        record("dataset.bin");

        // phase: critic
        phase = "critic";
        const critic::CriticMode mode = config.algorithm == policy::Algorithm::BrpoInd
                                            ? critic::CriticMode::Independent
                                            : critic::CriticMode::Joint;
        critic::CriticSet critics =
            critic::pretrain_critic(dataset, config.critic, mode, config.critic_seed);
        critic::save_critic(critics, dir.string(), "critic");
        for (size_t i = 0; i < critics.critics.size(); ++i)
            for (const char* role : {"q1", "q2", "q1t", "q2t", "v"})
                record("critic_a" + std::to_string(i) + "_" + role + ".nn");

        // phase: diffusion
        phase = "diffusion";
        std::vector<diffusion::ScoreModel> scores;
        if (config.algorithm == policy::Algorithm::Omsd) {
            std::vector<int> order = config.extraction.order;
            if (order.empty())
                for (int i = 0; i < dataset.meta.n_agents; ++i) order.push_back(i);
            scores = diffusion::train_sequential_set(dataset, order, config.diffusion,
                                                     config.diffusion_seed);
        } else if (config.algorithm == policy::Algorithm::BrpoJal) {
            scores = {diffusion::train_joint_model(dataset, config.diffusion,
                                                   config.diffusion_seed)};
        } else {
            scores = diffusion::train_independent_set(dataset, config.diffusion,
                                                      config.diffusion_seed);
        }
        for (size_t i = 0; i < scores.size(); ++i) {
            const std::string rel = "score_model" + std::to_string(i) + ".ckpt";
            diffusion::save_score_model(scores[i], (dir / rel).string());
            record(rel);
        }

        // phase: extraction
        phase = "extraction";
        policy::ExtractionInputs inputs;
        inputs.dataset = &dataset;
        inputs.critics = &critics;
        inputs.scores = &scores;
        std::vector<policy::ActorSet> per_seed_actors;
        for (uint64_t seed : config.seeds) {
            policy::ExtractionResult res =
                policy::extract(inputs, config.extraction, seed, make_eval_fn(config, seed));
            const std::string stem = "seed" + std::to_string(seed);
            policy::save_actors(res.actors, dir.string(), stem);
            for (int i = 0; i < res.actors.n_actors(); ++i)
                record(stem + "_actor" + std::to_string(i) + ".ckpt");
            const std::string log_rel = "train_log_" + stem + ".csv";
            res.log.save_csv((dir / log_rel).string());
            record(log_rel);
            if (per_seed_actors.empty()) {
                analysis::VizResult viz = analysis::pca_policy_viz(dataset, res.log);
                write_text((dir / "viz.svg").string(), viz.svg);
                write_text((dir / "viz.csv").string(), viz.csv);
                record("viz.svg");
                record("viz.csv");
            }
            per_seed_actors.push_back(std::move(res.actors));
        }

        // phase: evaluation
        phase = "evaluation";
        analysis::ScoreReport report;
        report.seeds = config.seeds;
        for (size_t i = 0; i < config.seeds.size(); ++i) {
            const auto [mean, sd] = final_eval(config, per_seed_actors[i], config.seeds[i]);
            report.seed_means.push_back(mean);
            report.seed_stds.push_back(sd);
        }
        {
            const double n = static_cast<double>(report.seed_means.size());
            double mean = 0.0;
            for (double x : report.seed_means) mean += x;
            mean /= n;
            double var = 0.0;
            for (double x : report.seed_means) var += (x - mean) * (x - mean);
            report.pooled_mean = mean;
            report.pooled_std = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        }
        if (config.normalization)
            analysis::add_normalization(report, config.normalization->first,
                                        config.normalization->second);
        write_text((dir / "score_report.csv").string(), report.to_csv());
        record("score_report.csv");

        write_manifest("ok", "", "");
        return {dir.string(), report};
    } catch (const std::exception& e) {
        write_manifest("error", phase, e.what());
        throw;
    }
}

}  // namespace omsd::pipeline
