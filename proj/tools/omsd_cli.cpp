#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "omsd/analysis.hpp"
#include "omsd/datagen.hpp"
#include "omsd/hash.hpp"
#include "omsd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace omsd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitFormat = 4;

policy::TrainLog parse_train_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open train log: " + path);
    policy::TrainLog log;
    std::string line;
    if (!std::getline(f, line)) throw FormatError("train log is empty: " + path);
    int action_cols = 0;
    {
        std::stringstream header(line);
        std::string col;
        while (std::getline(header, col, ','))
            if (col.rfind("action_", 0) == 0) ++action_cols;
    }
    log.joint_action_dim = action_cols;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != 6 + action_cols)
            throw FormatError("train log row has wrong column count: " + path);
        policy::LogRecord r;
        r.step = std::stol(cells[0]);
        r.agent = std::stoi(cells[1]);
        r.q_grad_norm = std::stod(cells[2]);
        r.score_norm = std::stod(cells[3]);
        r.has_eval = !cells[4].empty();
        if (r.has_eval) {
            r.eval_mean = std::stod(cells[4]);
            r.eval_std = std::stod(cells[5]);
        }
        r.probe_action.resize(action_cols);
        for (int k = 0; k < action_cols; ++k)
            r.probe_action(k) = std::stod(cells[static_cast<size_t>(6 + k)]);
        log.records.push_back(std::move(r));
    }
    return log;
}

analysis::ScoreReport evaluate_on_env(const policy::ActorSet& actors, const std::string& env_id,
                                      int episodes, const std::vector<uint64_t>& seeds) {
    if (env_id == "bandit")
        return analysis::evaluate_actors(actors, envs::BanditEnv{}, episodes, seeds);
    if (env_id == "mode_bandit")
        return analysis::evaluate_actors(actors, envs::ModeBanditEnv{}, episodes, seeds);
    if (env_id == "spread_lite")
        return analysis::evaluate_actors(actors, envs::SpreadLiteEnv{}, episodes, seeds);
    throw ConfigError("unknown env '" + env_id + "'");
}

std::vector<diffusion::ScoreModel> load_score_models(const std::string& dir) {
    std::vector<diffusion::ScoreModel> models;
    for (int i = 0;; ++i) {
        const fs::path p = fs::path(dir) / ("score_model" + std::to_string(i) + ".ckpt");
        if (!fs::exists(p)) break;
        models.push_back(diffusion::load_score_model(p.string()));
    }
    if (models.empty()) throw ConfigError("no score models under " + dir);
    return models;
}

int run(int argc, char** argv) {
    CLI::App app{"offline multi-agent policy extraction lab"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    std::string gen_env = "bandit", gen_out = "dataset.bin", gen_tier = "medium";
    long gen_n = 1000000, gen_episodes = 2000;
    int gen_agents = 2;
    double gen_mode_std = 0.05;
    uint64_t gen_seed = 0;
    gen->add_option("--env", gen_env, "bandit / mode_bandit / spread_lite");
    gen->add_option("--n", gen_n, "transitions (bandit, mode_bandit)");
    gen->add_option("--episodes", gen_episodes, "episodes (spread_lite)");
    gen->add_option("--tier", gen_tier, "expert / medium / random (spread_lite)");
    gen->add_option("--n-agents", gen_agents, "agents (mode_bandit)");
    gen->add_option("--mode-std", gen_mode_std, "corner jitter (mode_bandit)");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--out", gen_out, "output path");

    // train-critic
    auto* tc = app.add_subcommand("train-critic", "pretrain the IQL critic");
    std::string tc_data, tc_out = ".", tc_mode = "joint";
    uint64_t tc_seed = 0;
    critic::CriticTrainConfig tc_cfg;
    tc->add_option("--data", tc_data, "dataset path")->required();
    tc->add_option("--out", tc_out, "output directory");
    tc->add_option("--mode", tc_mode, "joint / independent");
    tc->add_option("--seed", tc_seed, "rng seed");
    tc->add_option("--epochs", tc_cfg.epochs, "training epochs");
    tc->add_option("--steps-per-epoch", tc_cfg.steps_per_epoch, "gradient steps per epoch");
    tc->add_option("--batch", tc_cfg.batch_size, "batch size");
    tc->add_option("--lr", tc_cfg.lr, "learning rate");
    tc->add_option("--hidden", tc_cfg.hidden_dims, "hidden layer widths");

    // train-diffusion
    auto* td = app.add_subcommand("train-diffusion", "pretrain behavior score models");
    std::string td_data, td_out = ".", td_mode = "sequential";
    uint64_t td_seed = 0;
    diffusion::DiffusionTrainConfig td_cfg;
    td->add_option("--data", td_data, "dataset path")->required();
    td->add_option("--out", td_out, "output directory");
    td->add_option("--mode", td_mode, "sequential / independent / joint");
    td->add_option("--seed", td_seed, "rng seed");
    td->add_option("--steps", td_cfg.steps, "training steps");
    td->add_option("--batch", td_cfg.batch_size, "batch size");
    td->add_option("--lr", td_cfg.lr, "learning rate");
    td->add_option("--hidden", td_cfg.hidden_dims, "hidden layer widths");

    // extract
    auto* ex = app.add_subcommand("extract", "extract policies against pretrained models");
    std::string ex_data, ex_critic_dir, ex_score_dir, ex_out = ".", ex_algo = "omsd";
    uint64_t ex_seed = 0;
    policy::ExtractionConfig ex_cfg;
    ex->add_option("--data", ex_data, "dataset path")->required();
    ex->add_option("--critic-dir", ex_critic_dir, "critic checkpoint directory")->required();
    ex->add_option("--score-dir", ex_score_dir, "score model directory")->required();
    ex->add_option("--algorithm", ex_algo, "omsd / brpo_jal / brpo_ind / brpo_igo");
    ex->add_option("--beta", ex_cfg.beta, "regularization inverse weight");
    ex->add_option("--steps", ex_cfg.steps, "gradient steps");
    ex->add_option("--batch", ex_cfg.batch_size, "batch size");
    ex->add_option("--lr", ex_cfg.lr, "learning rate");
    ex->add_option("--hidden", ex_cfg.hidden_dims, "hidden layer widths");
    ex->add_option("--eval-interval", ex_cfg.eval_interval, "rollout eval interval (0 = off)");
    ex->add_option("--seed", ex_seed, "rng seed");
    ex->add_option("--out", ex_out, "output directory");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "roll out saved actors");
    std::string ev_dir, ev_stem = "policy", ev_env = "bandit", ev_out;
    int ev_episodes = 100;
    std::vector<uint64_t> ev_seeds = {0};
    ev->add_option("--actors-dir", ev_dir, "actor checkpoint directory")->required();
    ev->add_option("--stem", ev_stem, "actor checkpoint stem");
    ev->add_option("--env", ev_env, "bandit / mode_bandit / spread_lite");
    ev->add_option("--episodes", ev_episodes, "episodes per seed");
    ev->add_option("--seed", ev_seeds, "evaluation seeds (repeatable)");
    ev->add_option("--out", ev_out, "CSV output path (default stdout)");

    // verify-prop1
    auto* vp = app.add_subcommand("verify-prop1", "verify the factorization TV gap");
    int vp_n = 2, vp_bins = 2;
    long vp_samples = 100000;
    bool vp_empirical = false;
    vp->add_option("--n", vp_n, "number of agents")->required();
    vp->add_flag("--empirical", vp_empirical, "also run the histogram pipeline");
    vp->add_option("--samples", vp_samples, "empirical sample count");
    vp->add_option("--bins", vp_bins, "histogram bins per axis");

    // viz
    auto* vz = app.add_subcommand("viz", "PCA projection of dataset and policy trajectory");
    std::string vz_data, vz_log, vz_svg = "viz.svg", vz_csv = "viz.csv";
    vz->add_option("--data", vz_data, "dataset path")->required();
    vz->add_option("--log", vz_log, "train log CSV")->required();
    vz->add_option("--out-svg", vz_svg, "SVG output path");
    vz->add_option("--out-csv", vz_csv, "CSV output path");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "run the full experiment pipeline");
    std::string pl_config;
    pl->add_option("--config", pl_config, "JSON run config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (gen->parsed()) {
        data::Dataset d;
        if (gen_env == "bandit")
            d = data::gen_bandit_dataset(data::MixtureSpec::bandit_default(), gen_n, gen_seed);
        else if (gen_env == "mode_bandit")
            d = data::gen_mode_bandit_dataset(gen_agents, gen_n, gen_mode_std, gen_seed);
        else if (gen_env == "spread_lite") {
            data::SpreadTier tier;
            if (gen_tier == "expert") tier = data::SpreadTier::Expert;
            else if (gen_tier == "medium") tier = data::SpreadTier::Medium;
            else if (gen_tier == "random") tier = data::SpreadTier::Random;
            else throw ConfigError("unknown tier '" + gen_tier + "'");
            d = data::gen_spread_dataset(tier, gen_episodes, gen_seed);
        } else {
            throw ConfigError("unknown env '" + gen_env + "'");
        }
        data::save_dataset(d, gen_out);
        std::cout << "wrote " << gen_out << " (" << d.meta.n_transitions
                  << " transitions, mean return " << d.meta.mean_return << ")\n";
        return kExitOk;
    }

    if (tc->parsed()) {
        const data::Dataset d = data::load_dataset(tc_data);
        const critic::CriticMode mode = tc_mode == "independent"
                                            ? critic::CriticMode::Independent
                                            : critic::CriticMode::Joint;
        fs::create_directories(tc_out);
        const critic::CriticSet set = critic::pretrain_critic(d, tc_cfg, mode, tc_seed, tc_out);
        critic::save_critic(set, tc_out, "critic");
        std::cout << "wrote critic checkpoints under " << tc_out << "\n";
        return kExitOk;
    }

    if (td->parsed()) {
        const data::Dataset d = data::load_dataset(td_data);
        std::vector<diffusion::ScoreModel> models;
        if (td_mode == "sequential") {
            std::vector<int> order;
            for (int i = 0; i < d.meta.n_agents; ++i) order.push_back(i);
            models = diffusion::train_sequential_set(d, order, td_cfg, td_seed);
        } else if (td_mode == "independent") {
            models = diffusion::train_independent_set(d, td_cfg, td_seed);
        } else if (td_mode == "joint") {
            models = {diffusion::train_joint_model(d, td_cfg, td_seed)};
        } else {
            throw ConfigError("unknown diffusion mode '" + td_mode + "'");
        }
        fs::create_directories(td_out);
        for (size_t i = 0; i < models.size(); ++i)
            diffusion::save_score_model(
                models[i], (fs::path(td_out) / ("score_model" + std::to_string(i) + ".ckpt"))
                               .string());
        std::cout << "wrote " << models.size() << " score model(s) under " << td_out << "\n";
        return kExitOk;
    }

    if (ex->parsed()) {
        const data::Dataset d = data::load_dataset(ex_data);
        ex_cfg.algorithm = policy::algorithm_from_name(ex_algo);
        critic::CriticTrainConfig ccfg;
        const critic::CriticSet critics = critic::load_critic(ex_critic_dir, "critic", ccfg);
        const std::vector<diffusion::ScoreModel> scores = load_score_models(ex_score_dir);
        policy::ExtractionInputs inputs{&d, &critics, &scores};
        policy::EvalFn eval;
        if (ex_cfg.eval_interval > 0) {
            const std::string env_id = d.meta.env_id;
            const int episodes = ex_cfg.eval_episodes;
            eval = [env_id, episodes, ex_seed](const policy::ActorSet& a,
                                               long step) -> std::pair<double, double> {
                const analysis::ScoreReport r = evaluate_on_env(
                    a, env_id, episodes, {ex_seed ^ static_cast<uint64_t>(step)});
                return {r.seed_means[0], r.seed_stds[0]};
            };
        }
        const policy::ExtractionResult res = policy::extract(inputs, ex_cfg, ex_seed, eval);
        fs::create_directories(ex_out);
        policy::save_actors(res.actors, ex_out, "policy");
        res.log.save_csv((fs::path(ex_out) / "train_log.csv").string());
        std::cout << "wrote actors and train_log.csv under " << ex_out << "\n";
        return kExitOk;
    }

    if (ev->parsed()) {
        const policy::ActorSet actors = policy::load_actors(ev_dir, ev_stem);
        analysis::ScoreReport report = evaluate_on_env(actors, ev_env, ev_episodes, ev_seeds);
        if (ev_out.empty()) {
            std::cout << report.to_csv();
        } else {
            std::ofstream f(ev_out, std::ios::binary);
            if (!f) throw ResourceError("cannot write " + ev_out);
            f << report.to_csv();
        }
        return kExitOk;
    }

    if (vp->parsed()) {
        const double analytic = analysis::tv_factorized_analytic(vp_n);
        const double enumerated = analysis::tv_factorized_enumerate(vp_n);
        std::cout << "analytic_tv " << analytic << "\n";
        std::cout << "enumerated_tv " << enumerated << "\n";
        bool ok = std::abs(analytic - enumerated) <= 1e-12;
        if (vp_empirical) {
            const data::Dataset d = data::gen_mode_bandit_dataset(vp_n, vp_samples, 0.05, 0);
            const analysis::FactorizationReport rep = analysis::tv_factorized_empirical(d, vp_bins);
            std::cout << "empirical_tv " << rep.empirical_tv << "\n";
            for (const std::string& w : rep.warnings) std::cout << "warning " << w << "\n";
            ok = ok && std::abs(rep.empirical_tv - analytic) <= 0.01;
        }
        std::cout << (ok ? "match" : "MISMATCH") << "\n";
        return ok ? kExitOk : kExitDivergence;
    }

    if (vz->parsed()) {
        const data::Dataset d = data::load_dataset(vz_data);
        const policy::TrainLog log = parse_train_log(vz_log);
        const analysis::VizResult viz = analysis::pca_policy_viz(d, log);
        std::ofstream svg(vz_svg, std::ios::binary);
        if (!svg) throw ResourceError("cannot write " + vz_svg);
        svg << viz.svg;
        std::ofstream csv(vz_csv, std::ios::binary);
        if (!csv) throw ResourceError("cannot write " + vz_csv);
        csv << viz.csv;
        for (const std::string& w : viz.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "wrote " << vz_svg << " and " << vz_csv << "\n";
        return kExitOk;
    }

    if (pl->parsed()) {
        const pipeline::RunConfig config = pipeline::RunConfig::load(pl_config);
        const pipeline::RunResult result = pipeline::run_pipeline(config);
        std::cout << "run dir " << result.run_dir << "\n";
        std::cout << "pooled mean " << result.report.pooled_mean << " std "
                  << result.report.pooled_std << "\n";
        return kExitOk;
    }

    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const omsd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const omsd::DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const omsd::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const omsd::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
