// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line; the process exits non-zero if any executed check fails.
//
// Usage: acceptance [numbers...]   (no arguments runs all nine checks)
//
// The bandit study (checks 1, 6, 7) shares one dataset, one set of critics
// and one set of behavior models; everything is seeded so reruns reproduce
// the same numbers bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "omsd/analysis.hpp"
#include "omsd/critic.hpp"
#include "omsd/datagen.hpp"
#include "omsd/diffusion.hpp"
#include "omsd/envs.hpp"
#include "omsd/nn.hpp"
#include "omsd/pipeline.hpp"
#include "omsd/policy.hpp"

namespace fs = std::filesystem;
using namespace omsd;
using nn::Matrix;
using nn::Vector;

namespace {

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    return m / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / (static_cast<double>(xs.size()) - 1.0));
}

// ---------------------------------------------------------------------------
// Shared bandit study: dataset, critics, behavior models, extraction helper.
// ---------------------------------------------------------------------------

struct BanditRun {
    double eval_mean = 0.0;
    Vector endpoint;                 // final logged probe joint action
    policy::TrainLog log;
};

struct BanditLab {
    data::Dataset dataset;
    critic::CriticSet joint_critics;
    critic::CriticSet ind_critics;
    std::vector<diffusion::ScoreModel> seq_scores;    // agent 1 conditions on agent 0
    std::vector<diffusion::ScoreModel> joint_scores;  // one model over the joint action
    std::vector<diffusion::ScoreModel> ind_scores;

    static BanditLab build() {
        BanditLab lab;
        lab.dataset = data::gen_bandit_dataset(data::MixtureSpec::bandit_default(), 1000000, 1);

        critic::CriticTrainConfig ccfg;
        ccfg.epochs = 5;
        ccfg.steps_per_epoch = 1000;
        ccfg.batch_size = 256;
        ccfg.hidden_dims = {64, 64};
        lab.joint_critics = critic::pretrain_critic(lab.dataset, ccfg, critic::CriticMode::Joint, 0);
        lab.ind_critics =
            critic::pretrain_critic(lab.dataset, ccfg, critic::CriticMode::Independent, 0);

        diffusion::DiffusionTrainConfig dcfg;
        dcfg.steps = 20000;
        dcfg.batch_size = 256;
        dcfg.hidden_dims = {128, 128};
        lab.seq_scores = diffusion::train_sequential_set(lab.dataset, {0, 1}, dcfg, 0);
        lab.joint_scores = {diffusion::train_joint_model(lab.dataset, dcfg, 0)};
        lab.ind_scores = diffusion::train_independent_set(lab.dataset, dcfg, 0);
        return lab;
    }

    BanditRun run(policy::Algorithm alg, double beta, uint64_t seed) const {
        policy::ExtractionConfig cfg;
        cfg.algorithm = alg;
        cfg.beta = beta;
        cfg.steps = 3000;
        cfg.batch_size = 128;
        cfg.hidden_dims = {64, 64};
        cfg.eval_interval = 0;  // evaluated once below instead

        policy::ExtractionInputs inputs;
        inputs.dataset = &dataset;
        inputs.critics = alg == policy::Algorithm::BrpoInd ? &ind_critics : &joint_critics;
        inputs.scores = alg == policy::Algorithm::BrpoJal
                            ? &joint_scores
                            : (alg == policy::Algorithm::Omsd ? &seq_scores : &ind_scores);

        policy::ExtractionResult res = policy::extract(inputs, cfg, seed);
        BanditRun out;
        out.eval_mean =
            analysis::evaluate_actors(res.actors, envs::BanditEnv{}, 100, {7}).pooled_mean;
        out.endpoint = res.log.records.back().probe_action;
        out.log = std::move(res.log);
        return out;
    }
};

std::optional<BanditLab> g_lab;
std::optional<std::vector<BanditRun>> g_ind_runs;  // BRPO-Ind seeds 0..9 (checks 1 and 7)

const BanditLab& lab() {
    if (!g_lab) g_lab = BanditLab::build();
    return *g_lab;
}

const std::vector<BanditRun>& ind_runs() {
    if (!g_ind_runs) {
        std::vector<BanditRun> runs;
        for (uint64_t s = 0; s < 10; ++s) runs.push_back(lab().run(policy::Algorithm::BrpoInd, 6.0, s));
        g_ind_runs = std::move(runs);
    }
    return *g_ind_runs;
}

// ---------------------------------------------------------------------------
// Check 1: offline bandit score table across the four extraction variants.
// ---------------------------------------------------------------------------

std::string check1(bool& ok) {
    std::vector<double> omsd, jal, igo;
    for (uint64_t s = 0; s < 5; ++s) omsd.push_back(lab().run(policy::Algorithm::Omsd, 6.0, s).eval_mean);
    for (uint64_t s = 0; s < 5; ++s) jal.push_back(lab().run(policy::Algorithm::BrpoJal, 6.0, s).eval_mean);
    std::vector<double> ind;
    for (const BanditRun& r : ind_runs()) ind.push_back(r.eval_mean);
    for (uint64_t s = 0; s < 16; ++s) igo.push_back(lab().run(policy::Algorithm::BrpoIgo, 6.0, s).eval_mean);

    const double om_m = mean_of(omsd), om_s = sample_std(omsd);
    const double ja_m = mean_of(jal), ja_s = sample_std(jal);
    const double in_m = mean_of(ind), in_s = sample_std(ind);
    const double ig_m = mean_of(igo), ig_s = sample_std(igo);

    ok = om_m >= 0.95 && om_s <= 0.05 && ja_m >= 0.95 && ja_s <= 0.05 &&
         std::abs(in_m) <= 0.5 && in_s >= 0.4 && std::abs(ig_m) <= 0.5 && ig_s >= 0.4;
    return fmt("bandit table omsd=%.3f+-%.3f jal=%.3f+-%.3f ind=%.3f+-%.3f igo=%.3f+-%.3f",
               om_m, om_s, ja_m, ja_s, in_m, in_s, ig_m, ig_s);
}

// ---------------------------------------------------------------------------
// Check 2: factorization gap closed form and empirical estimate.
// ---------------------------------------------------------------------------

std::string check2(bool& ok) {
    double worst_exact = 0.0;
    for (int n = 1; n <= 16; ++n) {
        const double gap =
            std::abs(analysis::tv_factorized_enumerate(n) - analysis::tv_factorized_analytic(n));
        worst_exact = std::max(worst_exact, gap);
    }

    double worst_emp = 0.0;
    for (int n : {2, 4, 8}) {
        const data::Dataset ds = data::gen_mode_bandit_dataset(n, 1000000, 0.05, 7);
        const analysis::FactorizationReport rep = analysis::tv_factorized_empirical(ds, 2);
        worst_emp = std::max(worst_emp, std::abs(rep.empirical_tv - rep.analytic_tv));
    }

    ok = worst_exact <= 1e-12 && worst_emp <= 0.01;
    return fmt("tv gap enumerate|analytic %.2e, empirical|analytic %.4f", worst_exact, worst_emp);
}

// ---------------------------------------------------------------------------
// Check 3: trained noise model recovers the analytic gaussian score.
// ---------------------------------------------------------------------------

std::string check3(bool& ok) {
    const Vector mean = Vector::Constant(2, 0.5);
    const data::Dataset ds = data::gen_gaussian_dataset(mean, 0.2, 200000, 3);
    diffusion::DiffusionTrainConfig cfg;
    cfg.steps = 50000;
    cfg.batch_size = 256;
    cfg.hidden_dims = {64, 64};
    const diffusion::ScoreModel model = diffusion::train_joint_model(ds, cfg, 0);

    const double t = 0.02;
    const auto [alpha, sigma] = model.schedule.alpha_sigma(t);
    const double denom = alpha * alpha * 0.04 + sigma * sigma;

    const int g = 21;
    Matrix actions(2, g * g);
    int col = 0;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            actions(0, col) = -1.0 + 2.0 * i / (g - 1);
            actions(1, col) = -1.0 + 2.0 * j / (g - 1);
            ++col;
        }
    const Matrix states = Matrix::Zero(1, g * g);
    const Matrix prefix(0, g * g);
    const Matrix got = diffusion::score_at(model, actions, states, prefix, t);
    Matrix expect(2, g * g);
    for (int c = 0; c < g * g; ++c) expect.col(c) = alpha * (mean - actions.col(c)) / denom;

    double cos_sum = 0.0;
    int cos_n = 0;
    for (int c = 0; c < g * g; ++c) {
        const double na = got.col(c).norm(), nb = expect.col(c).norm();
        if (nb < 1e-9) continue;
        cos_sum += got.col(c).dot(expect.col(c)) / std::max(na * nb, 1e-300);
        ++cos_n;
    }
    const double cosine = cos_sum / cos_n;
    const double rel_l2 = (got - expect).norm() / expect.norm();

    ok = cosine >= 0.95 && rel_l2 <= 0.15;
    return fmt("gaussian score grid cosine=%.4f rel_l2=%.4f", cosine, rel_l2);
}

// ---------------------------------------------------------------------------
// Check 4: analytic backward pass against central finite differences.
// ---------------------------------------------------------------------------

// Resample x until every hidden pre-activation sits away from the ReLU kink,
// so finite differencing stays on one linear piece.
Vector away_from_kinks(const nn::MlpParams& p, Rng& rng, double margin) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Vector x(p.spec.input_dim);
        for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.0, 1.0);
        bool clean = true;
        Matrix h = x;
        for (size_t l = 0; l + 1 < p.weights.size() && clean; ++l) {
            Matrix z = p.weights[l] * h + p.biases[l];
            if (z.cwiseAbs().minCoeff() < margin) clean = false;
            h = z.cwiseMax(0.0);
        }
        if (clean) return x;
    }
    throw ResourceError("could not find a kink-free probe input");
}

std::string check4(bool& ok) {
    struct Shape {
        int in;
        std::vector<int> hidden;
        int out;
    };
    const std::vector<Shape> shapes = {
        {3, {}, 2}, {4, {8}, 3}, {5, {16, 16}, 2}, {2, {4, 4, 4}, 1}, {6, {32}, 4}};

    const double h = 1e-5;
    double worst = 0.0;
    Rng rng(42);
    for (const Shape& sh : shapes) {
        nn::MlpSpec spec;
        spec.input_dim = sh.in;
        spec.hidden_dims = sh.hidden;
        spec.output_dim = sh.out;
        for (int c = 0; c < 100; ++c) {
            nn::MlpParams p = nn::MlpParams::init(spec, rng);
            const Vector x = away_from_kinks(p, rng, 1e-3);
            Vector up(sh.out);
            for (int i = 0; i < sh.out; ++i) up(i) = rng.uniform(-1.0, 1.0);

            nn::ForwardCache cache;
            nn::mlp_forward(p, x, &cache);
            const nn::MlpGrads grads = nn::mlp_backward(p, cache, up);

            const auto loss_at = [&](const nn::MlpParams& q, const Vector& xi) {
                return (up.transpose() * nn::mlp_forward(q, xi))(0, 0);
            };
            const auto rel = [&](double fd, double an) {
                return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
            };

            for (size_t l = 0; l < p.weights.size(); ++l) {
                for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
                    nn::MlpParams q = p;
                    q.weights[l](i) += h;
                    const double up_loss = loss_at(q, x);
                    q.weights[l](i) -= 2 * h;
                    const double dn_loss = loss_at(q, x);
                    worst = std::max(worst, rel((up_loss - dn_loss) / (2 * h), grads.weights[l](i)));
                }
                for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
                    nn::MlpParams q = p;
                    q.biases[l](i) += h;
                    const double up_loss = loss_at(q, x);
                    q.biases[l](i) -= 2 * h;
                    const double dn_loss = loss_at(q, x);
                    worst = std::max(worst, rel((up_loss - dn_loss) / (2 * h), grads.biases[l](i)));
                }
            }
            for (int i = 0; i < sh.in; ++i) {
                Vector xp = x, xm = x;
                xp(i) += h;
                xm(i) -= h;
                worst = std::max(worst, rel((loss_at(p, xp) - loss_at(p, xm)) / (2 * h),
                                            grads.input(i, 0)));
            }
        }
    }
    ok = worst <= 1e-4;
    return fmt("backward vs finite differences worst rel=%.2e over 5 shapes x 100 cases", worst);
}

// ---------------------------------------------------------------------------
// Check 5: schedule, expectile and untrained-denoiser identities.
// ---------------------------------------------------------------------------

std::string check5(bool& ok) {
    const diffusion::VpSchedule sched;
    double worst_vp = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double t = i / 1000.0;
        const auto [a, s] = sched.alpha_sigma(t);
        worst_vp = std::max(worst_vp, std::abs(a * a + s * s - 1.0));
    }

    double worst_exp = 0.0;
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-5.0, 5.0);
        const double tau = rng.uniform(0.01, 0.99);
        worst_exp = std::max(worst_exp, std::abs(critic::expectile_loss(u, tau) -
                                                 critic::expectile_loss(-u, 1.0 - tau)));
        worst_exp = std::max(worst_exp, std::abs(critic::expectile_loss(u, 0.5) - 0.5 * u * u));
    }

    // A freshly initialized noise model predicts exactly zero, so its loss on
    // standard normal noise targets is E||eps||^2 = action_dim.
    const data::Dataset ds =
        data::gen_bandit_dataset(data::MixtureSpec::bandit_default(), 100000, 2);
    diffusion::ScoreModelConfig mcfg;
    mcfg.mode = diffusion::CondMode::Joint;
    mcfg.state_dim = ds.meta.state_dim;
    mcfg.action_dim = 2;
    diffusion::DiffusionTrainConfig tcfg;
    tcfg.batch_size = 100000;
    diffusion::ScoreTrainer trainer = diffusion::ScoreTrainer::create(mcfg, tcfg, {0, 1}, {}, 5);
    data::BatchSampler sampler(ds, 100000, 31);
    Rng noise(123);
    const double loss = trainer.eval_loss(sampler.sample(), noise);

    ok = worst_vp <= 1e-12 && worst_exp <= 1e-12 && std::abs(loss - 2.0) <= 0.04;
    return fmt("vp identity %.2e, expectile identity %.2e, untrained loss %.4f (target 2)",
               worst_vp, worst_exp, loss);
}

// ---------------------------------------------------------------------------
// Check 6: conditional behavior models behave like conditionals.
// ---------------------------------------------------------------------------

std::string check6(bool& ok) {
    // (a) On a product dataset the agent-1 conditional score must match the
    // agent-1 marginal score regardless of the conditioning prefix.
    data::MixtureSpec spec;
    for (double a : {0.8, -0.8})
        for (double b : {0.8, -0.8}) {
            Vector m(2);
            m << a, b;
            spec.means.push_back(m);
            spec.weights.push_back(0.25);
        }
    spec.stddev = 0.3;
    const data::Dataset product = data::gen_bandit_dataset(spec, 400000, 11);

    diffusion::DiffusionTrainConfig dcfg;
    dcfg.steps = 8000;
    dcfg.batch_size = 256;
    dcfg.hidden_dims = {128, 128};
    const auto seq = diffusion::train_sequential_set(product, {0, 1}, dcfg, 0);
    const auto ind = diffusion::train_independent_set(product, dcfg, 0);

    const int g = 21;
    const int cols = g * 3;
    Matrix a2(1, cols), pre(1, cols);
    int col = 0;
    for (double p : {-0.8, 0.0, 0.8})
        for (int i = 0; i < g; ++i) {
            a2(0, col) = -1.0 + 2.0 * i / (g - 1);
            pre(0, col) = p;
            ++col;
        }
    const Matrix states = Matrix::Zero(1, cols);
    const Matrix cond = diffusion::score_at(seq[1], a2, states, pre);
    const Matrix marg = diffusion::score_at(ind[1], a2, states, Matrix(0, cols));
    const Eigen::Map<const Vector> vc(cond.data(), cols), vm(marg.data(), cols);
    const double cosine = vc.dot(vm) / (vc.norm() * vm.norm());

    // (b) On the coordinated bandit data, sampling agent 1 conditioned on a
    // +0.8 prefix must stay in the positive mode.
    Rng rng(19);
    Vector state = Vector::Zero(1);
    Vector prefix_pos = Vector::Constant(1, 0.8);
    int below = 0;
    const int n_cond = 1000;
    for (int i = 0; i < n_cond; ++i)
        if (diffusion::ancestral_sample(lab().seq_scores[1], state, prefix_pos, 100, rng)(0) < 0.0)
            ++below;
    const double frac_below = static_cast<double>(below) / n_cond;

    // (c) Chaining agent 0's marginal with agent 1's conditional reproduces
    // the dataset's quadrant masses.
    const int n_chain = 2000;
    double quad[2][2] = {{0, 0}, {0, 0}};
    Vector no_prefix(0);
    for (int i = 0; i < n_chain; ++i) {
        const double a1 = diffusion::ancestral_sample(lab().seq_scores[0], state, no_prefix, 100, rng)(0);
        Vector pfx = Vector::Constant(1, a1);
        const double a2s = diffusion::ancestral_sample(lab().seq_scores[1], state, pfx, 100, rng)(0);
        quad[a1 >= 0][a2s >= 0] += 1.0 / n_chain;
    }
    double data_quad[2][2] = {{0, 0}, {0, 0}};
    const data::Dataset& ds = lab().dataset;
    for (long c = 0; c < ds.meta.n_transitions; ++c)
        data_quad[ds.actions(0, c) >= 0][ds.actions(1, c) >= 0] +=
            1.0 / static_cast<double>(ds.meta.n_transitions);
    double worst_quad = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            worst_quad = std::max(worst_quad, std::abs(quad[i][j] - data_quad[i][j]));

    ok = cosine >= 0.9 && frac_below < 0.05 && worst_quad <= 0.05;
    return fmt("conditional vs marginal cosine=%.4f, mass below 0 given +0.8 prefix=%.3f, "
               "quadrant error=%.3f",
               cosine, frac_below, worst_quad);
}

// ---------------------------------------------------------------------------
// Check 7: trajectory endpoints land on modes (or anti-modes for BRPO-Ind).
// ---------------------------------------------------------------------------

std::string check7(bool& ok) {
    const BanditRun run = lab().run(policy::Algorithm::Omsd, 0.5, 0);
    Vector mode1 = Vector::Constant(2, 0.8), mode2 = Vector::Constant(2, -0.8);
    const double mode_dist =
        std::min((run.endpoint - mode1).norm(), (run.endpoint - mode2).norm());

    // The projected endpoint must fall inside the hull of the dataset cluster
    // it converged to (split by the sign of the first principal component).
    const analysis::VizResult viz = analysis::pca_policy_viz(lab().dataset, run.log, 2000);
    const Eigen::Vector2d end = viz.policy_proj.col(viz.policy_proj.cols() - 1);
    std::vector<Eigen::Vector2d> cluster;
    for (Eigen::Index c = 0; c < viz.dataset_proj.cols(); ++c)
        if ((viz.dataset_proj(0, c) >= 0) == (end(0) >= 0))
            cluster.push_back(viz.dataset_proj.col(c));
    const bool in_hull = analysis::point_in_hull(end, analysis::convex_hull(cluster));

    // With independent behavior models at least one seed must anti-coordinate.
    Vector anti1(2), anti2(2);
    anti1 << 1.0, -1.0;
    anti2 << -1.0, 1.0;
    double best_anti = 1e9;
    for (const BanditRun& r : ind_runs())
        best_anti = std::min({best_anti, (r.endpoint - anti1).norm(), (r.endpoint - anti2).norm()});

    ok = mode_dist <= 0.1 && in_hull && best_anti <= 0.3;
    return fmt("endpoint %.4f from a mode, inside hull=%s, closest anti-mode across seeds %.4f",
               mode_dist, in_hull ? "yes" : "no", best_anti);
}

// ---------------------------------------------------------------------------
// Check 8: medium spread data, extraction beats behavior cloning baselines.
// ---------------------------------------------------------------------------

std::string check8(bool& ok) {
    const data::Dataset ds = data::gen_spread_dataset(data::SpreadTier::Medium, 4000, 5);

    critic::CriticTrainConfig ccfg;
    ccfg.epochs = 10;
    ccfg.steps_per_epoch = 1000;
    ccfg.batch_size = 256;
    ccfg.hidden_dims = {256, 256};
    const critic::CriticSet critics =
        critic::pretrain_critic(ds, ccfg, critic::CriticMode::Joint, 0);

    // Concentrate behavior-model capacity at low noise: extraction reads the
    // score at a small t, and the smoothed conditional density at large t is
    // never consulted.
    diffusion::DiffusionTrainConfig dcfg;
    dcfg.steps = 60000;
    dcfg.batch_size = 256;
    dcfg.hidden_dims = {128, 128};
    dcfg.t_max = 0.2;
    const auto scores = diffusion::train_sequential_set(ds, {0, 1, 2}, dcfg, 0);

    policy::ExtractionInputs inputs;
    inputs.dataset = &ds;
    inputs.critics = &critics;
    inputs.scores = &scores;

    policy::ExtractionConfig ecfg;
    ecfg.algorithm = policy::Algorithm::Omsd;
    ecfg.beta = 0.1;
    ecfg.steps = 8000;
    ecfg.batch_size = 256;
    ecfg.hidden_dims = {128, 128};
    ecfg.eval_interval = 0;
    ecfg.t_eval = 0.05;

    const envs::SpreadLiteEnv env;
    std::vector<double> omsd;
    for (uint64_t s = 0; s < 5; ++s) {
        const policy::ExtractionResult res = policy::extract(inputs, ecfg, s);
        omsd.push_back(analysis::evaluate_actors(res.actors, env, 100, {7}).pooled_mean);
    }

    // Advantage-weighted regression on the same pretrained critic.
    std::vector<double> awr;
    for (uint64_t s = 0; s < 5; ++s) {
        Rng rng(s);
        critic::AwrActorSet actors = critic::make_awr_actors(ds.meta, {256, 256}, 3e-4, rng);
        data::BatchSampler sampler(ds, 256, s + 1000);
        for (long step = 0; step < 10000; ++step)
            critic::awr_actor_step(critics.critics[0], actors, sampler.sample(), 3.0,
                                   critic::AdvClamp::ExpClamp100);
        policy::ActorSet set;
        set.state_dim = ds.meta.state_dim;
        int offset = 0;
        for (size_t i = 0; i < actors.actors.size(); ++i) {
            set.actors.push_back(actors.actors[i]);
            set.opts.push_back(actors.opts[i]);
            set.action_dims.push_back(ds.meta.action_dims[i]);
            set.action_offsets.push_back(offset);
            offset += ds.meta.action_dims[i];
            set.order.push_back(static_cast<int>(i));
        }
        awr.push_back(analysis::evaluate_actors(set, env, 100, {7}).pooled_mean);
    }

    const double om = mean_of(omsd), aw = mean_of(awr), bar = ds.meta.mean_return;
    ok = om > bar && om > aw;
    return fmt("spread return omsd=%.2f vs dataset=%.2f and awr=%.2f (5 seeds each)", om, bar, aw);
}

// ---------------------------------------------------------------------------
// Check 9: the full pipeline is byte-reproducible.
// ---------------------------------------------------------------------------

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

std::string check9(bool& ok) {
    const fs::path root = fs::temp_directory_path() / "omsd_acceptance_rerun";
    fs::remove_all(root);
    fs::create_directories(root);

    const auto make_config = [&](const std::string& sub) {
        nlohmann::json j;
        j["config_version"] = 1;
        j["env"] = "bandit";
        j["algorithm"] = "omsd";
        j["output_dir"] = (root / sub).string();
        j["seeds"] = {0, 1};
        j["dataset"] = {{"generate", {{"n", 20000}, {"seed", 5}}}};
        j["critic"] = {{"epochs", 1}, {"steps_per_epoch", 200}, {"batch_size", 128},
                       {"hidden_dims", {32, 32}}};
        j["diffusion"] = {{"steps", 300}, {"batch_size", 128}, {"hidden_dims", {64, 64}}};
        j["extraction"] = {{"beta", 1.0},         {"steps", 300},       {"batch_size", 64},
                           {"hidden_dims", {32, 32}}, {"eval_interval", 100}, {"eval_episodes", 5},
                           {"log_interval", 50}};
        j["evaluation"] = {{"episodes", 10}};
        return pipeline::RunConfig::from_json(j);
    };

    pipeline::run_pipeline(make_config("a"));
    pipeline::run_pipeline(make_config("b"));

    std::vector<std::string> diffs;
    for (const char* rel : {"dataset.bin", "train_log_seed0.csv", "train_log_seed1.csv",
                            "viz.svg", "viz.csv", "score_report.csv"})
        if (read_bytes(root / "a" / rel) != read_bytes(root / "b" / rel) ||
            read_bytes(root / "a" / rel).empty())
            diffs.push_back(rel);

    ok = diffs.empty();
    std::string detail = "pipeline rerun byte-identical (dataset, train logs, viz, report)";
    if (!ok) {
        detail = "pipeline rerun differs:";
        for (const std::string& d : diffs) detail += " " + d;
    }
    return detail;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    const auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

    using CheckFn = std::string (*)(bool&);
    const std::vector<std::pair<int, CheckFn>> checks = {
        {1, check1}, {2, check2}, {3, check3}, {4, check4}, {5, check5},
        {6, check6}, {7, check7}, {8, check8}, {9, check9},
    };

    int failures = 0;
    for (const auto& [num, fn] : checks) {
        if (!wanted(num)) continue;
        bool ok = false;
        std::string detail;
        try {
            detail = fn(ok);
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", num, detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
