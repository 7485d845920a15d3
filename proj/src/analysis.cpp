#include "omsd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace omsd::analysis {

double normalized_score(double s, double s_random, double s_expert) {
    if (s_expert == s_random)
        throw ConfigError("normalized_score: expert and random references are equal");
    return 100.0 * (s - s_random) / (s_expert - s_random);
}

double tv_factorized_analytic(int n) {
    if (n < 1) throw DomainError("tv_factorized_analytic: n must be >= 1");
    return 1.0 - std::ldexp(1.0, 1 - n);
}

double tv_factorized_enumerate(int n) {
    if (n < 1) throw DomainError("tv_factorized_enumerate: n must be >= 1");
    if (n > 20)
        throw ResourceError("tv_factorized_enumerate: n > 20; use tv_factorized_analytic");
    const uint32_t corners = 1u << n;
    const double product = std::ldexp(1.0, -n);  // uniform over corners
    double sum = 0.0;
    for (uint32_t c = 0; c < corners; ++c) {
        const double joint = (c == 0 || c == corners - 1) ? 0.5 : 0.0;
        sum += std::abs(joint - product);
    }
    return 0.5 * sum;
}

FactorizationReport tv_factorized_empirical(const data::Dataset& dataset, int bins) {
    dataset.validate();
    if (bins < 2) throw ConfigError("tv_factorized_empirical: bins must be >= 2");
    const int n = dataset.meta.joint_action_dim();
    if (n < 1 || n > 24) throw DomainError("tv_factorized_empirical: unsupported agent count");

    FactorizationReport report;
    report.n_agents = n;
    report.analytic_tv = tv_factorized_analytic(n);

    double cells_d = std::pow(static_cast<double>(bins), n);
    if (cells_d > static_cast<double>(1u << 24)) {
        report.warnings.push_back("grid too large; reduced to 2 bins per axis");
        bins = 2;
        cells_d = std::pow(2.0, n);
    }
    report.bins = bins;
    const size_t cells = static_cast<size_t>(cells_d);

    const long m = dataset.meta.n_transitions;
    std::vector<double> joint(cells, 0.0);
    report.marginals.assign(static_cast<size_t>(n), Vector::Zero(bins));
    const double w = 1.0 / static_cast<double>(m);
    for (long col = 0; col < m; ++col) {
        size_t cell = 0;
        for (int k = 0; k < n; ++k) {
            const double a = std::clamp(dataset.actions(k, col), 0.0, 1.0);
            const int b = std::min(bins - 1, static_cast<int>(a * bins));
            report.marginals[static_cast<size_t>(k)](b) += w;
            cell = cell * static_cast<size_t>(bins) + static_cast<size_t>(b);
        }
        joint[cell] += w;
    }

    double tv = 0.0;
    std::vector<int> idx(static_cast<size_t>(n), 0);
    for (size_t cell = 0; cell < cells; ++cell) {
        size_t rem = cell;
        double product = 1.0;
        for (int k = n - 1; k >= 0; --k) {
            idx[static_cast<size_t>(k)] = static_cast<int>(rem % static_cast<size_t>(bins));
            rem /= static_cast<size_t>(bins);
            product *= report.marginals[static_cast<size_t>(k)](idx[static_cast<size_t>(k)]);
        }
        tv += std::abs(joint[cell] - product);
        if (bins == 2) {
            CornerMass cm;
            for (int k = 0; k < n; ++k)
                if (idx[static_cast<size_t>(k)] == 1) cm.corner |= (1u << k);
            cm.joint = joint[cell];
            cm.product = product;
            report.mode_table.push_back(cm);
        }
    }
    report.empirical_tv = 0.5 * tv;
    return report;
}

namespace {

std::pair<double, double> mean_sample_std(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / (n - 1.0))};
}

template <class Env>
ScoreReport eval_impl(const policy::ActorSet& actors, const Env& env, int n_agents,
                      int n_episodes, const std::vector<uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("evaluate_actors: seeds must be non-empty");
    if (n_episodes < 1) throw ConfigError("evaluate_actors: n_episodes must be >= 1");
    const std::vector<envs::PolicyFn> policies = actors.env_policies(n_agents);

    ScoreReport report;
    report.seeds = seeds;
    std::vector<double> seed_means;
    for (uint64_t seed : seeds) {
        Rng root(seed);
        std::vector<double> returns;
        returns.reserve(static_cast<size_t>(n_episodes));
        for (int ep = 0; ep < n_episodes; ++ep) {
            const envs::Trajectory traj = envs::rollout(policies, env, root.next_u64());
            returns.push_back(traj.episode_return);
        }
        const auto [mean, sd] = mean_sample_std(returns);
        report.seed_means.push_back(mean);
        report.seed_stds.push_back(sd);
        seed_means.push_back(mean);
    }
    std::tie(report.pooled_mean, report.pooled_std) = mean_sample_std(seed_means);
    return report;
}

}  // namespace

ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::BanditEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds) {
    return eval_impl(actors, env, envs::BanditEnv::n_agents, n_episodes, seeds);
}

ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::ModeBanditEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds) {
    return eval_impl(actors, env, env.n_agents, n_episodes, seeds);
}

ScoreReport evaluate_actors(const policy::ActorSet& actors, const envs::SpreadLiteEnv& env,
                            int n_episodes, const std::vector<uint64_t>& seeds) {
    return eval_impl(actors, env, envs::SpreadLiteEnv::n_agents, n_episodes, seeds);
}

void add_normalization(ScoreReport& report, double s_random, double s_expert) {
    report.normalized = normalized_score(report.pooled_mean, s_random, s_expert);
    report.s_random = s_random;
    report.s_expert = s_expert;
    report.has_normalization = true;
}

std::string ScoreReport::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(12);
    out << "record,seed,mean,std\n";
    for (size_t i = 0; i < seeds.size(); ++i)
        out << "seed," << seeds[i] << "," << seed_means[i] << "," << seed_stds[i] << "\n";
    out << "pooled,," << pooled_mean << "," << pooled_std << "\n";
    if (has_normalization) {
        out << "s_random,," << s_random << ",\n";
        out << "s_expert,," << s_expert << ",\n";
        out << "normalized,," << normalized << ",\n";
    }
    return out.str();
}

namespace {

std::string fmt(double x, int prec) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(prec) << x;
    return out.str();
}

std::string step_color(double frac) {
    // blue -> red
    const int r = static_cast<int>(std::lround(31 + frac * (214 - 31)));
    const int g = static_cast<int>(std::lround(119 + frac * (39 - 119)));
    const int b = static_cast<int>(std::lround(180 + frac * (40 - 180)));
    std::ostringstream out;
    out << "rgb(" << r << "," << g << "," << b << ")";
    return out.str();
}

}  // namespace

VizResult pca_policy_viz(const data::Dataset& dataset, const policy::TrainLog& log,
                         long max_points) {
    dataset.validate();
    if (max_points < 2) throw ConfigError("pca_policy_viz: max_points must be >= 2");

    const int sd = dataset.meta.state_dim;
    const int ad = dataset.meta.joint_action_dim();
    const int dim = sd + ad;
    const long total = dataset.meta.n_transitions;
    const long stride = std::max<long>(1, (total + max_points - 1) / max_points);
    std::vector<long> cols;
    for (long c = 0; c < total; c += stride) cols.push_back(c);
    const long m = static_cast<long>(cols.size());

    Matrix X(dim, m);
    for (long j = 0; j < m; ++j) {
        X.col(j).head(sd) = dataset.states.col(cols[static_cast<size_t>(j)]);
        X.col(j).tail(ad) = dataset.actions.col(cols[static_cast<size_t>(j)]);
    }

    VizResult result;

    const Vector mean = X.rowwise().mean();
    const Matrix centered = X.colwise() - mean;
    const Matrix cov = centered * centered.transpose() / std::max(1.0, double(m - 1));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);

    Matrix components(2, dim);
    const Vector evals = eig.eigenvalues();  // ascending
    const bool degenerate = dim < 2 || evals(dim - 2) <= 1e-12 * std::max(1.0, evals(dim - 1));
    if (degenerate) {
        result.warnings.push_back("degenerate covariance; using first two raw dimensions");
        components.setZero();
        components(0, 0) = 1.0;
        components(1, std::min(1, dim - 1)) = 1.0;
    } else {
        components.row(0) = eig.eigenvectors().col(dim - 1).transpose();
        components.row(1) = eig.eigenvectors().col(dim - 2).transpose();
        for (int r = 0; r < 2; ++r) {
            int arg = 0;
            components.row(r).cwiseAbs().maxCoeff(&arg);
            if (components(r, arg) < 0.0) components.row(r) = -components.row(r);
        }
    }

    result.dataset_proj = components * centered;

    // trajectory: logged probe actions paired with the first dataset state
    std::vector<Vector> traj;
    for (const policy::LogRecord& r : log.records) {
        if (r.agent != 0) continue;
        if (r.probe_action.size() != ad)
            throw ShapeError("pca_policy_viz: log action dim mismatch");
        Vector v(dim);
        v.head(sd) = dataset.states.col(0);
        v.tail(ad) = r.probe_action;
        traj.push_back(v - mean);
        result.policy_steps.push_back(r.step);
    }
    result.policy_proj.resize(2, static_cast<Eigen::Index>(traj.size()));
    for (size_t j = 0; j < traj.size(); ++j)
        result.policy_proj.col(static_cast<Eigen::Index>(j)) = components * traj[j];

    // csv
    {
        std::ostringstream csv;
        csv << std::setprecision(9);
        csv << "kind,step,x,y\n";
        for (long j = 0; j < m; ++j)
            csv << "dataset,0," << result.dataset_proj(0, j) << "," << result.dataset_proj(1, j)
                << "\n";
        for (Eigen::Index j = 0; j < result.policy_proj.cols(); ++j)
            csv << "policy," << result.policy_steps[static_cast<size_t>(j)] << ","
                << result.policy_proj(0, j) << "," << result.policy_proj(1, j) << "\n";
        result.csv = csv.str();
    }

    // svg
    {
        double lo_x = result.dataset_proj.row(0).minCoeff();
        double hi_x = result.dataset_proj.row(0).maxCoeff();
        double lo_y = result.dataset_proj.row(1).minCoeff();
        double hi_y = result.dataset_proj.row(1).maxCoeff();
        if (result.policy_proj.cols() > 0) {
            lo_x = std::min(lo_x, result.policy_proj.row(0).minCoeff());
            hi_x = std::max(hi_x, result.policy_proj.row(0).maxCoeff());
            lo_y = std::min(lo_y, result.policy_proj.row(1).minCoeff());
            hi_y = std::max(hi_y, result.policy_proj.row(1).maxCoeff());
        }
        if (hi_x - lo_x < 1e-12) { lo_x -= 1.0; hi_x += 1.0; }
        if (hi_y - lo_y < 1e-12) { lo_y -= 1.0; hi_y += 1.0; }
        const double pad_x = 0.05 * (hi_x - lo_x);
        const double pad_y = 0.05 * (hi_y - lo_y);
        lo_x -= pad_x; hi_x += pad_x;
        lo_y -= pad_y; hi_y += pad_y;

        const double size = 640.0, margin = 40.0;
        const auto px = [&](double x) {
            return margin + (x - lo_x) / (hi_x - lo_x) * (size - 2 * margin);
        };
        const auto py = [&](double y) {
            return size - margin - (y - lo_y) / (hi_y - lo_y) * (size - 2 * margin);
        };

        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
               "viewBox=\"0 0 640 640\">\n";
        svg << "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
        for (long j = 0; j < m; ++j)
            svg << "<circle cx=\"" << fmt(px(result.dataset_proj(0, j)), 2) << "\" cy=\""
                << fmt(py(result.dataset_proj(1, j)), 2)
                << "\" r=\"2\" fill=\"#bbbbbb\" fill-opacity=\"0.6\"/>\n";
        const Eigen::Index k = result.policy_proj.cols();
        if (k > 1) {
            svg << "<polyline fill=\"none\" stroke=\"#555555\" stroke-width=\"1\" points=\"";
            for (Eigen::Index j = 0; j < k; ++j) {
                if (j) svg << " ";
                svg << fmt(px(result.policy_proj(0, j)), 2) << ","
                    << fmt(py(result.policy_proj(1, j)), 2);
            }
            svg << "\"/>\n";
        }
        for (Eigen::Index j = 0; j < k; ++j) {
            const double frac = (k > 1) ? double(j) / double(k - 1) : 1.0;
            svg << "<circle cx=\"" << fmt(px(result.policy_proj(0, j)), 2) << "\" cy=\""
                << fmt(py(result.policy_proj(1, j)), 2) << "\" r=\"4\" fill=\""
                << step_color(frac) << "\"/>\n";
        }
        svg << "</svg>\n";
        result.svg = svg.str();
    }
    return result;
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> points) {
    const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const auto& a, const auto& b) { return a == b; }),
                 points.end());
    const size_t n = points.size();
    if (n < 3) return points;
    std::vector<Eigen::Vector2d> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool point_in_hull(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& hull) {
    if (hull.size() < 3) return false;
    for (size_t i = 0; i < hull.size(); ++i) {
        const Eigen::Vector2d& a = hull[i];
        const Eigen::Vector2d& b = hull[(i + 1) % hull.size()];
        const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
        if (cross < -1e-12) return false;
    }
    return true;
}

}  // namespace omsd::analysis
