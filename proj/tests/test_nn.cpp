#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "omsd/nn.hpp"

using namespace omsd;
using namespace omsd::nn;

namespace {

MlpSpec make_spec(int in, std::vector<int> hidden, int out,
                  OutputActivation oa = OutputActivation::None) {
    MlpSpec s;
    s.input_dim = in;
    s.hidden_dims = std::move(hidden);
    s.output_dim = out;
    s.output_activation = oa;
    return s;
}

// Scalar objective sum_b upstream(:,b) . f(x)(:,b) used for finite differencing.
double objective(const MlpParams& p, const Matrix& x, const Matrix& upstream) {
    return (mlp_forward(p, x).cwiseProduct(upstream)).sum();
}

struct FdStats {
    double worst_rel = 0.0;
    long n_checked = 0;
};

void fd_check_coord(double* coord, const MlpParams& p, const Matrix& x, const Matrix& upstream,
                    double analytic, FdStats& stats) {
    const double h = 1e-5;
    const double saved = *coord;
    *coord = saved + h;
    const double up = objective(p, x, upstream);
    *coord = saved - h;
    const double down = objective(p, x, upstream);
    *coord = saved;
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-4});
    stats.worst_rel = std::max(stats.worst_rel, rel);
    ++stats.n_checked;
}

// Central finite differences over every weight, bias, and input coordinate.
FdStats fd_check_case(MlpParams& p, Matrix& x, const Matrix& upstream) {
    ForwardCache cache;
    mlp_forward(p, x, &cache);
    const MlpGrads g = mlp_backward(p, cache, upstream);

    FdStats stats;
    for (size_t l = 0; l < p.weights.size(); ++l) {
        for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
            for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
                fd_check_coord(&p.weights[l](i, j), p, x, upstream, g.weights[l](i, j), stats);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
            fd_check_coord(&p.biases[l](i), p, x, upstream, g.biases[l](i), stats);
    }
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            fd_check_coord(&x(i, j), p, x, upstream, g.input(i, j), stats);
    return stats;
}

// Finite differencing is only valid away from relu kinks: a perturbation of
// size h must not flip the sign of any hidden pre-activation.
bool away_from_kinks(const MlpParams& p, const Matrix& x, double margin) {
    Matrix h = x;
    for (size_t l = 0; l + 1 < p.weights.size(); ++l) {
        const Matrix z = (p.weights[l] * h).colwise() + p.biases[l];
        if (z.cwiseAbs().minCoeff() < margin) return false;
        h = z.cwiseMax(0.0);
    }
    return true;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, scale);
    return m;
}

}  // namespace

TEST_CASE("spec validation and layer shapes") {
    MlpSpec s = make_spec(4, {8, 5}, 3);
    const auto shapes = s.layer_shapes();
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == std::pair<int, int>(8, 4));
    CHECK(shapes[1] == std::pair<int, int>(5, 8));
    CHECK(shapes[2] == std::pair<int, int>(3, 5));

    // No hidden layers: a single linear map.
    const auto linear = make_spec(7, {}, 2).layer_shapes();
    REQUIRE(linear.size() == 1);
    CHECK(linear[0] == std::pair<int, int>(2, 7));

    CHECK_THROWS_AS(make_spec(0, {}, 1).validate(), ConfigError);
    CHECK_THROWS_AS(make_spec(1, {}, 0).validate(), ConfigError);
    CHECK_THROWS_AS(make_spec(1, {0}, 1).validate(), ConfigError);
}

TEST_CASE("zero parameters produce zero output") {
    const MlpParams p = MlpParams::zeros(make_spec(3, {4}, 2));
    CHECK(p.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
    const Matrix x = Matrix::Ones(3, 5);
    CHECK(mlp_forward(p, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single linear layer matches hand computation") {
    MlpParams p = MlpParams::zeros(make_spec(2, {}, 2));
    p.weights[0] << 1.0, 2.0, -3.0, 0.5;
    p.biases[0] << 0.25, -1.0;
    Matrix x(2, 2);
    x << 1.0, -1.0, 2.0, 0.5;
    const Matrix y = mlp_forward(p, x);
    // Row 0: 1*x0 + 2*x1 + 0.25; row 1: -3*x0 + 0.5*x1 - 1.
    CHECK(y(0, 0) == doctest::Approx(5.25).epsilon(1e-15));
    CHECK(y(1, 0) == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(y(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(y(1, 1) == doctest::Approx(2.25).epsilon(1e-15));
}

TEST_CASE("relu hidden layer and tanh output match hand computation") {
    MlpParams p = MlpParams::zeros(make_spec(1, {2}, 1, OutputActivation::Tanh));
    p.weights[0] << 1.0, -1.0;  // hidden pre-activations: x and -x
    p.weights[1] << 2.0, 3.0;
    // x = 0.5: hidden = (0.5, 0), output = tanh(1.0).
    Matrix x(1, 1);
    x << 0.5;
    CHECK(mlp_forward(p, x)(0, 0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
    // x = -0.5: hidden = (0, 0.5), output = tanh(1.5).
    x << -0.5;
    CHECK(mlp_forward(p, x)(0, 0) == doctest::Approx(std::tanh(1.5)).epsilon(1e-15));
}

TEST_CASE("forward rejects wrong input dimension") {
    const MlpParams p = MlpParams::zeros(make_spec(3, {}, 1));
    CHECK_THROWS_AS(mlp_forward(p, Matrix::Zero(4, 1)), ShapeError);
}

TEST_CASE("backward rejects mismatched upstream shape") {
    const MlpParams p = MlpParams::zeros(make_spec(3, {}, 2));
    ForwardCache cache;
    mlp_forward(p, Matrix::Zero(3, 4), &cache);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix::Zero(2, 5)), ShapeError);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix::Zero(3, 4)), ShapeError);
}

TEST_CASE("gradients match central finite differences") {
    const std::vector<MlpSpec> specs = {
        make_spec(3, {}, 2),
        make_spec(4, {8}, 3),
        make_spec(5, {16, 8}, 2),
        make_spec(2, {7}, 1, OutputActivation::Tanh),
        make_spec(3, {6, 6}, 2, OutputActivation::Tanh),
    };
    Rng rng(20240811);
    for (const MlpSpec& spec : specs) {
        FdStats total;
        for (int c = 0; c < 100; ++c) {
            MlpParams p = MlpParams::init(spec, rng);
            Matrix x = random_matrix(spec.input_dim, 1 + (c % 3), rng);
            while (!away_from_kinks(p, x, 1e-3)) x = random_matrix(spec.input_dim, x.cols(), rng);
            Matrix upstream = random_matrix(spec.output_dim, x.cols(), rng);
            const FdStats stats = fd_check_case(p, x, upstream);
            total.worst_rel = std::max(total.worst_rel, stats.worst_rel);
            total.n_checked += stats.n_checked;
        }
        INFO("spec input_dim=" << spec.input_dim << " coords=" << total.n_checked);
        CHECK(total.worst_rel <= 1e-4);
    }
}

TEST_CASE("backward weight gradient for a linear layer is delta times input") {
    MlpParams p = MlpParams::zeros(make_spec(2, {}, 1));
    p.weights[0] << 0.0, 0.0;
    Matrix x(2, 2);
    x << 1.0, 3.0, 2.0, -1.0;
    ForwardCache cache;
    mlp_forward(p, x, &cache);
    Matrix upstream(1, 2);
    upstream << 1.0, 0.5;
    const MlpGrads g = mlp_backward(p, cache, upstream);
    // dL/dW = sum_b upstream_b * x_b^T = [1*1 + 0.5*3, 1*2 + 0.5*(-1)].
    CHECK(g.weights[0](0, 0) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(g.weights[0](0, 1) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(g.biases[0](0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("grads accumulate and scale") {
    const MlpParams p = MlpParams::zeros(make_spec(2, {}, 1));
    MlpGrads a = MlpGrads::zeros(p);
    MlpGrads b = MlpGrads::zeros(p);
    a.weights[0] << 1.0, 2.0;
    b.weights[0] << 0.5, -1.0;
    a.accumulate(b);
    a.scale(2.0);
    CHECK(a.weights[0](0, 0) == 3.0);
    CHECK(a.weights[0](0, 1) == 2.0);
}

TEST_CASE("adam step matches a hand-computed update") {
    MlpParams p = MlpParams::zeros(make_spec(1, {}, 1));
    p.weights[0](0, 0) = 1.0;
    OptimizerConfig cfg;
    cfg.lr = 0.1;
    OptimizerState opt = OptimizerState::create(p, cfg);

    MlpGrads g = MlpGrads::zeros(p);
    g.weights[0](0, 0) = 2.0;
    optimizer_step(opt, p, g);

    // First step: m = (1-b1)g, v = (1-b2)g^2; bias correction makes
    // m_hat = g and v_hat = g^2, so the update is -lr * g / (|g| + eps).
    const double expect1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    CHECK(p.weights[0](0, 0) == doctest::Approx(expect1).epsilon(1e-14));
    CHECK(opt.step == 1);

    // Second step with the same gradient, reproduced arithmetically.
    g.weights[0](0, 0) = -1.0;
    const double m2 = 0.9 * (0.1 * 2.0) + 0.1 * (-1.0);
    const double v2 = 0.999 * (0.001 * 4.0) + 0.001 * 1.0;
    const double m_hat = m2 / (1.0 - 0.9 * 0.9);
    const double v_hat = v2 / (1.0 - 0.999 * 0.999);
    const double expect2 = expect1 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    optimizer_step(opt, p, g);
    CHECK(p.weights[0](0, 0) == doctest::Approx(expect2).epsilon(1e-14));
}

TEST_CASE("decoupled weight decay shrinks parameters before the adam update") {
    MlpParams p = MlpParams::zeros(make_spec(1, {}, 1));
    p.weights[0](0, 0) = 4.0;
    OptimizerConfig cfg;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.1;
    OptimizerState opt = OptimizerState::create(p, cfg);
    MlpGrads g = MlpGrads::zeros(p);
    g.weights[0](0, 0) = 1.0;
    optimizer_step(opt, p, g);
    // Decay first: 4 - 0.5*0.1*4 = 3.8; then the unit adam step of ~lr.
    const double expect = 3.8 - 0.5 * 1.0 / (1.0 + 1e-8);
    CHECK(p.weights[0](0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("non-finite gradients raise a divergence error") {
    MlpParams p = MlpParams::zeros(make_spec(1, {}, 1));
    OptimizerState opt = OptimizerState::create(p, OptimizerConfig{});
    MlpGrads g = MlpGrads::zeros(p);
    g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(optimizer_step(opt, p, g), DivergenceError);
    g.weights[0](0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(optimizer_step(opt, p, g), DivergenceError);
}

TEST_CASE("cosine anneal hits the half and end points exactly") {
    OptimizerConfig cfg;
    cfg.lr = 1e-3;
    cfg.anneal = Anneal::Cosine;
    cfg.total_steps = 1000;
    OptimizerState s;
    s.config = cfg;

    s.step = 0;
    CHECK(s.effective_lr() == doctest::Approx(1e-3).epsilon(1e-15));
    s.step = 500;
    CHECK(s.effective_lr() == doctest::Approx(0.5e-3).epsilon(1e-12));
    s.step = 1000;
    CHECK(s.effective_lr() == doctest::Approx(0.0).epsilon(1e-12));
    s.step = 5000;  // clamped past the horizon
    CHECK(s.effective_lr() == doctest::Approx(0.0).epsilon(1e-12));

    s.config.anneal = Anneal::Constant;
    s.step = 999;
    CHECK(s.effective_lr() == 1e-3);
}

TEST_CASE("soft update is an exact linear interpolation") {
    MlpParams target = MlpParams::zeros(make_spec(2, {}, 1));
    MlpParams online = MlpParams::zeros(make_spec(2, {}, 1));
    target.weights[0] << 1.0, -2.0;
    online.weights[0] << 3.0, 2.0;
    soft_update(target, online, 0.25);
    CHECK(target.weights[0](0, 0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(target.weights[0](0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
    soft_update(target, online, 1.0);  // full copy
    CHECK(target.weights[0](0, 0) == 3.0);

    CHECK_THROWS_AS(soft_update(target, online, -0.1), ConfigError);
    CHECK_THROWS_AS(soft_update(target, online, 1.1), ConfigError);
    MlpParams other = MlpParams::zeros(make_spec(3, {}, 1));
    CHECK_THROWS_AS(soft_update(target, other, 0.5), ShapeError);
}

TEST_CASE("parameter init is bounded by fan-in and reproducible") {
    const MlpSpec spec = make_spec(9, {16}, 4);
    Rng rng_a(7);
    Rng rng_b(7);
    const MlpParams a = MlpParams::init(spec, rng_a);
    const MlpParams b = MlpParams::init(spec, rng_b);
    for (size_t l = 0; l < a.weights.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(a.weights[l].cols()));
        CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
        CHECK(a.biases[l].cwiseAbs().maxCoeff() <= bound);
        CHECK((a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(a.all_finite());
}

TEST_CASE("time embedding features satisfy the sin-cos identity") {
    Rng rng(11);
    const TimeEmbedding te = TimeEmbedding::create(32, 64, rng);
    REQUIRE(te.frequencies.size() == 32);

    Vector t(3);
    t << 0.02, 0.5, 0.98;
    const Matrix feat = te.features(t);
    REQUIRE(feat.rows() == 64);
    REQUIRE(feat.cols() == 3);
    for (Eigen::Index b = 0; b < t.size(); ++b)
        for (int i = 0; i < 32; ++i) {
            const double s = feat(i, b), c = feat(32 + i, b);
            CHECK(s * s + c * c == doctest::Approx(1.0).epsilon(1e-12));
        }

    // The projection through the dense head agrees with applying it manually.
    const Matrix direct = mlp_forward(te.dense, feat);
    const Matrix via = te.forward(t);
    CHECK((direct - via).cwiseAbs().maxCoeff() == 0.0);

    // t = 0 maps every sine to 0 and every cosine to 1.
    Vector zero(1);
    zero << 0.0;
    const Matrix f0 = te.features(zero);
    CHECK(f0.topRows(32).cwiseAbs().maxCoeff() == 0.0);
    CHECK((f0.bottomRows(32).array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("rng streams are deterministic and children are independent") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng root(42);
    Rng c0 = root.child(0);
    Rng c1 = root.child(1);
    CHECK(c0.next_u64() != c1.next_u64());

    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(u.index(10) < 10);
    }
}
