#include "test_util.hpp"
#include "tprec/checkpoint.hpp"
#include "tprec/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace tprec;
using namespace testutil;

namespace {

std::vector<Vector> random_seq(std::size_t steps, std::size_t l, std::mt19937_64& rng) {
    std::vector<Vector> out;
    for (std::size_t t = 0; t < steps; ++t) out.push_back(random_vector(l, rng));
    return out;
}

// Central differences of the window loss over every flattened parameter.
template <class LossFn, class Model>
Vector fd_gradient(Model model, LossFn loss, double step = 1e-6) {
    Vector w = flatten_params(model);
    Vector g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + step;
        unflatten_params(model, w);
        const double up = loss(model);
        w[i] = saved - step;
        unflatten_params(model, w);
        const double down = loss(model);
        w[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

void expect_close_gradients(const Vector& analytic, const Vector& fd, double tol = 1e-4) {
    ASSERT_EQ(analytic.size(), fd.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(analytic[i], fd[i], 1e-5));
    EXPECT_LT(worst, tol);
}

struct GradCase {
    const char* name;
    ModelSpec spec;
    LossKind loss;
    bool nonzero_memory;
};

std::string case_name(const ::testing::TestParamInfo<GradCase>& info) { return info.param.name; }

ModelSpec small_spec(CellKind cell, DegreeMode mode, std::size_t l, std::size_t m, std::size_t rank,
                     std::size_t history = 1) {
    ModelSpec s;
    s.cell = cell;
    s.input_dim = l;
    s.hidden_dim = m;
    s.rank = rank;
    s.history = history;
    s.degree_mode = mode;
    s.degree_init = 1.5;
    return s;
}

SeriesDataset constant_dataset(double value, std::size_t length) {
    return split_and_normalize(column(Vector(length, value)), {}, NormMethod::None);
}

}  // namespace

// --- BPTT -------------------------------------------------------------------

TEST(Bptt, ZeroModelHasZeroGradients) {
    auto spec = small_spec(CellKind::TPRnn, DegreeMode::Fixed, 2, 3, 2);
    spec.degree_init = 1.0;
    auto model = make_forecast_model(spec, 0);
    model.core = zeros_like(model.core);
    model.core.degree.value = 1.0;
    model.w_out = Matrix(2, 3);
    const std::vector<Vector> zeros(4, Vector(2, 0.0));
    const auto wg = bptt_gradients(model, zeros, zeros, LossKind::MSE, initial_state(model.core));
    EXPECT_EQ(wg.loss, 0.0);
    for (double g : flatten_params(wg.grad)) EXPECT_EQ(g, 0.0);
}

TEST(Bptt, ScalarHandDerivation) {
    auto spec = small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 1, 1);
    spec.degree_init = 2.0;
    auto model = make_forecast_model(spec, 0);
    auto& cell = std::get<TPCellParams>(model.core.cell);
    const double a = 0.8, c = -1.3, b = 0.2, v = 0.6, d = -0.1;
    cell.w_hh[0](0, 0) = a;
    cell.w_hx[0](0, 0) = c;
    cell.b[0] = b;
    model.w_out(0, 0) = v;
    model.b_out[0] = d;
    const double x1 = 0.5, x2 = -0.7, t1 = 0.3, t2 = 0.9;

    const double u1 = c * x1, h1 = -u1 * u1 + b;  // u1 < 0
    const double u2 = a * h1 + c * x2, h2 = u2 * u2 + b;  // u2 > 0
    ASSERT_LT(u1, 0.0);
    ASSERT_GT(u2, 0.0);
    const double r1 = v * h1 + d - t1, r2 = v * h2 + d - t2;
    // MSE over two entries: dL/dy_t = r_t.
    const double gh2 = r2 * v;
    const double gu2 = gh2 * 2.0 * std::abs(u2);
    const double gh1 = r1 * v + gu2 * a;
    const double gu1 = gh1 * 2.0 * std::abs(u1);

    const std::vector<Vector> xs{{x1}, {x2}}, ts{{t1}, {t2}};
    const auto wg = bptt_gradients(model, xs, ts, LossKind::MSE, initial_state(model.core));
    const auto& g = std::get<TPCellParams>(wg.grad.core.cell);
    EXPECT_NEAR(wg.loss, (r1 * r1 + r2 * r2) / 2.0, 1e-14);
    EXPECT_NEAR(g.w_hh[0](0, 0), gu2 * h1, 1e-10);
    EXPECT_NEAR(g.w_hx[0](0, 0), gu2 * x2 + gu1 * x1, 1e-10);
    EXPECT_NEAR(g.b[0], gh2 + gh1, 1e-10);
    EXPECT_NEAR(wg.grad.w_out(0, 0), r1 * h1 + r2 * h2, 1e-10);
    EXPECT_NEAR(wg.grad.b_out[0], r1 + r2, 1e-10);
}

class BpttFiniteDifference : public ::testing::TestWithParam<GradCase> {};

TEST_P(BpttFiniteDifference, MatchesCentralDifferences) {
    const auto& tc = GetParam();
    auto model = make_forecast_model(tc.spec, 11);
    if (model.core.degree.subnet) {
        std::mt19937_64 rng(12);
        for (double& w : model.core.degree.subnet->w2.data) w = random_vector(1, rng, 0.2)[0];
    }
    ASSERT_LE(param_count(model), 100u);
    std::mt19937_64 rng(7);
    const auto xs = random_seq(5, tc.spec.input_dim, rng), ts = random_seq(5, tc.spec.input_dim, rng);
    RunState start = initial_state(model.core);
    if (tc.nonzero_memory) {
        start.cell.c = random_vector(tc.spec.hidden_dim, rng);
        for (auto& h : start.cell.h_history) h = random_vector(tc.spec.hidden_dim, rng);
    }
    const auto wg = bptt_gradients(model, xs, ts, tc.loss, start);
    const Vector fd =
        fd_gradient(model, [&](const ForecastModel& m) { return window_loss(m, xs, ts, tc.loss, start); });
    expect_close_gradients(flatten_params(wg.grad), fd);
}

INSTANTIATE_TEST_SUITE_P(
    Models, BpttFiniteDifference,
    ::testing::Values(
        GradCase{"RnnSubNet", small_spec(CellKind::TPRnn, DegreeMode::SubNet, 2, 3, 2), LossKind::MSE, false},
        GradCase{"RnnTrainableHistory", small_spec(CellKind::TPRnn, DegreeMode::TrainableScalar, 1, 2, 2, 3),
                 LossKind::SSE, true},
        GradCase{"LstmMinimalTrainable", small_spec(CellKind::TPLstm, DegreeMode::TrainableScalar, 1, 2, 1), LossKind::MSE,
                 true},
        GradCase{"LstmStandardSubNet",
                 [] {
                     auto s = small_spec(CellKind::TPLstm, DegreeMode::SubNet, 1, 2, 1);
                     s.gating = LstmGating::Standard;
                     return s;
                 }(),
                 LossKind::SSE, false},
        GradCase{"ExactQuadratic",
                 [] {
                     auto s = small_spec(CellKind::ExactTP, DegreeMode::Fixed, 1, 2, 2);
                     s.degree_init = 2.0;
                     return s;
                 }(),
                 LossKind::MSE, true}),
    case_name);

TEST(Bptt, NonFiniteGradientNamesParameter) {
    auto model = make_forecast_model(small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 2, 1), 3);
    model.core.degree.value = 1.0;
    for (double& w : model.w_out.data) w = 1e300;
    const std::vector<Vector> xs{{0.5}, {0.4}}, ts{{0.0}, {0.0}};
    try {
        (void)bptt_gradients(model, xs, ts, LossKind::SSE, initial_state(model.core));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("parameter 'cell."), std::string::npos) << e.what();
    }
}

TEST(Bptt, CheckFiniteGradientsReportsBlock) {
    auto model = make_forecast_model(small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 2, 1), 3);
    model.b_out[0] = std::nan("");
    try {
        check_finite_gradients(model);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("readout.b"), std::string::npos);
    }
}

// --- optimizers -------------------------------------------------------------

TEST(Adam, FirstStepMagnitude) {
    Vector w{0.0};
    auto st = OptimizerState::fresh(OptimizerKind::Adam, 1);
    optimizer_step(w, Vector{1.0}, st, 0.01);
    EXPECT_NEAR(-w[0], 0.01 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(-w[0], 0.0099999999, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
    Vector w{1.5, -2.0};
    auto st = OptimizerState::fresh(OptimizerKind::Adam, 2);
    optimizer_step(w, Vector{0.0, 0.0}, st, 0.1);
    EXPECT_EQ(w, (Vector{1.5, -2.0}));

    st.first = {0.4, -0.2};
    st.second = {0.3, 0.1};
    optimizer_step(w, Vector{0.0, 0.0}, st, 0.1);
    EXPECT_DOUBLE_EQ(st.first[0], 0.9 * 0.4);
    EXPECT_DOUBLE_EQ(st.first[1], 0.9 * -0.2);
    EXPECT_DOUBLE_EQ(st.second[0], 0.999 * 0.3);
    EXPECT_DOUBLE_EQ(st.second[1], 0.999 * 0.1);
}

TEST(Adam, ScalarQuadratic) {
    Vector w{1.0};
    auto st = OptimizerState::fresh(OptimizerKind::Adam, 1);
    double prev = 1.0;
    for (int i = 0; i < 100; ++i) {
        optimizer_step(w, Vector{2.0 * w[0]}, st, 0.01);
        EXPECT_LT(std::abs(w[0]), prev);
        prev = std::abs(w[0]);
    }
    EXPECT_LT(std::abs(w[0]), 0.5);
}

TEST(Rmsprop, ClosedFormSteps) {
    Vector w{0.0};
    auto st = OptimizerState::fresh(OptimizerKind::RMSprop, 1);
    optimizer_step(w, Vector{2.0}, st, 0.01);
    const double v1 = 0.1 * 4.0;
    EXPECT_NEAR(w[0], -0.01 * 2.0 / (std::sqrt(v1) + 1e-8), 1e-15);
    optimizer_step(w, Vector{-1.0}, st, 0.01);
    const double v2 = 0.9 * v1 + 0.1;
    EXPECT_NEAR(w[0], -0.01 * 2.0 / (std::sqrt(v1) + 1e-8) + 0.01 / (std::sqrt(v2) + 1e-8), 1e-15);
}

TEST(Optimizer, SizeMismatch) {
    Vector w{0.0, 1.0};
    auto st = OptimizerState::fresh(OptimizerKind::Adam, 2);
    EXPECT_THROW(optimizer_step(w, Vector{1.0}, st, 0.01), ShapeError);
}

TEST(Clipping, PostClipNormBounded) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        Vector g = random_vector(1 + trial % 17, rng, 10.0);
        const double before = norm2(g);
        const double limit = 0.5 + trial % 5;
        const bool clipped = clip_global_norm(g, limit);
        EXPECT_EQ(clipped, before > limit);
        if (clipped) EXPECT_LE(norm2(g), limit + 1e-12);
        else EXPECT_EQ(norm2(g), before);
    }
}

TEST(Descent, SmallStepDoesNotIncreaseLoss) {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const CellKind kinds[] = {CellKind::TPRnn, CellKind::TPLstm};
        const DegreeMode modes[] = {DegreeMode::Fixed, DegreeMode::TrainableScalar, DegreeMode::SubNet};
        auto spec = small_spec(kinds[seed % 2], modes[seed % 3], 1, 3, 2);
        spec.gating = LstmGating::Standard;
        auto model = make_forecast_model(spec, seed);
        const auto xs = random_seq(8, 1, rng), ts = random_seq(8, 1, rng);
        const RunState start = initial_state(model.core);
        const auto wg = bptt_gradients(model, xs, ts, LossKind::MSE, start);
        TrainConfig cfg;
        cfg.learning_rate = 1e-5;
        cfg.grad_clip_norm.reset();
        auto opt = OptimizerState::fresh(OptimizerKind::Adam, param_count(model));
        detail::apply_update(model, wg.grad, opt, cfg);
        const double after = window_loss(model, xs, ts, LossKind::MSE, start);
        EXPECT_LE(after, wg.loss) << "seed " << seed;
        ++checked;
    }
    EXPECT_EQ(checked, 50);
}

// --- training loop ----------------------------------------------------------

TEST(Training, ConstantSeriesIsLearned) {
    const auto ds = constant_dataset(0.7, 200);
    ModelSpec spec;
    spec.hidden_dim = 4;
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 1;
    const auto res = train_single_cell(ds, spec, cfg);
    ASSERT_FALSE(res.diverged) << res.divergence_report;
    ASSERT_EQ(res.log.size(), 200u);
    const double best_loss =
        std::min_element(res.log.begin(), res.log.end(), [](auto& a, auto& b) { return a.train_loss < b.train_loss; })
            ->train_loss;
    EXPECT_LT(best_loss, 1e-4);
    EXPECT_LT(res.best_val_rmse, 1e-2);
}

TEST(Training, MetricsReproducible) {
    const auto ds = gen_arfima({.d = 0.3, .length = 300, .truncation = 200, .seed = 4});
    ModelSpec spec;
    spec.hidden_dim = 3;
    spec.degree_mode = DegreeMode::TrainableScalar;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 2;
    const auto a = train_single_cell(ds, spec, cfg);
    const auto b = train_single_cell(ds, spec, cfg);
    EXPECT_EQ(metrics_jsonl(a.log), metrics_jsonl(b.log));
    EXPECT_EQ(serialize_checkpoint(a.best), serialize_checkpoint(b.best));
}

TEST(Training, DegreeStaysWithinBounds) {
    const auto ds = gen_arfima({.d = 0.4, .length = 400, .truncation = 200, .seed = 8});
    ModelSpec spec;
    spec.hidden_dim = 4;
    spec.degree_mode = DegreeMode::TrainableScalar;
    spec.degree_min = 0.9;
    spec.degree_max = 1.1;
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.05;
    std::vector<double> ps;
    const auto res = train_single_cell(ds, spec, cfg, [&](const EpochMetrics& m) { ps.push_back(m.p_value); });
    for (double p : ps) {
        EXPECT_GE(p, 0.9);
        EXPECT_LE(p, 1.1);
    }
    const auto& best = std::get<ForecastModel>(res.best.model);
    EXPECT_GE(best.core.degree.value, 0.9);
    EXPECT_LE(best.core.degree.value, 1.1);
}

TEST(Training, ChannelMismatchRejected) {
    const auto ds = constant_dataset(1.0, 50);
    ModelSpec spec;
    spec.input_dim = 2;
    EXPECT_THROW(train_single_cell(ds, spec, TrainConfig{}), ShapeError);
}

// --- forecasting ------------------------------------------------------------

TEST(RollingForecast, PerfectModelOnOwnSequence) {
    auto spec = small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 3, 2);
    auto model = make_forecast_model(spec, 5);
    Matrix values(60, 1);
    values(0, 0) = 0.4;
    RunState st = initial_state(model.core);
    for (std::size_t t = 1; t < values.rows; ++t) {
        const Vector& h = core_step(model.core, model.core.degree, values.row(t - 1), st);
        values(t, 0) = readout(model.w_out, model.b_out, h)[0];
    }
    const auto res = rolling_forecast(model, NormStats::identity(1), values, 10, 60);
    EXPECT_LE(res.rmse, 1e-10);
    EXPECT_EQ(res.predictions.size(), 50u);
}

TEST(RollingForecast, LastValuePredictorOnRandomWalk) {
    auto spec = small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 1, 1);
    spec.degree_init = 1.0;
    auto model = make_forecast_model(spec, 0);
    auto& cell = std::get<TPCellParams>(model.core.cell);
    cell.w_hh[0](0, 0) = 0.0;
    cell.w_hx[0](0, 0) = 1.0;
    cell.b[0] = 0.0;
    model.w_out(0, 0) = 1.0;
    model.b_out[0] = 0.0;

    const std::size_t n = 100000;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> inc(0.0, 0.5);
    Matrix walk(n, 1);
    for (std::size_t t = 1; t < n; ++t) walk(t, 0) = walk(t - 1, 0) + inc(rng);
    const auto res = rolling_forecast(model, NormStats::identity(1), walk, 1, n);
    // Standard error of the RMSE is about sigma / sqrt(2n).
    EXPECT_NEAR(res.rmse, 0.5, 4.0 * 0.5 / std::sqrt(2.0 * n));
}

TEST(RollingForecast, ReportsOriginalUnits) {
    auto model = make_forecast_model(small_spec(CellKind::TPRnn, DegreeMode::Fixed, 1, 2, 1), 1);
    Matrix values(20, 1);
    for (std::size_t t = 0; t < 20; ++t) values(t, 0) = std::sin(0.3 * static_cast<double>(t));
    const NormStats stats{{5.0}, {3.0}};
    const auto base = rolling_forecast(model, NormStats::identity(1), values, 5, 20);
    const auto scaled = rolling_forecast(model, stats, values, 5, 20);
    EXPECT_NEAR(scaled.rmse, 3.0 * base.rmse, 1e-12);
    EXPECT_NEAR(scaled.predictions[0][0], 3.0 * base.predictions[0][0] + 5.0, 1e-12);
}

// --- seq2seq ----------------------------------------------------------------

TEST(Seq2Seq, HorizonOneMatchesRollingForecast) {
    auto spec = small_spec(CellKind::TPLstm, DegreeMode::SubNet, 1, 3, 2);
    spec.gating = LstmGating::Standard;
    auto s2s = make_seq2seq_model(spec, 4);
    s2s.decoder = s2s.encoder;
    ForecastModel single{spec, s2s.encoder, s2s.w_out, s2s.b_out};

    std::mt19937_64 rng(6);
    Matrix values(12, 1);
    for (double& v : values.data) v = random_vector(1, rng)[0];
    const auto prefix = matrix_rows(values, 0, 11);
    const auto pred = seq2seq_forward(s2s, prefix, 1);
    const auto roll = rolling_forecast(single, NormStats::identity(1), values, 11, 12);
    ASSERT_EQ(pred.size(), 1u);
    EXPECT_EQ(pred[0][0], roll.predictions[0][0]);
}

TEST(Seq2Seq, GradientsMatchFiniteDifferences) {
    for (bool shared : {true, false}) {
        auto spec = small_spec(CellKind::TPLstm, DegreeMode::TrainableScalar, 1, 2, 1);
        spec.gating = LstmGating::Standard;
        auto model = make_seq2seq_model(spec, 9, shared);
        model.decoder.degree.value = 1.3;
        std::mt19937_64 rng(10);
        const auto prefix = random_seq(4, 1, rng), targets = random_seq(3, 1, rng);
        const auto g = seq2seq_gradients(model, prefix, targets, LossKind::SSE);
        const Vector fd = fd_gradient(model, [&](const Seq2SeqModel& m) {
            const auto pred = seq2seq_forward(m, prefix, targets.size());
            double sse = 0.0;
            for (std::size_t k = 0; k < pred.size(); ++k) sse += (pred[k][0] - targets[k][0]) * (pred[k][0] - targets[k][0]);
            return sse;
        });
        expect_close_gradients(flatten_params(g.grad), fd);
    }
}

TEST(Seq2Seq, TrainingDeterministic) {
    GenzSpec genz;
    genz.c = 20.0;
    genz.grid = uniform_grid(0.0, 1.0, 150);
    const auto ds = gen_genz(genz);
    auto spec = small_spec(CellKind::TPLstm, DegreeMode::SubNet, 1, 3, 1);
    spec.gating = LstmGating::Standard;
    spec.degree_init = 1.0;
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.prefix_length = 6;
    cfg.horizon = 3;
    cfg.loss = LossKind::SSE;
    cfg.optimizer = OptimizerKind::RMSprop;
    const auto a = seq2seq_train_and_forecast(ds, spec, cfg);
    const auto b = seq2seq_train_and_forecast(ds, spec, cfg);
    EXPECT_EQ(a.test_predictions, b.test_predictions);
    EXPECT_EQ(metrics_jsonl(a.log), metrics_jsonl(b.log));
}

// --- checkpoints ------------------------------------------------------------

class CheckpointRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(CheckpointRoundTrip, SaveLoadSaveIsByteIdentical) {
    ModelSpec spec;
    Checkpoint ck;
    switch (GetParam()) {
    case 0:
        spec = small_spec(CellKind::TPRnn, DegreeMode::SubNet, 2, 3, 2, 2);
        ck.model = make_forecast_model(spec, 1);
        break;
    case 1:
        spec = small_spec(CellKind::TPLstm, DegreeMode::TrainableScalar, 1, 2, 1);
        ck.model = make_seq2seq_model(spec, 2, false);
        break;
    default:
        spec = small_spec(CellKind::ExactTP, DegreeMode::Fixed, 1, 2, 2);
        spec.degree_init = 3.0;
        ck.model = make_forecast_model(spec, 3);
        break;
    }
    ck.config.grad_clip_norm.reset();
    ck.config.learning_rate = 0.1 / 3.0;
    ck.config.precision = Precision::F32;
    ck.optimizer = OptimizerState::fresh(OptimizerKind::Adam, 4);
    ck.optimizer.first = {1e-300, -0.1, 1.0 / 3.0, 5e-324};
    ck.optimizer.step = 7;
    ck.epoch = 12;
    ck.norm_stats = {{0.1, std::numbers::pi}, {2.0 / 3.0, 1e10}};
    ck.config_hash = config_hash(spec, ck.config);

    const auto dir = std::filesystem::temp_directory_path() / ("tprec_ckpt_" + std::to_string(GetParam()));
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "a.json", ck);
    const Checkpoint loaded = load_checkpoint(dir / "a.json");
    EXPECT_EQ(loaded, ck);
    save_checkpoint(dir / "b.json", loaded);
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
    EXPECT_FALSE(std::filesystem::exists(dir / "a.json.tmp"));
    std::filesystem::remove_all(dir);
}

INSTANTIATE_TEST_SUITE_P(Models, CheckpointRoundTrip, ::testing::Values(0, 1, 2));

TEST(Checkpoint, UnknownKeysRejected) {
    Checkpoint ck;
    ck.model = make_forecast_model(ModelSpec{}, 0);
    json j = json::parse(serialize_checkpoint(ck));
    j["surprise"] = 1;
    EXPECT_ANY_THROW(parse_checkpoint(j.dump()));
    j.erase("surprise");
    j["config"]["learning_rte"] = 0.1;
    EXPECT_ANY_THROW(parse_checkpoint(j.dump()));
}

TEST(Checkpoint, ConfigHashTracksSettings) {
    ModelSpec spec;
    TrainConfig cfg;
    const auto h = config_hash(spec, cfg);
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(h, config_hash(spec, cfg));
    cfg.learning_rate = 0.02;
    EXPECT_NE(h, config_hash(spec, cfg));
}
