// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "prognost/fixtures.hpp"
#include "prognost/pipeline.hpp"
#include "prognost/train.hpp"
#include "test_support.hpp"

using namespace prognost;

namespace {

TrainConfig small_config()
{
    TrainConfig cfg;
    cfg.hidden_dims = {4, 3};
    cfg.window = 5;
    return cfg;
}

/// 20 training windows of a noiseless sine with period 40, scaled to [0, 1].
SplitDataset sine_twenty()
{
    const auto p = prepare_dataset(make_fixture(FixtureKind::sine, 26), 5, 0.96);
    return p.split;
}

bool all_zero(const Gradients& g)
{
    bool zero = (g.head.array() == 0.0).all();
    for (const auto& l : g.layers) {
        for (const auto& b : l.blocks) zero = zero && (b.array() == 0.0).all();
    }
    return zero;
}

template <typename A, typename B>
bool same_bits(const A& a, const B& b)
{
    bool same = true;
    for_each_block(a, b, [&](const std::string&, const Matrix& x, const Matrix& y) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            same = same && std::bit_cast<std::uint64_t>(x.data()[i]) == std::bit_cast<std::uint64_t>(y.data()[i]);
        }
    });
    return same;
}

} // namespace

// ---------------------------------------------------------------------------

TEST(Loss, MsePerfectFit)
{
    const std::vector<double> v{1, 2};
    const auto r = compute_loss(v, v, LossMode::mse);
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(r.grad, (std::vector<double>{0, 0}));
}

TEST(Loss, MseSinglePoint)
{
    const std::vector<double> pred{0}, target{3};
    const auto r = compute_loss(pred, target, LossMode::mse);
    EXPECT_EQ(r.loss, 9.0);
    EXPECT_EQ(r.grad, (std::vector<double>{-6}));
}

TEST(Loss, BceSymmetricPoint)
{
    const std::vector<double> half{0.5};
    const auto r = compute_loss(half, half, LossMode::bce);
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(r.loss, 0.6931, 1e-4);
    EXPECT_EQ(r.grad[0], 0.0);
}

TEST(Loss, BceClipsTargetsAndPredictions)
{
    const std::vector<double> pred{0.0, 1.0}, target{0.0, 1.0};
    const auto r = compute_loss(pred, target, LossMode::bce);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_LT(r.loss, 1e-5);
}

TEST(Loss, LengthMismatch)
{
    const std::vector<double> a{1, 2}, b{1};
    EXPECT_ERROR_KIND(compute_loss(a, b, LossMode::mse), ErrorKind::dimension);
    EXPECT_ERROR_KIND(compute_loss(b, a, LossMode::bce), ErrorKind::dimension);
}

TEST(Loss, GradientMatchesDifferenceQuotient)
{
    std::mt19937_64 rng(31);
    const auto pred = oracle::uniform(rng, 7, -1.0, 1.0);
    const auto target = oracle::uniform(rng, 7, -1.0, 1.0);
    for (auto mode : {LossMode::mse, LossMode::bce}) {
        auto p = mode == LossMode::bce ? oracle::uniform(rng, 7, 0.1, 0.9) : pred;
        auto t = mode == LossMode::bce ? oracle::uniform(rng, 7, 0.1, 0.9) : target;
        const auto r = compute_loss(p, t, mode);
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto up = p, down = p;
            up[i] += 1e-6;
            down[i] -= 1e-6;
            const double fd = (compute_loss(up, t, mode).loss - compute_loss(down, t, mode).loss) / 2e-6;
            EXPECT_NEAR(r.grad[i], fd, 1e-8);
        }
    }
}

// ---------------------------------------------------------------------------

TEST(Bptt, ZeroUpstreamGivesZeroGradients)
{
    const auto m = init_params(small_config(), 3);
    const std::vector<double> w{0.1, 0.5, 0.2, 0.8, 0.3};
    auto g = Gradients::zeros_like(m);
    bptt_backward(m, forward_window(m, w).cache, 0.0, g);
    EXPECT_TRUE(all_zero(g));
}

TEST(Bptt, ZeroParamsGiveZeroGradients)
{
    const auto m = zero_params(ModelShape{1, {4, 3}, LossMode::mse});
    const std::vector<double> w{0.1, 0.5, 0.2, 0.8, 0.3};
    auto g = Gradients::zeros_like(m);
    bptt_backward(m, forward_window(m, w).cache, 1.7, g);
    EXPECT_TRUE(all_zero(g));
}

TEST(Bptt, MismatchedCacheIsContractError)
{
    const auto m = init_params(small_config(), 3);
    auto other = small_config();
    other.hidden_dims = {4};
    const auto m2 = init_params(other, 3);
    const std::vector<double> w{0.1, 0.5};
    auto g = Gradients::zeros_like(m);
    EXPECT_ERROR_KIND(bptt_backward(m, forward_window(m2, w).cache, 1.0, g), ErrorKind::contract);
    EXPECT_ERROR_KIND(bptt_backward(m, ForwardCache{}, 1.0, g), ErrorKind::contract);
}

TEST(GradCheck, SmallNetworkBothModes)
{
    auto cfg = small_config();
    for (auto mode : {LossMode::mse, LossMode::bce}) {
        cfg.loss_mode = mode;
        const auto report = grad_check(cfg, 7, 1e-6);
        EXPECT_EQ(report.blocks.size(), 2u * 12u + 1u);
        EXPECT_LT(report.max_rel_error(), 1e-5) << to_string(mode);
    }
}

TEST(GradCheck, RandomSeedsBothModes)
{
    auto cfg = small_config();
    for (auto mode : {LossMode::mse, LossMode::bce}) {
        cfg.loss_mode = mode;
        for (std::uint64_t seed = 100; seed < 110; ++seed) {
            EXPECT_LT(grad_check(cfg, seed, 1e-6).max_rel_error(), 1e-5)
                << to_string(mode) << " seed " << seed;
        }
    }
}

TEST(GradCheck, ZeroGradientPointHasZeroError)
{
    const auto m = zero_params(ModelShape{1, {3, 2}, LossMode::mse});
    const std::vector<std::vector<double>> windows{{0.2, 0.4, 0.6}};
    const std::vector<double> targets{0.7};
    const auto report = grad_check(m, windows, targets, 1e-6);
    EXPECT_EQ(report.max_rel_error(), 0.0);
}

TEST(GradCheck, NonPositiveStepRejected)
{
    EXPECT_ERROR_KIND(grad_check(small_config(), 7, 0.0), ErrorKind::config);
    EXPECT_ERROR_KIND(grad_check(small_config(), 7, -1e-6), ErrorKind::config);
}

TEST(BatchGradient, IndependentOfWorkerCount)
{
    const auto m = init_params(small_config(), 11);
    std::mt19937_64 rng(12);
    std::vector<std::vector<double>> windows;
    std::vector<double> targets;
    for (int i = 0; i < 23; ++i) {
        windows.push_back(oracle::uniform(rng, 5, 0.0, 1.0));
        targets.push_back(oracle::uniform(rng, 1, 0.0, 1.0)[0]);
    }
    const auto a = batch_gradient(m, windows, targets, 1);
    for (std::size_t workers : {2u, 3u, 8u}) {
        const auto b = batch_gradient(m, windows, targets, workers);
        EXPECT_TRUE(same_bits(a.grads, b.grads)) << workers;
        EXPECT_EQ(a.loss, b.loss);
    }
}

// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientsLeaveParametersUnchanged)
{
    const auto m0 = init_params(small_config(), 5);
    auto m = m0;
    auto s = AdamState::zeros_like(m);
    const auto g = Gradients::zeros_like(m);
    for (int i = 0; i < 3; ++i) adam_step(m, g, s, TrainConfig{});
    EXPECT_TRUE(same_bits(m, m0));
    EXPECT_TRUE(all_zero(s.m));
    EXPECT_TRUE(all_zero(s.v));
    EXPECT_EQ(s.t, 3u);
}

TEST(Adam, FirstStepFromZeroWithUnitGradient)
{
    auto m = zero_params(ModelShape{1, {1}, LossMode::mse});
    auto g = Gradients::zeros_like(m);
    for_each_block(g, g, [](const std::string&, Matrix& b, Matrix&) { b.setOnes(); });
    auto s = AdamState::zeros_like(m);
    const TrainConfig cfg;
    adam_step(m, g, s, cfg);
    const double expected = -cfg.learning_rate / (1.0 + cfg.epsilon);
    for_each_block(m, m, [&](const std::string& name, const Matrix& b, const Matrix&) {
        EXPECT_NEAR(b(0, 0), expected, 1e-18) << name;
        EXPECT_NEAR(b(0, 0), -0.001, 1e-10) << name;
    });
    EXPECT_EQ(s.t, 1u);
}

TEST(Adam, OddSymmetry)
{
    std::mt19937_64 rng(41);
    std::normal_distribution<double> d(0.0, 1.0);
    const auto zero = zero_params(ModelShape{1, {4, 3}, LossMode::mse});
    auto g = Gradients::zeros_like(zero);
    for_each_block(g, g, [&](const std::string&, Matrix& b, Matrix&) { b = b.unaryExpr([&](double) { return d(rng); }); });
    auto neg = g;
    neg *= -1.0;
    auto a = zero, b = zero;
    auto sa = AdamState::zeros_like(zero), sb = AdamState::zeros_like(zero);
    for (int step = 0; step < 3; ++step) {
        adam_step(a, g, sa, TrainConfig{});
        adam_step(b, neg, sb, TrainConfig{});
    }
    auto b_neg = b;
    for_each_block(b_neg, b_neg, [](const std::string&, Matrix& x, Matrix&) { x = -x; });
    EXPECT_TRUE(same_bits(a, b_neg));
}

TEST(Adam, MomentsStayNonNegative)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> d(0.0, 3.0);
    auto m = init_params(small_config(), 1);
    auto s = AdamState::zeros_like(m);
    for (int step = 0; step < 20; ++step) {
        auto g = Gradients::zeros_like(m);
        for_each_block(g, g, [&](const std::string&, Matrix& b, Matrix&) { b = b.unaryExpr([&](double) { return d(rng); }); });
        adam_step(m, g, s, TrainConfig{});
        for_each_block(s.v, s.v, [](const std::string& name, const Matrix& v, const Matrix&) {
            ASSERT_TRUE((v.array() >= 0.0).all()) << name;
        });
    }
    EXPECT_EQ(s.t, 20u);
}

TEST(Adam, NonFiniteGradientNamesBlock)
{
    auto m = init_params(small_config(), 1);
    const auto before = m;
    auto g = Gradients::zeros_like(m);
    g.layers[1].blocks[4](2, 1) = std::nan("");
    auto s = AdamState::zeros_like(m);
    try {
        adam_step(m, g, s, TrainConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
        EXPECT_NE(std::string(e.what()).find("layer2.Vf"), std::string::npos) << e.what();
    }
    EXPECT_EQ(s.t, 0u);
    EXPECT_TRUE(same_bits(m, before));
}

// ---------------------------------------------------------------------------

TEST(TrainConfigTest, DefaultsAndValidation)
{
    const TrainConfig cfg;
    EXPECT_EQ(cfg.hidden_dims, (std::vector<std::size_t>{128, 64}));
    EXPECT_EQ(cfg.learning_rate, 0.001);
    EXPECT_EQ(cfg.batch_size, 50u);
    EXPECT_EQ(cfg.epochs, 100u);
    EXPECT_EQ(cfg.window, 5u);
    EXPECT_EQ(cfg.train_ratio, 0.7);
    EXPECT_NO_THROW(cfg.validate());

    auto bad = cfg;
    bad.epochs = 0;
    EXPECT_ERROR_KIND(bad.validate(), ErrorKind::config);
    bad = cfg;
    bad.batch_size = 0;
    EXPECT_ERROR_KIND(bad.validate(), ErrorKind::config);
    bad = cfg;
    bad.beta1 = 1.0;
    EXPECT_ERROR_KIND(bad.validate(), ErrorKind::config);
    bad = cfg;
    bad.learning_rate = -0.1;
    EXPECT_ERROR_KIND(bad.validate(), ErrorKind::config);
}

TEST(TrainConfigTest, ParsesKeyValueText)
{
    const auto cfg = parse_train_config("# sine run\nhidden_dims = 8, 4\nlearning_rate=0.01  # faster\n\n"
                                        "epochs = 250\nloss_mode = bce\nseed = 9\n");
    EXPECT_EQ(cfg.hidden_dims, (std::vector<std::size_t>{8, 4}));
    EXPECT_EQ(cfg.learning_rate, 0.01);
    EXPECT_EQ(cfg.epochs, 250u);
    EXPECT_EQ(cfg.loss_mode, LossMode::bce);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.batch_size, 50u);
}

TEST(TrainConfigTest, RoundTripsThroughText)
{
    TrainConfig cfg;
    cfg.hidden_dims = {5};
    cfg.learning_rate = 0.0031;
    cfg.clip_norm = 2.5;
    cfg.train_ratio = 0.8;
    const auto back = parse_train_config(format_train_config(cfg));
    EXPECT_EQ(format_train_config(back), format_train_config(cfg));
    EXPECT_EQ(back.hidden_dims, cfg.hidden_dims);
    EXPECT_EQ(back.learning_rate, cfg.learning_rate);
}

TEST(TrainConfigTest, Errors)
{
    EXPECT_ERROR_KIND(parse_train_config("momentum = 0.9\n"), ErrorKind::config);
    EXPECT_ERROR_KIND(parse_train_config("epochs\n"), ErrorKind::config);
    EXPECT_ERROR_KIND(parse_train_config("epochs = many\n"), ErrorKind::config);
    EXPECT_ERROR_KIND(parse_train_config("hidden_dims = 8,0\n"), ErrorKind::config);
    EXPECT_ERROR_KIND(parse_train_config("loss_mode = hinge\n"), ErrorKind::config);
}

// ---------------------------------------------------------------------------

TEST(Train, OneStepPerEpochWhenBatchCoversTrainSet)
{
    const auto split = sine_twenty();
    ASSERT_EQ(split.train.size(), 20u);
    auto cfg = small_config();
    cfg.epochs = 7;
    for (std::size_t batch : {20u, 50u}) {
        cfg.batch_size = batch;
        EXPECT_EQ(train(split, cfg).report.optimizer_steps, 7u);
    }
    cfg.batch_size = 6; // 6 + 6 + 6 + 2
    EXPECT_EQ(train(split, cfg).report.optimizer_steps, 28u);
}

TEST(Train, ReportHasOneRowPerEpoch)
{
    auto cfg = small_config();
    cfg.epochs = 12;
    std::size_t calls = 0;
    const auto r = train(sine_twenty(), cfg, [&](const EpochRecord& e) { EXPECT_EQ(e.epoch, ++calls); });
    EXPECT_EQ(calls, 12u);
    ASSERT_EQ(r.report.epochs.size(), 12u);
    const auto csv = report_to_csv(r.report);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,test_rmse");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Train, ZeroLearningRateIsIdentity)
{
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    cfg.batch_size = 3;
    const auto initial = init_params(cfg, 21);
    const auto r = train(sine_twenty(), cfg, initial);
    EXPECT_TRUE(same_bits(r.model, initial));
}

TEST(Train, BitDeterministicAcrossRunsAndThreadCounts)
{
    const auto split = prepare_dataset(make_fixture(FixtureKind::degradation, 120, 3), 5, 0.7).split;
    auto cfg = small_config();
    cfg.epochs = 10;
    cfg.batch_size = 16;
    ::setenv("PROGNOST_THREADS", "1", 1);
    const auto a = serialize_model(train(split, cfg).model);
    const auto b = serialize_model(train(split, cfg).model);
    ::setenv("PROGNOST_THREADS", "4", 1);
    const auto c = serialize_model(train(split, cfg).model);
    ::unsetenv("PROGNOST_THREADS");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Train, DivergenceIsNumericError)
{
    auto cfg = small_config();
    cfg.learning_rate = 1e300;
    cfg.epochs = 5;
    EXPECT_ERROR_KIND(train(sine_twenty(), cfg), ErrorKind::numeric);
}

TEST(Train, SineOverfitReachesLowMse)
{
    // Overfit capability on 20 windows; the Adam step is raised from the
    // 0.001 default because 500 single-batch steps at 0.001 stop short.
    auto cfg = small_config();
    cfg.hidden_dims = {8};
    cfg.epochs = 500;
    cfg.learning_rate = 0.01;
    const auto split = sine_twenty();
    const auto r = train(split, cfg);
    const auto& w = split.train.windows;
    std::vector<double> pred;
    for (const auto& x : w) pred.push_back(predict(r.model, x));
    EXPECT_LT(compute_loss(pred, split.train.targets, LossMode::mse).loss, 1e-4);
}

TEST(Train, SineLossMostlyNonIncreasing)
{
    auto cfg = small_config();
    cfg.hidden_dims = {8};
    cfg.epochs = 100;
    const auto r = train(sine_twenty(), cfg);
    int non_increasing = 0;
    for (std::size_t e = 1; e < r.report.epochs.size(); ++e) {
        non_increasing += r.report.epochs[e].train_loss <= r.report.epochs[e - 1].train_loss;
    }
    EXPECT_GE(non_increasing, 95);
}
