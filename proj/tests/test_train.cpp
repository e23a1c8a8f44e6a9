#include "antr/train.hpp"
#include "grad_check.hpp"

#include <gtest/gtest.h>

using namespace antr;

namespace {

SpacePtr unit2() { return make_space({0.0, 0.0}, {1.0, 1.0}, {"a", "b"}); }

// Records whose series encodes theta plus noise, so there is signal to learn.
Dataset toy_dataset(std::size_t n, std::uint64_t seed, std::size_t t_max = 10) {
    Dataset ds(unit2(), "bh", t_max);
    Rng rng(seed, 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u{rng.uniform(), rng.uniform()};
        const std::size_t len = 4 + rng.below(t_max - 3);
        std::vector<double> v(len);
        for (std::size_t t = 0; t < len; ++t)
            v[t] = (t % 2 ? u[0] : u[1]) * 3.0 + 0.05 * rng.normal() + 1.0;
        ds.append({ParamVector(u, unit2()), TimeSeries(v), rng.next_u64(), "bh", false});
    }
    return ds;
}

PosteriorModel toy_model(std::uint64_t seed, std::size_t K = 3) {
    return PosteriorModel(Architecture{10, {16, 8}, K, 2}, unit2(), seed);
}

double mean_log_prob(const PosteriorModel& m, const Dataset& ds, const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto i : idx)
        s += m.log_prob(ds[i].theta, ds[i].series);
    return s / static_cast<double>(idx.size());
}

} // namespace

TEST(Gradient, MatchesFiniteDifferencesForEveryFrozenDepth) {
    for (std::uint64_t s = 1; s <= 6; ++s) {
        auto p = oracle::random_problem(s);
        Rng rng(s, 9);
        for (std::size_t first = 0; first <= p.model.depth(); ++first) {
            auto res = oracle::check_gradient(p.model, p.inputs, p.thetas, first, 20, rng);
            EXPECT_LE(res.max_rel_error, 1e-4) << "seed " << s << " first_layer " << first;
        }
    }
}

TEST(Gradient, FrozenLayersReceiveNoGradient) {
    auto p = oracle::random_problem(3);
    NetParams g = p.model.params().zeros_like();
    const std::size_t first = p.model.depth();
    nll_and_grad(p.model, p.model.forward_layers(p.inputs, 0, first), p.thetas, &g, first);
    for (const auto& l : g.embedding)
        EXPECT_EQ(l.W.norm(), 0.0);
    EXPECT_GT(g.head.W.norm(), 0.0);
    EXPECT_THROW(nll_and_grad(p.model, p.inputs, p.thetas, &g, first + 1), ConfigError);
}

TEST(Gradient, LossMatchesMixtureLogProb) {
    auto m = toy_model(4);
    auto ds = toy_dataset(6, 4);
    std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
    const double nll = nll_and_grad(m, input_matrix(m, ds, idx), theta_matrix(ds, idx, 2), nullptr);
    EXPECT_NEAR(nll, -mean_log_prob(m, ds, idx), 1e-12);
}

TEST(Train, SingleRecordOverfits) {
    Dataset ds(unit2(), "bh", 10);
    ds.append({ParamVector({0.3, 0.8}, unit2()), TimeSeries({1.0, 2.0, 0.5}), 1, "bh", false});
    for (std::uint64_t seed : {1, 2, 5}) {
        auto m = toy_model(seed, 1);
        TrainConfig cfg;
        cfg.epochs = 100;
        cfg.step_size = 1e-3;
        cfg.patience = 100;
        auto rep = train(m, ds, cfg);
        ASSERT_EQ(rep.train_loss.size(), 100u);
        for (std::size_t e = 1; e < rep.train_loss.size(); ++e)
            EXPECT_LE(rep.train_loss[e], rep.train_loss[e - 1] + 1e-12) << "seed " << seed << " epoch " << e + 1;
        auto mix = m.mixture(ds[0].series);
        EXPECT_NEAR(mix.mu(0, 0), 0.3, 0.05) << "seed " << seed;
        EXPECT_NEAR(mix.mu(0, 1), 0.8, 0.05) << "seed " << seed;
    }
}

TEST(Train, ImprovesHeldOutLoss) {
    auto ds = toy_dataset(300, 6);
    auto m = toy_model(6);
    fit_input_normalization(m, ds);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.step_size = 3e-3;
    auto rep = train(m, ds, cfg);
    ASSERT_GE(rep.best_epoch, 1u);
    EXPECT_LT(rep.val_loss[rep.best_epoch - 1], rep.val_loss.front());
    EXPECT_EQ(m.meta().epochs, rep.epochs_run);
}

TEST(Train, RecordOrderDoesNotMatter) {
    auto ds = toy_dataset(80, 7);
    Dataset rev(ds.space(), ds.sim_id(), ds.t_max());
    for (std::size_t i = ds.size(); i-- > 0;)
        rev.append(ds[i]);
    auto a = toy_model(7), b = toy_model(7);
    TrainConfig cfg;
    cfg.epochs = 15;
    auto ra = train(a, ds, cfg);
    auto rb = train(b, rev, cfg);
    EXPECT_EQ(ra.val_loss, rb.val_loss);
    EXPECT_EQ(ra.train_loss.back(), rb.train_loss.back());
}

TEST(Train, SkipsDivergedRecords) {
    auto ds = toy_dataset(30, 8);
    ds.append({ParamVector({0.5, 0.5}, unit2()), TimeSeries({1e12}), 99, "bh", true});
    auto m = toy_model(8);
    TrainConfig cfg;
    cfg.epochs = 2;
    auto rep = train(m, ds, cfg);
    EXPECT_EQ(rep.skipped_diverged, 1u);
    EXPECT_EQ(rep.used_records, 30u);
}

TEST(Train, ConfigValidation) {
    auto ds = toy_dataset(10, 9);
    auto m = toy_model(9);
    TrainConfig c;
    c.val_fraction = 0.7;
    EXPECT_THROW(train(m, ds, c), ConfigError);
    TrainConfig z;
    z.step_size = 0.0;
    EXPECT_THROW(train(m, ds, z), ConfigError);
    TrainConfig f;
    f.frozen_layers = 3;
    EXPECT_THROW(train(m, ds, f), ConfigError);
    Dataset empty(unit2(), "bh", 10);
    EXPECT_THROW(train(m, empty, TrainConfig{}), ConfigError);
}

TEST(Train, NonFiniteLossNamesBatch) {
    auto ds = toy_dataset(20, 10);
    auto m = toy_model(10);
    m.params().head.W(0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        train(m, ds, TrainConfig{});
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
    }
}

TEST(Train, FeatureCacheMatchesDirectForward) {
    auto ds = toy_dataset(60, 11);
    auto a = toy_model(11), b = toy_model(11);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.frozen_layers = 1;
    const Eigen::MatrixXd cache = dataset_features(a, ds, 1, 7);
    auto ra = train(a, ds, cfg, {}, &cache);
    auto rb = train(b, ds, cfg);
    ASSERT_EQ(ra.val_loss.size(), rb.val_loss.size());
    for (std::size_t i = 0; i < ra.val_loss.size(); ++i)
        EXPECT_NEAR(ra.val_loss[i], rb.val_loss[i], 1e-12);
    // frozen layer untouched
    EXPECT_EQ(a.params().embedding[0].W, toy_model(11).params().embedding[0].W);
}

TEST(TrainLocal, EmptyRegionFallsBack) {
    auto ds = toy_dataset(50, 12);
    auto g = toy_model(12);
    Box box{{0.999, 0.999}, {1.0, 1.0}};
    auto fit = train_local(g, ds, box, TrainConfig{});
    EXPECT_TRUE(fit.fallback);
    EXPECT_EQ(fit.subset_size, 0u);
    EXPECT_EQ(fit.model.params().head.W, g.params().head.W);
}

TEST(TrainLocal, BelowMinimumFallsBack) {
    auto ds = toy_dataset(50, 13);
    auto fit = train_local(toy_model(13), ds, Box{{0.0, 0.0}, {0.3, 0.3}}, TrainConfig{}, 20);
    EXPECT_TRUE(fit.fallback);
    EXPECT_LT(fit.subset_size, 20u);
}

TEST(TrainLocal, UnitCubeEqualsWarmStartedTrain) {
    auto ds = toy_dataset(60, 14);
    auto g = toy_model(14);
    TrainConfig cfg;
    cfg.epochs = 8;
    auto fit = train_local(g, ds, Box::unit(2), cfg);
    auto copy = g;
    train(copy, ds, cfg);
    EXPECT_FALSE(fit.fallback);
    EXPECT_EQ(fit.model.params().head.W, copy.params().head.W);
}

TEST(TrainLocal, RegionLikelihoodDoesNotDecrease) {
    auto ds = toy_dataset(400, 15);
    auto g = toy_model(15);
    fit_input_normalization(g, ds);
    TrainConfig pre;
    pre.epochs = 20;
    train(g, ds, pre);
    Box box{{0.2, 0.2}, {0.6, 0.6}};
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (box.contains(ds[i].theta.unit()))
            idx.push_back(i);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.step_size = 3e-3;
    cfg.frozen_layers = 1;
    auto fit = train_local(g, ds, box, cfg);
    ASSERT_FALSE(fit.fallback);
    EXPECT_GE(mean_log_prob(fit.model, ds, idx), mean_log_prob(g, ds, idx));
}

TEST(InputNormalization, UsesRealEntriesOfHealthyRecords) {
    Dataset ds(unit2(), "bh", 10);
    ds.append({ParamVector({0.1, 0.1}, unit2()), TimeSeries({1.0, 3.0}), 1, "bh", false});
    ds.append({ParamVector({0.1, 0.1}, unit2()), TimeSeries({1e12}), 2, "bh", true});
    auto m = toy_model(16);
    fit_input_normalization(m, ds);
    EXPECT_EQ(m.input_offset(), 2.0);
    EXPECT_EQ(m.input_scale(), 1.0);
}
