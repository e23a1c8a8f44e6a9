#include "antr/surrogate.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace antr;

namespace {

SpacePtr unit2() { return make_space({0.0, 0.0}, {1.0, 1.0}, {"a", "b"}); }

PosteriorModel tiny_model(std::uint64_t seed, std::size_t t_max = 12) {
    return PosteriorModel(Architecture{t_max, {7, 5, 3}, 4, 2}, unit2(), seed);
}

TimeSeries random_series(Rng& rng, std::size_t len) {
    std::vector<double> v(len);
    for (auto& x : v)
        x = rng.normal();
    return TimeSeries(v);
}

Mixture one_component(double m0, double m1, double s) {
    Mixture m;
    m.K = 1;
    m.d = 2;
    m.log_weight = {0.0};
    m.mean = {m0, m1};
    m.log_sigma = {std::log(s), std::log(s)};
    return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

} // namespace

TEST(Architecture, Defaults) {
    auto bh = PosteriorModel(Architecture::bh_default(2), make_space({0, 0}, {1, 1}, {"g", "b"}), 1);
    EXPECT_EQ(bh.depth(), 4u);
    EXPECT_EQ(bh.arch().embedding_dim(), 16u);
    EXPECT_EQ(bh.params().embedding.front().W.cols(), 1000);
    TimeSeries s(std::vector<double>(900, 0.1));
    EXPECT_EQ(bh.embed(s).size(), 16);

    auto pg = PosteriorModel(Architecture::pgps_default(), make_space({0, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1},
                                                                      {"a", "b", "c", "d", "e", "f"}),
                             1);
    EXPECT_EQ(pg.depth(), 5u);
    EXPECT_EQ(pg.arch().embedding_dim(), 64u);
    EXPECT_EQ(pg.params().embedding.front().W.cols(), 3600);
}

TEST(Architecture, RejectsMismatchedSpace) {
    EXPECT_THROW(PosteriorModel(Architecture{10, {4}, 2, 3}, unit2(), 1), ConfigError);
    EXPECT_THROW(PosteriorModel(Architecture{10, {0}, 2, 2}, unit2(), 1), ConfigError);
}

TEST(Embed, ZeroWeightsGiveZeroEmbedding) {
    auto m = tiny_model(3);
    m.params().for_each_block([](double* p, std::size_t n) { std::fill(p, p + n, 0.0); });
    Rng rng(1, 0);
    EXPECT_EQ(m.embed(random_series(rng, 9)).norm(), 0.0);
}

TEST(Embed, IdentityLayerReturnsPaddedInput) {
    PosteriorModel m(Architecture{6, {6}, 1, 2}, unit2(), 1);
    m.params().embedding[0].W.setIdentity();
    m.params().embedding[0].b.setZero();
    auto z = m.embed(TimeSeries({1.5, -2.0, 3.0}));
    Eigen::VectorXd expect(6);
    expect << 1.5, -2.0, 3.0, 0.0, 0.0, 0.0;
    EXPECT_EQ(z, expect);
}

TEST(Embed, NormalizationAppliesToRealEntriesOnly) {
    PosteriorModel m(Architecture{5, {5}, 1, 2}, unit2(), 1);
    m.set_input_normalization(1.0, 2.0);
    auto x = m.input_vector(TimeSeries({3.0, 1.0}));
    EXPECT_EQ(x(0), 1.0);
    EXPECT_EQ(x(1), 0.0);
    for (int i = 2; i < 5; ++i)
        EXPECT_EQ(x(i), 0.0);
    EXPECT_THROW(m.set_input_normalization(0.0, 0.0), ConfigError);
}

TEST(Embed, LengthOverflow) {
    auto m = tiny_model(1);
    EXPECT_THROW(m.embed(TimeSeries(std::vector<double>(13, 1.0))), BoundsError);
}

TEST(Embed, LayerRangesCompose) {
    auto m = tiny_model(5);
    Rng rng(2, 0);
    Eigen::MatrixXd X(12, 4);
    for (int c = 0; c < 4; ++c)
        X.col(c) = m.input_vector(random_series(rng, 5 + c));
    Eigen::MatrixXd full = m.embed_batch(X);
    Eigen::MatrixXd split = m.forward_layers(m.forward_layers(X, 0, 2), 2, 3);
    EXPECT_LT((full - split).norm(), 1e-14);
    EXPECT_THROW(m.forward_layers(X, 2, 1), ConfigError);
    EXPECT_THROW(m.forward_layers(X, 0, 4), ConfigError);
}

TEST(Embed, SamePaddedVectorSameEmbedding) {
    auto m = tiny_model(7);
    TimeSeries a({0.3, -0.1, 0.8});
    TimeSeries b({0.3, -0.1, 0.8});
    EXPECT_EQ(m.embed(a), m.embed(b));
    EXPECT_EQ(m.log_prob(ParamVector({0.2, 0.4}, unit2()), a), m.log_prob(ParamVector({0.2, 0.4}, unit2()), b));
}

TEST(Mixture, StandardNormalAtOrigin) {
    auto m = one_component(0.0, 0.0, 1.0);
    const double th[2] = {0.0, 0.0};
    EXPECT_NEAR(m.log_prob(th), -std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(Mixture, WeightsSumToOneAndSigmasClamped) {
    Rng rng(8, 0);
    for (int t = 0; t < 50; ++t) {
        auto model = tiny_model(static_cast<std::uint64_t>(t));
        // exaggerate the head so the clamp is exercised
        model.params().head.W *= 50.0;
        auto mix = model.mixture(random_series(rng, 12));
        double s = 0.0;
        for (std::size_t k = 0; k < mix.K; ++k)
            s += mix.weight(k);
        EXPECT_NEAR(s, 1.0, 1e-10);
        for (double ls : mix.log_sigma) {
            EXPECT_GE(ls, kLogSigmaMin);
            EXPECT_LE(ls, kLogSigmaMax);
        }
        const double th[2] = {rng.uniform(), rng.uniform()};
        const double lp = mix.log_prob(th);
        EXPECT_TRUE(std::isfinite(lp));
    }
}

TEST(Mixture, FarPointStaysFinite) {
    auto m = one_component(0.0, 0.0, std::exp(kLogSigmaMin));
    const double th[2] = {1.0, 1.0};
    EXPECT_TRUE(std::isfinite(m.log_prob(th)));
}

TEST(Mixture, IntegratesToMassInsideCube) {
    Mixture m;
    m.K = 3;
    m.d = 2;
    m.log_weight = {std::log(0.5), std::log(0.3), std::log(0.2)};
    m.mean = {0.2, 0.3, 0.7, 0.6, 0.5, 1.1};
    m.log_sigma = {std::log(0.1), std::log(0.2), std::log(0.15), std::log(0.05), std::log(0.3), std::log(0.2)};
    double mass = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        double p = m.weight(k);
        for (std::size_t i = 0; i < 2; ++i)
            p *= normal_cdf((1.0 - m.mu(k, i)) / m.sigma(k, i)) - normal_cdf((0.0 - m.mu(k, i)) / m.sigma(k, i));
        mass += p;
    }
    Rng rng(9, 0);
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double th[2] = {rng.uniform(), rng.uniform()};
        acc += std::exp(m.log_prob(th));
    }
    const double integral = acc / n;
    EXPECT_GE(integral, 0.9 * mass);
    EXPECT_LE(integral, 1.1 * mass);
}

TEST(Sampling, TightComponentMean) {
    auto m = one_component(0.3, 0.7, 1e-3);
    Rng rng(10, 0);
    auto res = sample_mixture(m, 1000, rng, Box::unit(2));
    double s0 = 0.0, s1 = 0.0;
    for (const auto& p : res.points) {
        s0 += p[0];
        s1 += p[1];
    }
    EXPECT_NEAR(s0 / 1000, 0.3, 1e-2);
    EXPECT_NEAR(s1 / 1000, 0.7, 1e-2);
    EXPECT_FALSE(res.clamped);
}

TEST(Sampling, ComponentFrequenciesMatchWeights) {
    Mixture m;
    m.K = 3;
    m.d = 2;
    const double w[3] = {0.5, 0.3, 0.2};
    m.log_weight = {std::log(w[0]), std::log(w[1]), std::log(w[2])};
    m.mean = {0.2, 0.2, 0.5, 0.8, 0.8, 0.4};
    m.log_sigma.assign(6, std::log(0.01));
    Rng rng(11, 0);
    const int n = 10000;
    auto res = sample_mixture(m, n, rng, Box::unit(2));
    int counts[3] = {0, 0, 0};
    for (const auto& p : res.points) {
        std::size_t best = 0;
        double bd = 1e300;
        for (std::size_t k = 0; k < 3; ++k) {
            const double d = std::hypot(p[0] - m.mu(k, 0), p[1] - m.mu(k, 1));
            if (d < bd) {
                bd = d;
                best = k;
            }
        }
        ++counts[best];
    }
    for (int k = 0; k < 3; ++k) {
        const double sd = std::sqrt(n * w[k] * (1 - w[k]));
        EXPECT_LE(std::abs(counts[k] - n * w[k]), 3 * sd) << k;
    }
}

TEST(Sampling, AlwaysInsideUnitCube) {
    auto model = tiny_model(12);
    Rng rng(12, 0);
    auto pts = sample_posterior(model, random_series(rng, 10), 500, rng);
    for (const auto& p : pts)
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_GE(p[i], 0.0);
            EXPECT_LE(p[i], 1.0);
        }
}

TEST(Sampling, RestrictedBox) {
    auto m = one_component(0.5, 0.5, 0.3);
    Rng rng(13, 0);
    Box box{{0.4, 0.1}, {0.6, 0.3}};
    auto res = sample_mixture(m, 200, rng, box);
    for (const auto& p : res.points)
        EXPECT_TRUE(box.contains(p));
}

TEST(Sampling, ClampsWhenAcceptanceCollapses) {
    auto m = one_component(5.0, 5.0, 1e-3);
    Rng rng(14, 0);
    auto res = sample_mixture(m, 10, rng, Box::unit(2));
    EXPECT_TRUE(res.clamped);
    ASSERT_EQ(res.points.size(), 10u);
    for (const auto& p : res.points)
        EXPECT_TRUE(Box::unit(2).contains(p));
    EXPECT_THROW(sample_posterior(tiny_model(1), TimeSeries({1.0}), 0, rng), ConfigError);
}

TEST(Persistence, RoundTripIsBitExact) {
    auto m = tiny_model(15);
    m.set_input_normalization(0.123456789, 3.3);
    m.meta().epochs = 4;
    m.meta().val_loss = {1.5, 1.25};
    std::stringstream ss;
    save_model(ss, m);
    auto back = load_model(ss);
    Rng rng(15, 0);
    for (int t = 0; t < 20; ++t) {
        auto s = random_series(rng, 1 + rng.below(12));
        ParamVector th({rng.uniform(), rng.uniform()}, unit2());
        EXPECT_EQ(back.log_prob(th, s), m.log_prob(th, s));
    }
    EXPECT_EQ(back.input_offset(), m.input_offset());
    EXPECT_EQ(back.meta().val_loss, m.meta().val_loss);
    EXPECT_EQ(*back.space(), *m.space());
}

TEST(Persistence, CorruptInputs) {
    std::stringstream empty;
    EXPECT_THROW(load_model(empty), IoError);
    std::stringstream junk("not json\n");
    EXPECT_THROW(load_model(junk), IoError);

    auto m = tiny_model(16);
    std::stringstream ss;
    save_model(ss, m);
    std::string text = ss.str();
    text.resize(text.size() - 16);
    std::stringstream cut(text);
    EXPECT_THROW(load_model(cut), IoError);

    std::stringstream missing(R"({"format":"antr-model/1"})" "\n");
    EXPECT_THROW(load_model(missing), IoError);
    EXPECT_THROW(load_model("/nonexistent/model.bin"), IoError);
}
