#include "antr/ncs.hpp"

#include <gtest/gtest.h>

using namespace antr;
using namespace antr::ncs;

namespace {

NcsConfig cube_config(std::size_t N, std::size_t iterations, std::uint64_t seed) {
    NcsConfig c;
    c.searchers = N;
    c.iterations = iterations;
    c.box = Box::unit(2);
    c.seed = seed;
    return c;
}

} // namespace

TEST(Bhattacharyya, Examples) {
    const std::vector<double> a{0.3, 0.4}, b{0.3, 0.4};
    EXPECT_EQ(bhattacharyya(a, b, 0.2, 0.2), 0.0);
    const std::vector<double> z{0.0}, two{2.0};
    EXPECT_NEAR(bhattacharyya(z, two, 1.0, 1.0), 0.5, 1e-12);
}

TEST(Bhattacharyya, AgainstGeneralFormula) {
    // (1/8) dm^T S^-1 dm + 1/2 ln(det S / sqrt(det S_i det S_j)) with diagonal covariances
    Rng rng(1, 0);
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + rng.below(5);
        std::vector<double> mi(d), mj(d);
        for (std::size_t k = 0; k < d; ++k) {
            mi[k] = rng.uniform(-1, 1);
            mj[k] = rng.uniform(-1, 1);
        }
        const double si = rng.uniform(0.01, 1.0), sj = rng.uniform(0.01, 1.0);
        const double s = 0.5 * (si * si + sj * sj);
        double quad = 0.0;
        for (std::size_t k = 0; k < d; ++k)
            quad += (mi[k] - mj[k]) * (mi[k] - mj[k]) / s;
        const double det_s = std::pow(s, static_cast<double>(d));
        const double det_i = std::pow(si * si, static_cast<double>(d));
        const double det_j = std::pow(sj * sj, static_cast<double>(d));
        const double expect = quad / 8.0 + 0.5 * std::log(det_s / std::sqrt(det_i * det_j));
        EXPECT_NEAR(bhattacharyya(mi, mj, si, sj), expect, 1e-10 * std::max(1.0, expect));
    }
}

TEST(Bhattacharyya, SymmetricAndNonNegative) {
    Rng rng(2, 0);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> a{rng.uniform(), rng.uniform(), rng.uniform()};
        std::vector<double> b{rng.uniform(), rng.uniform(), rng.uniform()};
        const double s1 = rng.uniform(1e-3, 1.0), s2 = rng.uniform(1e-3, 1.0);
        const double x = bhattacharyya(a, b, s1, s2), y = bhattacharyya(b, a, s2, s1);
        EXPECT_GE(x, 0.0);
        EXPECT_NEAR(x, y, 1e-12 * std::max(1.0, x));
    }
}

TEST(Corr, MinimumOverOthers) {
    std::vector<Distribution> cur{{{0.0}, 1.0}, {{2.0}, 1.0}, {{4.0}, 1.0}};
    // searcher 0 proposal at 0: distances 0.5 (to 2) and 2.0 (to 4)
    EXPECT_NEAR(corr(0, Distribution{{0.0}, 1.0}, cur), 0.5, 1e-12);
    std::vector<Distribution> two{{{0.0}, 1.0}, {{3.0}, 1.0}};
    EXPECT_NEAR(corr(0, Distribution{{1.0}, 1.0}, two), bhattacharyya(std::vector{1.0}, std::vector{3.0}, 1.0, 1.0),
                1e-15);
    EXPECT_EQ(corr(1, Distribution{{0.0}, 1.0}, two), 0.0);
}

TEST(Replace, Examples) {
    EXPECT_TRUE(ncs_replace_decision(0.0, 0.3, 1.0));
    EXPECT_FALSE(ncs_replace_decision(0.2, 0.0, 1.0));
    EXPECT_TRUE(ncs_replace_decision(0.4, 0.5, 1.0));
    EXPECT_FALSE(ncs_replace_decision(0.6, 0.5, 1.0));
    EXPECT_EQ(normalize_fitness(5.0, 5.0, 1.0), 0.0);
    EXPECT_NEAR(normalize_fitness(1.0, 5.0, 1.0), 1.0, 1e-12);
}

TEST(Reflect, StaysInBox) {
    EXPECT_NEAR(reflect(1.2, 0.0, 1.0), 0.8, 1e-15);
    EXPECT_NEAR(reflect(-0.3, 0.0, 1.0), 0.3, 1e-15);
    EXPECT_NEAR(reflect(2.5, 0.0, 1.0), 0.5, 1e-15);
    EXPECT_EQ(reflect(0.7, 0.5, 0.5), 0.5);
    Rng rng(3, 0);
    for (int t = 0; t < 1000; ++t) {
        const double y = reflect(rng.normal(0.0, 5.0), 0.2, 0.6);
        EXPECT_GE(y, 0.2);
        EXPECT_LE(y, 0.6);
    }
}

TEST(NcsRun, ExactEvaluationCount) {
    Rng rng(4, 0);
    std::size_t calls = 0;
    auto res = ncs_run([&](std::span<const double>) { return static_cast<double>(++calls); }, cube_config(2, 1, 4), rng);
    EXPECT_EQ(calls, 2u);
    EXPECT_EQ(res.evaluations, 2u);
    calls = 0;
    res = ncs_run([&](std::span<const double>) { return static_cast<double>(++calls % 7); }, cube_config(7, 33, 4), rng);
    EXPECT_EQ(calls, 7u * 33u);
    EXPECT_EQ(res.ranked.size(), 7u * 33u);
    for (std::size_t i = 1; i < res.ranked.size(); ++i)
        EXPECT_GE(res.ranked[i - 1].value, res.ranked[i].value);
}

TEST(NcsRun, ConvergesOnQuadratic) {
    int hits = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        Rng rng(s, 3);
        auto res = ncs_run(
            [](std::span<const double> x) { return -((x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 0.7) * (x[1] - 0.7)); },
            cube_config(10, 200, s), rng);
        const auto& b = res.ranked.front().theta;
        hits += std::hypot(b[0] - 0.3, b[1] - 0.7) <= 0.05;
    }
    EXPECT_GE(hits, 9);
}

TEST(NcsRun, CoversBothPeaks) {
    auto peaks = [](std::span<const double> x) {
        const double a = std::hypot(x[0] - 0.2, x[1] - 0.5), b = std::hypot(x[0] - 0.8, x[1] - 0.5);
        return std::max(std::exp(-a * a / 0.01), std::exp(-b * b / 0.01));
    };
    int covered = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        Rng rng(s, 4);
        auto res = ncs_run(peaks, cube_config(8, 150, s), rng);
        bool left = false, right = false;
        for (const auto& sr : res.searchers) {
            left = left || std::hypot(sr.mean[0] - 0.2, sr.mean[1] - 0.5) <= 0.1;
            right = right || std::hypot(sr.mean[0] - 0.8, sr.mean[1] - 0.5) <= 0.1;
        }
        covered += left && right;
    }
    EXPECT_GE(covered, 7);
}

TEST(NcsRun, ProposalsInsideBox) {
    NcsConfig c = cube_config(6, 50, 5);
    c.box = Box{{0.2, 0.5}, {0.4, 0.9}};
    Rng rng(5, 0);
    auto res = ncs_run([](std::span<const double> x) { return x[0] - x[1]; }, c, rng);
    for (const auto& e : res.ranked)
        EXPECT_TRUE(c.box.contains(e.theta));
    for (const auto& s : res.searchers) {
        EXPECT_TRUE(c.box.contains(s.mean));
        EXPECT_GE(s.sigma, kSigmaMin);
        EXPECT_LE(s.sigma, kSigmaMax);
    }
}

TEST(NcsRun, DiversityUnderConstantObjective) {
    auto spread = [](const std::vector<Searcher>& ss) {
        double s = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < ss.size(); ++i)
            for (std::size_t j = i + 1; j < ss.size(); ++j, ++n)
                s += std::hypot(ss[i].mean[0] - ss[j].mean[0], ss[i].mean[1] - ss[j].mean[1]);
        return s / n;
    };
    for (std::uint64_t s = 1; s <= 5; ++s) {
        Rng a(s, 6), b(s, 6);
        auto start = ncs_run([](std::span<const double>) { return 1.0; }, cube_config(10, 1, s), a);
        auto end = ncs_run([](std::span<const double>) { return 1.0; }, cube_config(10, 100, s), b);
        EXPECT_GE(spread(end.searchers), spread(start.searchers)) << "seed " << s;
    }
}

TEST(NcsRun, FirstIterationEvaluatesInitialMeans) {
    Rng rng(7, 0);
    std::vector<std::vector<double>> first;
    auto res = ncs_run(
        [&](const std::vector<std::vector<double>>& pts) {
            if (first.empty())
                first = pts;
            return std::vector<double>(pts.size(), 0.0);
        },
        cube_config(4, 1, 7), rng);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(res.searchers[i].mean, first[i]);
}

TEST(NcsRun, BadConfigAndObjective) {
    Rng rng(8, 0);
    EXPECT_THROW(ncs_run([](std::span<const double>) { return 0.0; }, cube_config(1, 5, 1), rng), ConfigError);
    NcsConfig c = cube_config(3, 5, 1);
    c.epoch = 0;
    EXPECT_THROW(ncs_run([](std::span<const double>) { return 0.0; }, c, rng), ConfigError);
    EXPECT_THROW(ncs_run([](const std::vector<std::vector<double>>&) { return std::vector<double>{1.0}; },
                         cube_config(3, 2, 1), rng),
                 Error);
}
