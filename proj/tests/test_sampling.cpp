#include "antr/sampling.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace antr;

namespace {

// Count of points per stratum [k/n, (k+1)/n) in one coordinate.
std::vector<int> stratum_histogram(const std::vector<std::vector<double>>& pts, std::size_t dim) {
    const std::size_t n = pts.size();
    std::vector<int> h(n, 0);
    for (const auto& p : pts) {
        const double v = p[dim];
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
        auto k = static_cast<std::size_t>(std::floor(v * static_cast<double>(n)));
        // boundary-exact test against the stratum edges, independent of the floor above
        while (k > 0 && v < static_cast<double>(k) / static_cast<double>(n))
            --k;
        while (k + 1 < n && v >= static_cast<double>(k + 1) / static_cast<double>(n))
            ++k;
        ++h[k];
    }
    return h;
}

} // namespace

TEST(Lhs, OnePointPerStratumEveryDimension) {
    for (std::size_t n : {1u, 4u, 50u, 200u}) {
        for (std::size_t d : {1u, 2u, 6u}) {
            Rng rng = rng_stream(n * 31 + d, Purpose::Sampling);
            auto pts = lhs_unit(n, d, rng);
            ASSERT_EQ(pts.size(), n);
            for (std::size_t k = 0; k < d; ++k) {
                auto h = stratum_histogram(pts, k);
                for (std::size_t b = 0; b < n; ++b)
                    ASSERT_EQ(h[b], 1) << "n=" << n << " d=" << d << " dim=" << k << " bin=" << b;
            }
        }
    }
}

TEST(Lhs, FourPointsOneDimension) {
    auto pts = lhs_sample(4, make_space({0.0}, {1.0}, {"a"}), 9);
    std::vector<double> v;
    for (auto& p : pts)
        v.push_back(p[0]);
    std::sort(v.begin(), v.end());
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_GE(v[k], 0.25 * static_cast<double>(k));
        EXPECT_LT(v[k], 0.25 * static_cast<double>(k + 1));
    }
}

TEST(Lhs, SinglePoint) {
    auto pts = lhs_sample(1, make_space({0, 0, 0}, {1, 1, 1}, {"a", "b", "c"}), 2);
    ASSERT_EQ(pts.size(), 1u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_GE(pts[0][i], 0.0);
        EXPECT_LT(pts[0][i], 1.0);
    }
}

TEST(Lhs, PermutationsDifferAcrossDimensions) {
    Rng rng(1, 0);
    auto pts = lhs_unit(50, 2, rng);
    int same = 0;
    for (const auto& p : pts)
        same += std::floor(p[0] * 50) == std::floor(p[1] * 50);
    EXPECT_LT(same, 10);
}

TEST(Lhs, RejectsEmptyDesign) {
    Rng rng(1, 0);
    EXPECT_THROW(lhs_unit(0, 2, rng), ConfigError);
    EXPECT_THROW(lhs_unit(2, 0, rng), ConfigError);
}

TEST(GenPlan, Validation) {
    GenPlan p;
    p.lengths = {100, 2000};
    EXPECT_THROW(p.validate(), ConfigError);
    p.lengths = {};
    EXPECT_THROW(p.validate(), ConfigError);
    p.lengths = {0};
    EXPECT_THROW(p.validate(), ConfigError);
    GenPlan q;
    q.n_params = 0;
    EXPECT_THROW(q.validate(), ConfigError);
}

TEST(Generate, MinimalPlan) {
    GenPlan p;
    p.n_params = 1;
    p.lengths = {100};
    auto ds = generate_dataset(p, SimulatorSpec{});
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds[0].series.length(), 100u);
}

TEST(Generate, DeskPlanCountAndDistinctSeeds) {
    GenPlan p;
    auto ds = generate_dataset(p, SimulatorSpec{});
    ASSERT_EQ(ds.size(), 450u);
    std::set<std::uint64_t> seeds;
    std::map<std::size_t, int> per_length;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        seeds.insert(ds[i].seed);
        ++per_length[ds[i].series.length()];
    }
    EXPECT_EQ(seeds.size(), 450u);
    EXPECT_EQ(per_length.size(), 9u);
    for (auto [len, count] : per_length)
        EXPECT_EQ(count, 50) << len;
}

TEST(Generate, FreshDesignPerLength) {
    GenPlan p;
    p.n_params = 10;
    p.lengths = {100, 200};
    auto ds = generate_dataset(p, SimulatorSpec{});
    for (std::size_t i = 0; i < 10; ++i)
        EXPECT_NE(ds[i].theta.unit(), ds[i + 10].theta.unit());
}

TEST(Generate, PaperScaleRecordCount) {
    GenPlan p;
    p.n_params = 200;
    p.lengths.clear();
    for (std::size_t len = 50; len <= 1000; len += 10)
        p.lengths.push_back(len);
    ASSERT_EQ(p.lengths.size(), 96u);
    auto ds = generate_dataset(p, SimulatorSpec{});
    EXPECT_EQ(ds.size(), 19200u);
}

TEST(Generate, ByteIdenticalAndIndependentOfJobs) {
    GenPlan p;
    p.n_params = 20;
    p.lengths = {50, 150};
    std::ostringstream a, b, c;
    write_dataset(a, generate_dataset(p, SimulatorSpec{}, 1));
    write_dataset(b, generate_dataset(p, SimulatorSpec{}, 1));
    write_dataset(c, generate_dataset(p, SimulatorSpec{}, 3));
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str(), c.str());
}

TEST(Generate, PgpsRecordsCarrySettings) {
    SimulatorSpec sim;
    sim.id = "pgps";
    sim.dim = 6;
    sim.pgps.warmup = 20;
    GenPlan p;
    p.n_params = 2;
    p.lengths = {30};
    p.t_max = 60;
    auto ds = generate_dataset(p, sim);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.sim_config()["pgps"]["warmup"], 20);
    EXPECT_EQ(simulator_from_json(ds.sim_config()).pgps.warmup, 20u);
}
