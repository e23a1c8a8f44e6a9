#include "antr/dataset.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace antr;

namespace {

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
    auto space = make_space({0.0, -1.0, 10.0}, {1.0, 1.0, 20.0}, {"a", "b", "c"});
    Dataset ds(space, "bh", 50, {{"note", "test"}});
    Rng rng(seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u{rng.uniform(), rng.uniform(), rng.uniform()};
        std::vector<double> v(1 + rng.below(50));
        for (auto& x : v)
            x = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
        ds.append({ParamVector(u, space), TimeSeries(v), rng.next_u64(), "bh", rng.bernoulli(0.1)});
    }
    return ds;
}

} // namespace

TEST(Dataset, AppendValidatesSpaceSimAndLength) {
    auto space = make_space({0.0}, {1.0}, {"a"});
    auto other = make_space({0.0}, {2.0}, {"a"});
    Dataset ds(space, "bh", 3);
    EXPECT_NO_THROW(ds.append({ParamVector({0.5}, space), TimeSeries({1, 2, 3}), 1, "bh", false}));
    EXPECT_THROW(ds.append({ParamVector({0.5}, other), TimeSeries({1}), 1, "bh", false}), ConfigError);
    EXPECT_THROW(ds.append({ParamVector({0.5}, space), TimeSeries({1}), 1, "pgps", false}), ConfigError);
    EXPECT_THROW(ds.append({ParamVector({0.5}, space), TimeSeries({1, 2, 3, 4}), 1, "bh", false}), BoundsError);
    EXPECT_EQ(ds.size(), 1u);
}

TEST(Dataset, EqualSpacesByValueAreAccepted) {
    Dataset ds(make_space({0.0}, {1.0}, {"a"}), "bh", 3);
    EXPECT_NO_THROW(ds.append({ParamVector({0.25}, make_space({0.0}, {1.0}, {"a"})), TimeSeries({1}), 1, "bh", false}));
}

TEST(DatasetIo, RoundTripIsBitExact) {
    auto ds = random_dataset(60, 3);
    std::stringstream ss;
    write_dataset(ss, ds);
    auto back = read_dataset(ss);
    ASSERT_EQ(back.size(), ds.size());
    EXPECT_EQ(back.sim_id(), ds.sim_id());
    EXPECT_EQ(back.t_max(), ds.t_max());
    EXPECT_EQ(*back.space(), *ds.space());
    EXPECT_EQ(back.sim_config(), ds.sim_config());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back[i].seed, ds[i].seed);
        EXPECT_EQ(back[i].theta.unit(), ds[i].theta.unit());
        EXPECT_EQ(back[i].series, ds[i].series);
        EXPECT_EQ(back[i].diverged, ds[i].diverged);
    }
    std::stringstream again;
    write_dataset(again, back);
    std::stringstream first;
    write_dataset(first, ds);
    EXPECT_EQ(again.str(), first.str());
}

TEST(DatasetIo, HeaderThenCsvRows) {
    auto space = make_space({0.0, 0.0}, {1.0, 1.0}, {"g2", "b2"});
    Dataset ds(space, "bh", 4);
    ds.append({ParamVector({0.5, 0.25}, space), TimeSeries({0.1, 2.0}), 7, "bh", false});
    std::stringstream ss;
    write_dataset(ss, ds);
    std::string header, row;
    std::getline(ss, header);
    std::getline(ss, row);
    auto j = nlohmann::json::parse(header);
    EXPECT_EQ(j["records"], 1);
    EXPECT_EQ(j["t_max"], 4);
    EXPECT_EQ(j["sim_id"], "bh");
    EXPECT_EQ(row, "7,0.5,0.25,2,0.10000000000000001,2");
}

TEST(DatasetIo, TruncatedFileIsAnIoError) {
    auto ds = random_dataset(5, 4);
    std::stringstream ss;
    write_dataset(ss, ds);
    std::string text = ss.str();
    text.resize(text.rfind('\n', text.size() - 2) + 1);
    std::stringstream cut(text);
    EXPECT_THROW(read_dataset(cut), IoError);
}

TEST(DatasetIo, BadNumberReportsLine) {
    std::stringstream ss;
    ss << R"({"format":"antr-dataset/1","sim_id":"bh","t_max":3,"records":1,)"
       << R"("space":{"lower":[0],"upper":[1],"names":["a"]}})" << '\n'
       << "1,0.5,2,1.0,abc\n";
    try {
        read_dataset(ss);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(DatasetIo, MissingFile) { EXPECT_THROW(load_dataset("/nonexistent/dir/x.ds"), IoError); }
