#pragma once

// Append-only simulation database and its on-disk form: one line of JSON
// metadata followed by one CSV row per record
// (seed, d unit coordinates, T_obs, T_obs values), 17 significant digits.

#include "antr/core.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace antr {

struct SimRecord {
    ParamVector theta;
    TimeSeries series;
    std::uint64_t seed = 0;
    std::string sim_id;
    bool diverged = false;
};

class Dataset {
public:
    Dataset() = default;
    Dataset(SpacePtr space, std::string sim_id, std::size_t t_max, nlohmann::json sim_config = nlohmann::json::object())
        : space_(std::move(space)), sim_id_(std::move(sim_id)), t_max_(t_max), sim_config_(std::move(sim_config)) {
        if (!space_)
            throw ConfigError("Dataset: null space");
        if (t_max_ == 0)
            throw ConfigError("Dataset: t_max must be positive");
    }

    void append(SimRecord rec) {
        if (!same_space(rec.theta.space(), space_))
            throw ConfigError("Dataset::append: record space differs from dataset space");
        if (rec.sim_id != sim_id_)
            throw ConfigError("Dataset::append: record sim_id '" + rec.sim_id + "' differs from '" + sim_id_ + "'");
        if (rec.series.length() > t_max_)
            throw BoundsError("Dataset::append: series length " + std::to_string(rec.series.length()) +
                              " exceeds t_max " + std::to_string(t_max_));
        records_.push_back(std::move(rec));
    }

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const SimRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::vector<SimRecord>& records() const { return records_; }
    const SpacePtr& space() const { return space_; }
    const std::string& sim_id() const { return sim_id_; }
    std::size_t t_max() const { return t_max_; }
    const nlohmann::json& sim_config() const { return sim_config_; }

private:
    SpacePtr space_;
    std::string sim_id_;
    std::size_t t_max_ = 0;
    nlohmann::json sim_config_ = nlohmann::json::object();
    std::vector<SimRecord> records_;
};

namespace detail {

inline void put_double(std::string& out, double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    out.append(buf, res.ptr);
}

inline std::string fmt_double(double v) {
    std::string s;
    put_double(s, v);
    return s;
}

inline double parse_double(std::string_view s, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("dataset line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::size_t line) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("dataset line " + std::to_string(line) + ": bad integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

} // namespace detail

inline nlohmann::json space_to_json(const ParamSpace& s) {
    return {{"lower", s.lower()}, {"upper", s.upper()}, {"names", s.names()}};
}

inline SpacePtr space_from_json(const nlohmann::json& j) {
    return make_space(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>(),
                      j.at("names").get<std::vector<std::string>>());
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    nlohmann::json header;
    header["format"] = "antr-dataset/1";
    header["sim_id"] = ds.sim_id();
    header["t_max"] = ds.t_max();
    header["records"] = ds.size();
    header["space"] = space_to_json(*ds.space());
    header["sim_config"] = ds.sim_config();
    std::vector<std::size_t> diverged;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds[i].diverged)
            diverged.push_back(i);
    header["diverged"] = diverged;
    os << header.dump() << '\n';

    std::string line;
    for (const auto& r : ds.records()) {
        line.clear();
        line += std::to_string(r.seed);
        for (double u : r.theta.unit()) {
            line += ',';
            detail::put_double(line, u);
        }
        line += ',';
        line += std::to_string(r.series.length());
        for (double v : r.series.values()) {
            line += ',';
            detail::put_double(line, v);
        }
        line += '\n';
        os << line;
    }
}

inline Dataset read_dataset(std::istream& is) {
    std::string line;
    if (!std::getline(is, line))
        throw IoError("dataset: missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset header: ") + e.what());
    }
    if (header.value("format", "") != "antr-dataset/1")
        throw IoError("dataset: unsupported format tag");
    auto space = space_from_json(header.at("space"));
    Dataset ds(space, header.at("sim_id").get<std::string>(), header.at("t_max").get<std::size_t>(),
               header.value("sim_config", nlohmann::json::object()));
    const auto n = header.at("records").get<std::size_t>();
    std::vector<bool> diverged(n, false);
    for (auto idx : header.value("diverged", std::vector<std::size_t>{}))
        if (idx < n)
            diverged[idx] = true;

    const std::size_t d = space->dim();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line))
            throw IoError("dataset: expected " + std::to_string(n) + " records, found " + std::to_string(i));
        const std::size_t lineno = i + 2;
        auto cells = detail::split_csv(line);
        if (cells.size() < d + 2)
            throw IoError("dataset line " + std::to_string(lineno) + ": too few columns");
        SimRecord rec;
        rec.seed = detail::parse_u64(cells[0], lineno);
        std::vector<double> u(d);
        for (std::size_t k = 0; k < d; ++k)
            u[k] = detail::parse_double(cells[1 + k], lineno);
        rec.theta = ParamVector(std::move(u), space);
        const auto t = detail::parse_u64(cells[1 + d], lineno);
        if (cells.size() != d + 2 + t)
            throw IoError("dataset line " + std::to_string(lineno) + ": declared length " + std::to_string(t) +
                          " but found " + std::to_string(cells.size() - d - 2) + " values");
        std::vector<double> v(t);
        for (std::size_t k = 0; k < t; ++k)
            v[k] = detail::parse_double(cells[2 + d + k], lineno);
        rec.series = TimeSeries(std::move(v));
        rec.sim_id = ds.sim_id();
        rec.diverged = diverged[i];
        ds.append(std::move(rec));
    }
    return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_dataset(os, ds);
    if (!os)
        throw IoError("write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open dataset '" + path + "'");
    return read_dataset(is);
}

} // namespace antr
