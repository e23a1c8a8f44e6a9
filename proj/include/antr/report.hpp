#pragma once

// Comparison tables over calibration result sets. The first set is the
// reference: budget-to-match and win-tie-loss rows are computed from its
// point of view.

#include "antr/metrics.hpp"

#include <iomanip>
#include <map>
#include <sstream>

namespace antr::report {

struct RunRow {
    std::string problem;
    std::size_t repeat = 0;
    double mse = 0.0;
    double distance = 0.0;
    bool success = false;
    double best_fitness = 0.0;
    std::size_t budget = 0;
    std::vector<double> running_best; // may be empty when traces are unavailable
};

struct ResultSet {
    std::string label;
    std::vector<RunRow> runs;
};

struct Cell {
    double mean = 0.0;
    double sd = 0.0;
};

struct Report {
    std::vector<std::string> labels;
    std::vector<std::string> problems;
    std::vector<std::vector<Cell>> mse;      // [problem][set]
    std::vector<std::vector<Cell>> distance; // [problem][set]
    std::vector<std::vector<std::size_t>> successes;
    std::size_t repeats = 0;
    bool comparison = false;
    // comparison rows, present only with two or more sets
    std::vector<double> friedman_mse;
    std::vector<double> friedman_distance;
    std::vector<metrics::WinTieLoss> wtl_mse;      // [set], index 0 unused
    std::vector<metrics::WinTieLoss> wtl_distance; // [set], index 0 unused
    // [problem][set]; nullopt = never matched (">100%"), index 0 unused
    std::vector<std::vector<std::optional<double>>> budget_to_match;
};

namespace detail {

inline std::map<std::string, std::vector<const RunRow*>> by_problem(const ResultSet& s) {
    std::map<std::string, std::vector<const RunRow*>> out;
    for (const auto& r : s.runs)
        out[r.problem].push_back(&r);
    for (auto& [name, rows] : out)
        std::sort(rows.begin(), rows.end(), [](const RunRow* a, const RunRow* b) { return a->repeat < b->repeat; });
    return out;
}

inline std::string pct(const std::optional<double>& v) {
    if (!v)
        return ">100%";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << *v << '%';
    return os.str();
}

inline std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace detail

/// Builds every table. Problem order follows the first set's first
/// appearance; all sets must cover the same problems with the same repeats.
inline Report build(const std::vector<ResultSet>& sets) {
    if (sets.empty())
        throw ConfigError("report: no result sets");
    Report rep;
    for (const auto& r : sets.front().runs)
        if (std::find(rep.problems.begin(), rep.problems.end(), r.problem) == rep.problems.end())
            rep.problems.push_back(r.problem);
    if (rep.problems.empty())
        throw ConfigError("report: '" + sets.front().label + "' contains no runs");

    std::vector<std::map<std::string, std::vector<const RunRow*>>> grouped;
    for (const auto& s : sets) {
        rep.labels.push_back(s.label);
        grouped.push_back(detail::by_problem(s));
        const auto& g = grouped.back();
        if (g.size() != rep.problems.size())
            throw ConfigError("report: '" + s.label + "' covers " + std::to_string(g.size()) + " problems, '" +
                              sets.front().label + "' covers " + std::to_string(rep.problems.size()));
        for (const auto& p : rep.problems) {
            auto it = g.find(p);
            if (it == g.end())
                throw ConfigError("report: problem '" + p + "' is missing from '" + s.label + "'");
            const std::size_t n = it->second.size();
            if (rep.repeats == 0)
                rep.repeats = n;
            if (n != rep.repeats)
                throw ConfigError("report: problem '" + p + "' has " + std::to_string(n) + " runs in '" + s.label +
                                  "', expected " + std::to_string(rep.repeats));
        }
    }

    const std::size_t A = sets.size();
    auto column = [&](std::size_t set, const std::string& p, double RunRow::*field) {
        std::vector<double> v;
        for (const RunRow* r : grouped[set].at(p))
            v.push_back(r->*field);
        return v;
    };
    auto cell = [](const std::vector<double>& v) {
        return Cell{metrics::mean(v), v.size() > 1 ? metrics::stddev(v) : 0.0};
    };
    for (const auto& p : rep.problems) {
        std::vector<Cell> m, d;
        std::vector<std::size_t> s;
        for (std::size_t a = 0; a < A; ++a) {
            m.push_back(cell(column(a, p, &RunRow::mse)));
            d.push_back(cell(column(a, p, &RunRow::distance)));
            std::size_t k = 0;
            for (const RunRow* r : grouped[a].at(p))
                k += r->success ? 1 : 0;
            s.push_back(k);
        }
        rep.mse.push_back(std::move(m));
        rep.distance.push_back(std::move(d));
        rep.successes.push_back(std::move(s));
    }

    rep.comparison = A > 1;
    if (!rep.comparison)
        return rep;

    std::vector<std::vector<double>> mse_table, dist_table;
    for (std::size_t i = 0; i < rep.problems.size(); ++i) {
        std::vector<double> mr, dr;
        for (std::size_t a = 0; a < A; ++a) {
            mr.push_back(rep.mse[i][a].mean);
            dr.push_back(rep.distance[i][a].mean);
        }
        mse_table.push_back(std::move(mr));
        dist_table.push_back(std::move(dr));
    }
    rep.friedman_mse = metrics::friedman_ranks(mse_table, true);
    rep.friedman_distance = metrics::friedman_ranks(dist_table, true);

    rep.wtl_mse.resize(A);
    rep.wtl_distance.resize(A);
    for (std::size_t a = 1; a < A; ++a)
        for (const auto& p : rep.problems) {
            rep.wtl_mse[a].add(metrics::wilcoxon_signed_rank(column(0, p, &RunRow::mse), column(a, p, &RunRow::mse)).verdict);
            rep.wtl_distance[a].add(
                metrics::wilcoxon_signed_rank(column(0, p, &RunRow::distance), column(a, p, &RunRow::distance)).verdict);
        }

    // Budget the reference needs to reach each baseline's final best, paired
    // by repeat; the per-problem value is the median with "never" as +inf.
    for (const auto& p : rep.problems) {
        std::vector<std::optional<double>> row(A);
        const auto& ref = grouped[0].at(p);
        for (std::size_t a = 1; a < A; ++a) {
            const auto& other = grouped[a].at(p);
            std::vector<double> v;
            for (std::size_t k = 0; k < ref.size(); ++k) {
                if (ref[k]->running_best.empty())
                    throw ConfigError("report: '" + sets.front().label + "' has no trace for problem '" + p + "'");
                auto b = metrics::budget_to_match(ref[k]->running_best, other[k]->best_fitness, ref[k]->budget);
                v.push_back(b ? *b : std::numeric_limits<double>::infinity());
            }
            const double med = metrics::median(v);
            if (std::isfinite(med))
                row[a] = med;
        }
        rep.budget_to_match.push_back(std::move(row));
    }
    return rep;
}

/// Fixed-width plain-text rendering of every table.
inline std::string render_text(const Report& rep) {
    std::ostringstream os;
    std::size_t w0 = 8;
    for (const auto& p : rep.problems)
        w0 = std::max(w0, p.size() + 2);
    const std::size_t w = 24;
    auto header = [&](const std::string& title, std::size_t first_col) {
        os << title << '\n' << std::left << std::setw(static_cast<int>(w0)) << "problem";
        for (std::size_t a = first_col; a < rep.labels.size(); ++a)
            os << std::setw(static_cast<int>(w)) << rep.labels[a];
        os << '\n';
    };
    auto cells = [&](const std::string& title, const std::vector<std::vector<Cell>>& t,
                     const std::vector<double>& ranks, const std::vector<metrics::WinTieLoss>& wtl) {
        header(title, 0);
        for (std::size_t i = 0; i < rep.problems.size(); ++i) {
            os << std::setw(static_cast<int>(w0)) << rep.problems[i];
            for (const auto& c : t[i])
                os << std::setw(static_cast<int>(w)) << (detail::sci(c.mean) + " ± " + detail::sci(c.sd));
            os << '\n';
        }
        if (rep.comparison) {
            os << std::setw(static_cast<int>(w0)) << "Friedman";
            for (double r : ranks) {
                std::ostringstream v;
                v << std::fixed << std::setprecision(2) << r;
                os << std::setw(static_cast<int>(w)) << v.str();
            }
            os << '\n' << std::setw(static_cast<int>(w0)) << "W-T-L" << std::setw(static_cast<int>(w)) << "-";
            for (std::size_t a = 1; a < wtl.size(); ++a)
                os << std::setw(static_cast<int>(w)) << wtl[a].str();
            os << '\n';
        }
        os << '\n';
    };
    cells("MSE (mean ± sd)", rep.mse, rep.friedman_mse, rep.wtl_mse);
    cells("Parameter distance (mean ± sd)", rep.distance, rep.friedman_distance, rep.wtl_distance);

    header("Successes", 0);
    for (std::size_t i = 0; i < rep.problems.size(); ++i) {
        os << std::setw(static_cast<int>(w0)) << rep.problems[i];
        for (auto k : rep.successes[i])
            os << std::setw(static_cast<int>(w)) << (std::to_string(k) + "/" + std::to_string(rep.repeats));
        os << '\n';
    }
    os << '\n';

    if (rep.comparison) {
        header("Budget for " + rep.labels[0] + " to match each final best (median)", 1);
        for (std::size_t i = 0; i < rep.problems.size(); ++i) {
            os << std::setw(static_cast<int>(w0)) << rep.problems[i];
            for (std::size_t a = 1; a < rep.labels.size(); ++a)
                os << std::setw(static_cast<int>(w)) << detail::pct(rep.budget_to_match[i][a]);
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

/// One CSV per table, keyed by file stem.
inline std::map<std::string, std::string> render_csv(const Report& rep) {
    std::map<std::string, std::string> out;
    auto head = [&](std::ostringstream& os, const std::string& suffix, std::size_t first) {
        os << "problem";
        for (std::size_t a = first; a < rep.labels.size(); ++a)
            os << ',' << detail::csv_field(rep.labels[a] + suffix);
        os << '\n';
    };
    auto cells = [&](const std::string& stem, const std::vector<std::vector<Cell>>& t, const std::vector<double>& ranks,
                     const std::vector<metrics::WinTieLoss>& wtl) {
        std::ostringstream os;
        os << std::setprecision(17) << "problem";
        for (const auto& l : rep.labels)
            os << ',' << detail::csv_field(l + "_mean") << ',' << detail::csv_field(l + "_sd");
        os << '\n';
        for (std::size_t i = 0; i < rep.problems.size(); ++i) {
            os << detail::csv_field(rep.problems[i]);
            for (const auto& c : t[i])
                os << ',' << c.mean << ',' << c.sd;
            os << '\n';
        }
        if (rep.comparison) {
            os << "Friedman";
            for (double r : ranks)
                os << ',' << r << ',';
            os << "\nW-T-L,,";
            for (std::size_t a = 1; a < wtl.size(); ++a)
                os << ',' << wtl[a].str() << ',';
            os << '\n';
        }
        out[stem] = os.str();
    };
    cells("mse", rep.mse, rep.friedman_mse, rep.wtl_mse);
    cells("distance", rep.distance, rep.friedman_distance, rep.wtl_distance);

    std::ostringstream s;
    head(s, "_successes", 0);
    for (std::size_t i = 0; i < rep.problems.size(); ++i) {
        s << detail::csv_field(rep.problems[i]);
        for (auto k : rep.successes[i])
            s << ',' << k;
        s << '\n';
    }
    out["success"] = s.str();

    if (rep.comparison) {
        std::ostringstream b;
        head(b, "", 1);
        for (std::size_t i = 0; i < rep.problems.size(); ++i) {
            b << detail::csv_field(rep.problems[i]);
            for (std::size_t a = 1; a < rep.labels.size(); ++a)
                b << ',' << detail::pct(rep.budget_to_match[i][a]);
            b << '\n';
        }
        out["budget_to_match"] = b.str();
    }
    return out;
}

} // namespace antr::report
