#pragma once

// Calibration metrics and the nonparametric statistics used to compare
// algorithms across problems.

#include "antr/core.hpp"

#include <optional>

namespace antr::metrics {

inline double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw Error("mse: length mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    if (a.empty())
        throw Error("mse: empty series");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double mse(const TimeSeries& a, const TimeSeries& b) { return mse(a.values(), b.values()); }

inline double param_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw Error("param_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// Euclidean distance in unit coordinates.
inline double param_distance(const ParamVector& a, const ParamVector& b) {
    if (!same_space(a.space(), b.space()))
        throw Error("param_distance: vectors belong to different spaces");
    return param_distance(a.unit(), b.unit());
}

/// eps = r * sqrt(d)
inline double success_threshold(std::size_t d, double r) {
    if (d < 1 || !(r > 0.0))
        throw Error("success_threshold: need d >= 1 and r > 0");
    return r * std::sqrt(static_cast<double>(d));
}

struct RunOutcome {
    std::vector<double> theta_hat;
    std::vector<double> theta_true;
    double mse = 0.0;
    double distance = 0.0;
    bool success = false;
    std::vector<double> running_best; // fitness trace (running best per true evaluation)
};

inline RunOutcome make_outcome(std::vector<double> theta_hat, std::vector<double> theta_true, double mse_value,
                               double eps, std::vector<double> running_best = {}) {
    RunOutcome o;
    o.distance = param_distance(theta_hat, theta_true);
    o.theta_hat = std::move(theta_hat);
    o.theta_true = std::move(theta_true);
    o.mse = mse_value;
    o.success = o.distance <= eps;
    o.running_best = std::move(running_best);
    return o;
}

/// Percentage of successful runs.
inline double success_rate(std::span<const RunOutcome> outcomes) {
    if (outcomes.empty())
        throw Error("success_rate: no outcomes");
    std::size_t k = 0;
    for (const auto& o : outcomes)
        k += o.success ? 1 : 0;
    return 100.0 * static_cast<double>(k) / static_cast<double>(outcomes.size());
}

/// Smallest 0-based evaluation index whose running best reaches
/// `baseline_best`, as a percentage of `budget`; nullopt means never (">100%").
inline std::optional<double> budget_to_match(std::span<const double> running_best, double baseline_best,
                                             std::size_t budget) {
    if (running_best.empty())
        throw Error("budget_to_match: empty trace");
    if (budget == 0)
        throw Error("budget_to_match: zero budget");
    for (std::size_t k = 0; k < running_best.size(); ++k)
        if (running_best[k] >= baseline_best)
            return 100.0 * static_cast<double>(k) / static_cast<double>(budget);
    return std::nullopt;
}

/// Ranks 1..n with ties sharing their average rank; smaller value = rank 1
/// when `lower_better`.
inline std::vector<double> average_ranks(std::span<const double> values, bool lower_better) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return lower_better ? values[a] < values[b] : values[a] > values[b];
    });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]])
            ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Average Friedman rank per algorithm over a problems x algorithms table.
inline std::vector<double> friedman_ranks(const std::vector<std::vector<double>>& table, bool lower_better) {
    if (table.empty())
        return {};
    const std::size_t A = table.front().size();
    std::vector<double> sum(A, 0.0);
    for (const auto& row : table) {
        if (row.size() != A)
            throw Error("friedman_ranks: ragged table");
        const auto r = average_ranks(row, lower_better);
        for (std::size_t a = 0; a < A; ++a)
            sum[a] += r[a];
    }
    for (auto& s : sum)
        s /= static_cast<double>(table.size());
    return sum;
}

enum class Verdict { Win, Tie, Loss };

inline const char* verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Win: return "win";
    case Verdict::Tie: return "tie";
    case Verdict::Loss: return "loss";
    }
    return "?";
}

struct WilcoxonResult {
    double w_plus = 0.0;  // rank sum of positive differences x - y
    double w_minus = 0.0; // rank sum of negative differences
    double statistic = 0.0; // min(w_plus, w_minus)
    double p_value = 1.0;
    std::size_t n = 0;    // nonzero differences
    Verdict verdict = Verdict::Tie; // from x's point of view
    bool too_few = false; // fewer than 5 nonzero differences
};

/// Exact two-sided Wilcoxon signed-rank test by enumerating the 2^n sign
/// assignments (as a subset-sum count over doubled ranks, which keeps tied
/// half-ranks integral). `lower_better` orients the verdict.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                           bool lower_better = true, double alpha = 0.05) {
    if (x.size() != y.size())
        throw Error("wilcoxon: paired samples must have equal length");
    std::vector<double> diff;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] - y[i] != 0.0)
            diff.push_back(x[i] - y[i]);
    WilcoxonResult res;
    res.n = diff.size();
    if (res.n > 25)
        throw Error("wilcoxon: exact enumeration supports at most 25 pairs");
    if (res.n < 5) {
        res.too_few = true;
        res.p_value = 1.0;
        res.verdict = Verdict::Tie;
        return res;
    }
    std::vector<double> mag(res.n);
    for (std::size_t i = 0; i < res.n; ++i)
        mag[i] = std::abs(diff[i]);
    const auto ranks = average_ranks(mag, true);
    std::vector<std::size_t> r2(res.n);
    std::size_t total2 = 0;
    std::size_t wplus2 = 0;
    for (std::size_t i = 0; i < res.n; ++i) {
        r2[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
        total2 += r2[i];
        if (diff[i] > 0.0) {
            res.w_plus += ranks[i];
            wplus2 += r2[i];
        } else {
            res.w_minus += ranks[i];
        }
    }
    res.statistic = std::min(res.w_plus, res.w_minus);

    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    for (auto r : r2)
        for (std::size_t s = total2; s >= r; --s) {
            count[s] += count[s - r];
            if (s == r)
                break;
        }
    const double all = std::ldexp(1.0, static_cast<int>(res.n));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total2; ++s) {
        if (s <= wplus2)
            lower += count[s];
        if (s >= wplus2)
            upper += count[s];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    if (res.p_value < alpha) {
        const bool x_smaller = res.w_minus > res.w_plus;
        res.verdict = (x_smaller == lower_better) ? Verdict::Win : Verdict::Loss;
    }
    return res;
}

struct WinTieLoss {
    std::size_t win = 0, tie = 0, loss = 0;

    void add(Verdict v) {
        (v == Verdict::Win ? win : v == Verdict::Tie ? tie : loss) += 1;
    }
    std::string str() const {
        return std::to_string(win) + "-" + std::to_string(tie) + "-" + std::to_string(loss);
    }
};

inline double mean(std::span<const double> v) {
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
inline double stddev(std::span<const double> v) {
    if (v.size() < 2)
        return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace antr::metrics
