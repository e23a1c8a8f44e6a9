#pragma once

// Shared domain types: parameter spaces, normalized parameter vectors,
// time series with zero padding, and the seeded random stream contract.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace antr {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct BoundsError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// ParamSpace / ParamVector
// ---------------------------------------------------------------------------

class ParamSpace {
public:
    ParamSpace(std::vector<double> lower, std::vector<double> upper, std::vector<std::string> names)
        : lower_(std::move(lower)), upper_(std::move(upper)), names_(std::move(names)) {
        if (lower_.empty())
            throw ConfigError("ParamSpace: dimension must be positive");
        if (lower_.size() != upper_.size() || lower_.size() != names_.size())
            throw ConfigError("ParamSpace: lower, upper and names must have equal length");
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
                throw ConfigError("ParamSpace: need lower < upper for '" + names_[i] + "'");
        }
    }

    std::size_t dim() const { return lower_.size(); }
    const std::vector<double>& lower() const { return lower_; }
    const std::vector<double>& upper() const { return upper_; }
    const std::vector<std::string>& names() const { return names_; }
    double width(std::size_t i) const { return upper_[i] - lower_[i]; }

    friend bool operator==(const ParamSpace&, const ParamSpace&) = default;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
    std::vector<std::string> names_;
};

using SpacePtr = std::shared_ptr<const ParamSpace>;

inline SpacePtr make_space(std::vector<double> lower, std::vector<double> upper,
                           std::vector<std::string> names) {
    return std::make_shared<const ParamSpace>(std::move(lower), std::move(upper), std::move(names));
}

inline bool same_space(const SpacePtr& a, const SpacePtr& b) {
    return a == b || (a && b && *a == *b);
}

/// A point of the unit hypercube together with the space that gives it
/// physical meaning. All search arithmetic happens on `unit()`.
class ParamVector {
public:
    ParamVector() = default;

    ParamVector(std::vector<double> unit, SpacePtr space) : unit_(std::move(unit)), space_(std::move(space)) {
        if (!space_)
            throw ConfigError("ParamVector: null space");
        if (unit_.size() != space_->dim())
            throw ConfigError("ParamVector: dimension mismatch");
        for (std::size_t i = 0; i < unit_.size(); ++i) {
            if (!(unit_[i] >= 0.0 && unit_[i] <= 1.0))
                throw BoundsError("ParamVector: unit coordinate " + std::to_string(i) + " (" +
                                  space_->names()[i] + ") outside [0,1]");
        }
    }

    std::size_t dim() const { return unit_.size(); }
    const std::vector<double>& unit() const { return unit_; }
    double operator[](std::size_t i) const { return unit_[i]; }
    const SpacePtr& space() const { return space_; }

    double physical(std::size_t i) const {
        return space_->lower()[i] + unit_[i] * (space_->upper()[i] - space_->lower()[i]);
    }
    std::vector<double> physical() const {
        std::vector<double> out(unit_.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = physical(i);
        return out;
    }

private:
    std::vector<double> unit_;
    SpacePtr space_;
};

inline ParamVector to_unit(std::span<const double> x_phys, const SpacePtr& space) {
    if (!space)
        throw ConfigError("to_unit: null space");
    if (x_phys.size() != space->dim())
        throw ConfigError("to_unit: expected " + std::to_string(space->dim()) + " coordinates, got " +
                          std::to_string(x_phys.size()));
    std::vector<double> u(x_phys.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double lo = space->lower()[i];
        const double hi = space->upper()[i];
        if (!(x_phys[i] >= lo && x_phys[i] <= hi))
            throw BoundsError("to_unit: coordinate " + std::to_string(i) + " (" + space->names()[i] +
                              " = " + std::to_string(x_phys[i]) + ") outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
        u[i] = std::clamp((x_phys[i] - lo) / (hi - lo), 0.0, 1.0);
    }
    return ParamVector(std::move(u), space);
}

inline ParamVector to_unit(std::initializer_list<double> x_phys, const SpacePtr& space) {
    return to_unit(std::span<const double>(x_phys.begin(), x_phys.size()), space);
}

// ---------------------------------------------------------------------------
// TimeSeries and padding
// ---------------------------------------------------------------------------

class TimeSeries {
public:
    TimeSeries() = default;
    explicit TimeSeries(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t length() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

private:
    std::vector<double> values_;
};

struct PaddedSeries {
    std::vector<double> values;
    std::vector<bool> mask;
};

/// Zero-pads to `t_max`. Padding value is exactly 0.0.
inline PaddedSeries pad(const TimeSeries& series, std::size_t t_max) {
    if (t_max < series.length())
        throw BoundsError("pad: t_max " + std::to_string(t_max) + " shorter than series length " +
                          std::to_string(series.length()));
    PaddedSeries out{std::vector<double>(t_max, 0.0), std::vector<bool>(t_max, false)};
    std::copy(series.values().begin(), series.values().end(), out.values.begin());
    std::fill_n(out.mask.begin(), series.length(), true);
    return out;
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// Mixes a tuple of 64-bit words into one seed (splitmix64 finalizer chain).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL;
    for (std::uint64_t w : words) {
        std::uint64_t z = h ^ (w + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        h = z ^ (z >> 31);
    }
    return h;
}

/// Purpose tags for stream splitting.
enum class Purpose : std::uint64_t {
    Simulation = 1,
    Sampling = 2,
    Training = 3,
    Search = 4,
    Regions = 5,
    Observation = 6,
    Init = 7,
};

/// Deterministic uniform/Gaussian stream keyed by (seed, stream_id).
///
/// Engine: std::mt19937_64 seeded through std::seed_seq over the four 32-bit
/// halves of (seed, stream_id). Uniforms in (0,1) are (k + 0.5) * 2^-53 for the
/// top 53 bits k of one engine output. Gaussians use the Box-Muller transform
/// on two such uniforms; the sine branch is cached for the next call.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream_id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0,1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, n) by rejection (unbiased).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Rng rng_stream(std::uint64_t seed, std::uint64_t stream_id) { return Rng(seed, stream_id); }

inline Rng rng_stream(std::uint64_t seed, Purpose purpose, std::uint64_t index = 0) {
    return Rng(seed, mix_seed({static_cast<std::uint64_t>(purpose), index}));
}

} // namespace antr
