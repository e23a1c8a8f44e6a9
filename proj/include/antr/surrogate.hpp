#pragma once

// Amortized posterior q(theta | x): a fully connected embedding network over
// the zero-padded series followed by a diagonal-Gaussian mixture head.
// Densities live on unit-cube coordinates.

#include "antr/core.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace antr {

/// Axis-aligned box in unit coordinates.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    static Box unit(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

    std::size_t dim() const { return lo.size(); }
    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i])
                return false;
        return true;
    }
    double width(std::size_t i) const { return hi[i] - lo[i]; }
};

inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178; // 0.5 * ln(2 pi)

struct DenseLayer {
    Eigen::MatrixXd W; // out x in
    Eigen::VectorXd b; // out
};

/// Trainable parameters: embedding layers followed by the mixture head.
/// Also used as the shape of gradients and optimizer moments.
struct NetParams {
    std::vector<DenseLayer> embedding;
    DenseLayer head;

    NetParams zeros_like() const {
        NetParams z;
        for (const auto& l : embedding)
            z.embedding.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()), Eigen::VectorXd::Zero(l.b.size())});
        z.head = {Eigen::MatrixXd::Zero(head.W.rows(), head.W.cols()), Eigen::VectorXd::Zero(head.b.size())};
        return z;
    }

    /// Visits parameter blocks in declared order: each embedding layer
    /// (W column-major, then b), then the head (W, then b).
    template <class Fn>
    void for_each_block(Fn&& fn) {
        for (auto& l : embedding) {
            fn(l.W.data(), static_cast<std::size_t>(l.W.size()));
            fn(l.b.data(), static_cast<std::size_t>(l.b.size()));
        }
        fn(head.W.data(), static_cast<std::size_t>(head.W.size()));
        fn(head.b.data(), static_cast<std::size_t>(head.b.size()));
    }
    template <class Fn>
    void for_each_block(Fn&& fn) const {
        const_cast<NetParams*>(this)->for_each_block(
            [&](double* p, std::size_t n) { fn(static_cast<const double*>(p), n); });
    }

    std::size_t count() const {
        std::size_t n = 0;
        for_each_block([&](const double*, std::size_t k) { n += k; });
        return n;
    }
};

struct Architecture {
    std::size_t t_max = 1000;
    std::vector<std::size_t> widths{256, 128, 64, 16}; // hidden..., embedding
    std::size_t components = 8;
    std::size_t dim = 2;

    std::size_t embedding_dim() const { return widths.empty() ? t_max : widths.back(); }
    std::size_t head_outputs() const { return components * (1 + 2 * dim); }

    void validate() const {
        if (t_max < 1 || components < 1 || dim < 1)
            throw ConfigError("architecture: t_max, components and dim must be positive");
        for (auto w : widths)
            if (w < 1)
                throw ConfigError("architecture: layer widths must be positive");
    }

    static Architecture bh_default(std::size_t dim = 2) { return {1000, {256, 128, 64, 16}, 8, dim}; }
    static Architecture pgps_default() { return {3600, {512, 256, 128, 64, 64}, 8, 6}; }
};

struct TrainMeta {
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    std::uint64_t seed = 0;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
};

/// Mixture parameters for one conditioning input.
struct Mixture {
    std::size_t K = 0, d = 0;
    std::vector<double> log_weight; // K
    std::vector<double> mean;       // K*d, component-major
    std::vector<double> log_sigma;  // K*d, clamped

    double weight(std::size_t k) const { return std::exp(log_weight[k]); }
    double mu(std::size_t k, std::size_t i) const { return mean[k * d + i]; }
    double sigma(std::size_t k, std::size_t i) const { return std::exp(log_sigma[k * d + i]); }

    /// log sum_k w_k N(theta; mu_k, diag sigma_k^2), evaluated with max-subtraction.
    double log_prob(std::span<const double> theta) const {
        double top = -std::numeric_limits<double>::infinity();
        double comp[64];
        std::vector<double> big;
        double* lp = comp;
        if (K > 64) {
            big.resize(K);
            lp = big.data();
        }
        for (std::size_t k = 0; k < K; ++k) {
            double acc = log_weight[k];
            for (std::size_t i = 0; i < d; ++i) {
                const double s = log_sigma[k * d + i];
                const double u = (theta[i] - mean[k * d + i]) * std::exp(-s);
                acc += -0.5 * u * u - s - kHalfLog2Pi;
            }
            lp[k] = acc;
            top = std::max(top, acc);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            sum += std::exp(lp[k] - top);
        return top + std::log(sum);
    }
};

class PosteriorModel {
public:
    PosteriorModel() = default;

    PosteriorModel(Architecture arch, SpacePtr space, std::uint64_t init_seed) : arch_(std::move(arch)), space_(std::move(space)) {
        arch_.validate();
        if (!space_ || space_->dim() != arch_.dim)
            throw ConfigError("PosteriorModel: space dimension does not match architecture");
        Rng rng = rng_stream(init_seed, Purpose::Init);
        std::size_t in = arch_.t_max;
        for (std::size_t w : arch_.widths) {
            DenseLayer l{Eigen::MatrixXd(w, in), Eigen::VectorXd::Zero(w)};
            const double scale = std::sqrt(2.0 / static_cast<double>(in));
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                for (Eigen::Index r = 0; r < l.W.rows(); ++r)
                    l.W(r, c) = scale * rng.normal();
            params_.embedding.push_back(std::move(l));
            in = w;
        }
        const std::size_t K = arch_.components, d = arch_.dim;
        DenseLayer h{Eigen::MatrixXd(arch_.head_outputs(), in), Eigen::VectorXd::Zero(arch_.head_outputs())};
        const double hs = 0.1 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index c = 0; c < h.W.cols(); ++c)
            for (Eigen::Index r = 0; r < h.W.rows(); ++r)
                h.W(r, c) = hs * rng.normal();
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < d; ++i) {
                h.b(K + k * d + i) = rng.uniform();               // means spread over the cube
                h.b(K + K * d + k * d + i) = std::log(0.25);       // broad initial components
            }
        params_.head = std::move(h);
    }

    const Architecture& arch() const { return arch_; }
    const SpacePtr& space() const { return space_; }
    std::size_t t_max() const { return arch_.t_max; }
    std::size_t dim() const { return arch_.dim; }
    std::size_t components() const { return arch_.components; }

    NetParams& params() { return params_; }
    const NetParams& params() const { return params_; }
    TrainMeta& meta() { return meta_; }
    const TrainMeta& meta() const { return meta_; }

    double input_offset() const { return input_offset_; }
    double input_scale() const { return input_scale_; }
    void set_input_normalization(double offset, double scale) {
        if (!std::isfinite(offset) || !(scale > 0.0) || !std::isfinite(scale))
            throw ConfigError("input normalization: need finite offset and positive scale");
        input_offset_ = offset;
        input_scale_ = scale;
    }

    /// Padded, normalized network input. Real entries map to
    /// (x - offset) / scale; padding stays exactly zero.
    Eigen::VectorXd input_vector(const TimeSeries& series) const {
        if (series.length() > arch_.t_max)
            throw BoundsError("embed: series length " + std::to_string(series.length()) + " exceeds t_max " +
                              std::to_string(arch_.t_max));
        const auto padded = pad(series, arch_.t_max);
        Eigen::VectorXd x(arch_.t_max);
        for (std::size_t i = 0; i < arch_.t_max; ++i)
            x(static_cast<Eigen::Index>(i)) = padded.mask[i] ? (padded.values[i] - input_offset_) / input_scale_ : 0.0;
        return x;
    }

    /// Applies embedding layers [from, to) to a batch (one column per
    /// sample). Every layer but the last is followed by a ReLU.
    Eigen::MatrixXd forward_layers(const Eigen::MatrixXd& H, std::size_t from, std::size_t to) const {
        const std::size_t L = params_.embedding.size();
        if (from > to || to > L)
            throw ConfigError("forward_layers: bad layer range");
        Eigen::MatrixXd h = H;
        for (std::size_t l = from; l < to; ++l) {
            const auto& layer = params_.embedding[l];
            Eigen::MatrixXd a = layer.W * h;
            a.colwise() += layer.b;
            if (l + 1 < L)
                a = a.cwiseMax(0.0);
            h = std::move(a);
        }
        return h;
    }

    std::size_t depth() const { return params_.embedding.size(); }

    /// Forward pass of the embedding network on a batch of padded inputs.
    Eigen::MatrixXd embed_batch(const Eigen::MatrixXd& X) const { return forward_layers(X, 0, depth()); }

    Eigen::VectorXd embed(const TimeSeries& series) const {
        Eigen::MatrixXd X = input_vector(series);
        return embed_batch(X).col(0);
    }

    /// Mixture parameters from an embedding vector.
    Mixture mixture(const Eigen::VectorXd& z) const {
        const std::size_t K = arch_.components, d = arch_.dim;
        Eigen::VectorXd out = params_.head.W * z + params_.head.b;
        Mixture m;
        m.K = K;
        m.d = d;
        m.log_weight.resize(K);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k)
            top = std::max(top, out(static_cast<Eigen::Index>(k)));
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            sum += std::exp(out(static_cast<Eigen::Index>(k)) - top);
        const double lse = top + std::log(sum);
        for (std::size_t k = 0; k < K; ++k)
            m.log_weight[k] = out(static_cast<Eigen::Index>(k)) - lse;
        m.mean.resize(K * d);
        m.log_sigma.resize(K * d);
        for (std::size_t j = 0; j < K * d; ++j) {
            m.mean[j] = out(static_cast<Eigen::Index>(K + j));
            m.log_sigma[j] = std::clamp(out(static_cast<Eigen::Index>(K + K * d + j)), kLogSigmaMin, kLogSigmaMax);
        }
        return m;
    }

    Mixture mixture(const TimeSeries& series) const { return mixture(embed(series)); }

    double log_prob(const ParamVector& theta, const TimeSeries& series) const {
        if (theta.dim() != arch_.dim)
            throw ConfigError("log_prob: dimension mismatch");
        return mixture(series).log_prob(theta.unit());
    }

private:
    Architecture arch_;
    SpacePtr space_;
    NetParams params_;
    TrainMeta meta_;
    double input_offset_ = 0.0;
    double input_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SampleResult {
    std::vector<std::vector<double>> points;
    std::size_t proposals = 0;
    bool clamped = false; // acceptance fell below 0.1% and the fallback was used
};

inline constexpr std::size_t kMaxRejectionProposals = 1000000;

/// Ancestral sampling restricted to `box` by rejection. If after 10^6
/// proposals the acceptance rate is below 0.1%, the remaining samples are
/// clamped coordinate-wise into the box.
inline SampleResult sample_mixture(const Mixture& m, std::size_t n, Rng& rng, const Box& box) {
    SampleResult res;
    res.points.reserve(n);
    std::vector<double> w(m.K);
    for (std::size_t k = 0; k < m.K; ++k)
        w[k] = m.weight(k);
    std::vector<double> x(m.d);
    auto propose = [&] {
        double u = rng.uniform();
        std::size_t k = 0;
        for (; k + 1 < m.K; ++k) {
            if (u < w[k])
                break;
            u -= w[k];
        }
        for (std::size_t i = 0; i < m.d; ++i)
            x[i] = m.mu(k, i) + m.sigma(k, i) * rng.normal();
        ++res.proposals;
    };
    while (res.points.size() < n) {
        propose();
        if (box.contains(x)) {
            res.points.push_back(x);
            continue;
        }
        if (res.proposals >= kMaxRejectionProposals &&
            static_cast<double>(res.points.size()) < 1e-3 * static_cast<double>(res.proposals)) {
            res.clamped = true;
            while (res.points.size() < n) {
                for (std::size_t i = 0; i < m.d; ++i)
                    x[i] = std::clamp(x[i], box.lo[i], box.hi[i]);
                res.points.push_back(x);
                if (res.points.size() < n)
                    propose();
            }
        }
    }
    return res;
}

inline std::vector<ParamVector> sample_posterior(const PosteriorModel& model, const TimeSeries& series, std::size_t n,
                                                 Rng& rng, bool* clamped = nullptr) {
    if (n < 1)
        throw ConfigError("sample_posterior: n must be >= 1");
    auto res = sample_mixture(model.mixture(series), n, rng, Box::unit(model.dim()));
    if (clamped)
        *clamped = res.clamped;
    std::vector<ParamVector> out;
    out.reserve(n);
    for (auto& p : res.points)
        out.emplace_back(std::move(p), model.space());
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: one JSON header line, then the raw little-endian float64
// parameters in declared block order.
// ---------------------------------------------------------------------------

inline void save_model(std::ostream& os, const PosteriorModel& model) {
    const auto& a = model.arch();
    nlohmann::json h;
    h["format"] = "antr-model/1";
    h["architecture"] = {{"t_max", a.t_max}, {"widths", a.widths}, {"components", a.components}, {"dim", a.dim}};
    h["space"] = {{"lower", model.space()->lower()}, {"upper", model.space()->upper()}, {"names", model.space()->names()}};
    h["input_offset"] = model.input_offset();
    h["input_scale"] = model.input_scale();
    h["n_params"] = model.params().count();
    h["layout"] = "per layer: W column-major (out x in), then b; embedding layers then head";
    const auto& m = model.meta();
    h["train"] = {{"epochs", m.epochs}, {"best_epoch", m.best_epoch}, {"seed", m.seed},
                  {"train_loss", m.train_loss}, {"val_loss", m.val_loss}};
    // Doubles are stored through their hex text in the header so that the
    // normalization constants round-trip exactly as well.
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", model.input_offset());
    h["input_offset_hex"] = buf;
    std::snprintf(buf, sizeof buf, "%a", model.input_scale());
    h["input_scale_hex"] = buf;
    os << h.dump() << '\n';
    model.params().for_each_block([&](const double* p, std::size_t n) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    });
    if (!os)
        throw IoError("model write failed");
}

namespace detail {
inline PosteriorModel model_from_header(const nlohmann::json& h, std::istream& is);
} // namespace detail

inline PosteriorModel load_model(std::istream& is) {
    std::string line;
    if (!std::getline(is, line))
        throw IoError("model: missing header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model header: ") + e.what());
    }
    if (h.value("format", "") != "antr-model/1")
        throw IoError("model: unsupported format tag");
    try {
        return detail::model_from_header(h, is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model header: ") + e.what());
    }
}

namespace detail {

inline PosteriorModel model_from_header(const nlohmann::json& h, std::istream& is) {
    Architecture a;
    const auto& ja = h.at("architecture");
    a.t_max = ja.at("t_max").get<std::size_t>();
    a.widths = ja.at("widths").get<std::vector<std::size_t>>();
    a.components = ja.at("components").get<std::size_t>();
    a.dim = ja.at("dim").get<std::size_t>();
    auto space = make_space(h.at("space").at("lower").get<std::vector<double>>(),
                            h.at("space").at("upper").get<std::vector<double>>(),
                            h.at("space").at("names").get<std::vector<std::string>>());
    PosteriorModel model(a, space, 0);
    const double off = std::strtod(h.at("input_offset_hex").get<std::string>().c_str(), nullptr);
    const double scl = std::strtod(h.at("input_scale_hex").get<std::string>().c_str(), nullptr);
    model.set_input_normalization(off, scl);
    if (h.at("n_params").get<std::size_t>() != model.params().count())
        throw IoError("model: parameter count does not match architecture");
    model.params().for_each_block([&](double* p, std::size_t n) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    });
    if (!is)
        throw IoError("model: truncated parameter block");
    auto& m = model.meta();
    const auto& jt = h.at("train");
    m.epochs = jt.at("epochs").get<std::size_t>();
    m.best_epoch = jt.at("best_epoch").get<std::size_t>();
    m.seed = jt.at("seed").get<std::uint64_t>();
    m.train_loss = jt.at("train_loss").get<std::vector<double>>();
    m.val_loss = jt.at("val_loss").get<std::vector<double>>();
    return model;
}

} // namespace detail

inline void save_model(const std::string& path, const PosteriorModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    save_model(os, model);
}

inline PosteriorModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open model '" + path + "'");
    return load_model(is);
}

} // namespace antr
