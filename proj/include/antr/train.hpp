#pragma once

// Maximum-likelihood training of the posterior model: exact reverse-mode
// gradients of the mean negative log-likelihood, Adam updates, global-norm
// clipping and early stopping on held-out NLL.

#include "antr/dataset.hpp"
#include "antr/surrogate.hpp"

#include <numeric>

namespace antr {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double step_size = 1e-3;
    double clip_norm = 5.0;
    double val_fraction = 0.1;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    // leading embedding layers held fixed; the full layer count fits only the head
    std::size_t frozen_layers = 0;

    void validate() const {
        if (epochs < 1 || batch_size < 1 || patience < 1)
            throw ConfigError("train: epochs, batch_size and patience must be positive");
        if (!(step_size > 0.0) || !(clip_norm > 0.0))
            throw ConfigError("train: step_size and clip_norm must be positive");
        if (!(val_fraction > 0.0 && val_fraction <= 0.5))
            throw ConfigError("train: val_fraction must be in (0, 0.5]");
    }
};

struct TrainReport {
    std::vector<double> train_loss; // mean NLL per epoch on the training split
    std::vector<double> val_loss;   // mean NLL per epoch on the held-out split
    std::size_t best_epoch = 0;     // 1-based
    std::size_t epochs_run = 0;
    std::size_t used_records = 0;
    std::size_t skipped_diverged = 0;
};

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

/// Mean NLL over the columns of `inputs` against `thetas` (d x B). The
/// inputs are the activations entering embedding layer `first_layer` (padded
/// series for 0, embeddings for the layer count). When `grad` is non-null it
/// receives d(loss)/d(params) for the head and layers from `first_layer` on.
inline double nll_and_grad(const PosteriorModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& thetas,
                           NetParams* grad, std::size_t first_layer = 0) {
    const auto& P = model.params();
    const auto B = inputs.cols();
    const std::size_t K = model.components(), d = model.dim();
    const std::size_t L = P.embedding.size();
    if (first_layer > L)
        throw ConfigError("nll_and_grad: first_layer exceeds the layer count");

    // acts[j] is the input of layer first_layer + j; the last entry is the embedding
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(L - first_layer + 1);
    acts.push_back(inputs);
    for (std::size_t l = first_layer; l < L; ++l) {
        Eigen::MatrixXd a = P.embedding[l].W * acts.back();
        a.colwise() += P.embedding[l].b;
        if (l + 1 < L)
            a = a.cwiseMax(0.0);
        acts.push_back(std::move(a));
    }
    const Eigen::MatrixXd& Z = acts.back();
    Eigen::MatrixXd out = P.head.W * Z;
    out.colwise() += P.head.b;

    Eigen::MatrixXd dout;
    if (grad)
        dout.setZero(out.rows(), B);

    const double invB = 1.0 / static_cast<double>(B);
    double total = 0.0;
    std::vector<double> log_alpha(K), lp(K), gamma(K), alpha(K);
    for (Eigen::Index b = 0; b < B; ++b) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k)
            top = std::max(top, out(static_cast<Eigen::Index>(k), b));
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            s += std::exp(out(static_cast<Eigen::Index>(k), b) - top);
        const double lse_a = top + std::log(s);

        double lp_top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            log_alpha[k] = out(static_cast<Eigen::Index>(k), b) - lse_a;
            alpha[k] = std::exp(log_alpha[k]);
            double acc = log_alpha[k];
            for (std::size_t i = 0; i < d; ++i) {
                const auto mi = static_cast<Eigen::Index>(K + k * d + i);
                const auto si = static_cast<Eigen::Index>(K + K * d + k * d + i);
                const double ls = std::clamp(out(si, b), kLogSigmaMin, kLogSigmaMax);
                const double u = (thetas(static_cast<Eigen::Index>(i), b) - out(mi, b)) * std::exp(-ls);
                acc += -0.5 * u * u - ls - kHalfLog2Pi;
            }
            lp[k] = acc;
            lp_top = std::max(lp_top, acc);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            z += std::exp(lp[k] - lp_top);
        const double log_p = lp_top + std::log(z);
        total -= log_p;

        if (!grad)
            continue;
        for (std::size_t k = 0; k < K; ++k)
            gamma[k] = std::exp(lp[k] - log_p);
        for (std::size_t k = 0; k < K; ++k) {
            dout(static_cast<Eigen::Index>(k), b) = (alpha[k] - gamma[k]) * invB;
            for (std::size_t i = 0; i < d; ++i) {
                const auto mi = static_cast<Eigen::Index>(K + k * d + i);
                const auto si = static_cast<Eigen::Index>(K + K * d + k * d + i);
                const double raw = out(si, b);
                const double ls = std::clamp(raw, kLogSigmaMin, kLogSigmaMax);
                const double inv_sigma = std::exp(-ls);
                const double u = (thetas(static_cast<Eigen::Index>(i), b) - out(mi, b)) * inv_sigma;
                dout(mi, b) = -gamma[k] * u * inv_sigma * invB;
                const bool inside = raw > kLogSigmaMin && raw < kLogSigmaMax;
                dout(si, b) = inside ? -gamma[k] * (u * u - 1.0) * invB : 0.0;
            }
        }
    }

    if (grad) {
        grad->head.W.noalias() = dout * Z.transpose();
        grad->head.b = dout.rowwise().sum();
        if (first_layer < L) {
            Eigen::MatrixXd delta = P.head.W.transpose() * dout; // d loss / d Z
            for (std::size_t l = L; l-- > first_layer;) {
                const std::size_t j = l - first_layer;
                if (l + 1 < L)
                    delta = delta.cwiseProduct((acts[j + 1].array() > 0.0).cast<double>().matrix());
                grad->embedding[l].W.noalias() = delta * acts[j].transpose();
                grad->embedding[l].b = delta.rowwise().sum();
                if (l > first_layer)
                    delta = P.embedding[l].W.transpose() * delta;
            }
        }
    }
    return total * invB;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

namespace detail {

class Adam {
public:
    Adam(const NetParams& shape, double step) : m_(shape.zeros_like()), v_(shape.zeros_like()), step_(step) {}

    void update(NetParams& params, const NetParams& grad, std::size_t first_layer) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        auto apply = [&](DenseLayer& p, const DenseLayer& g, DenseLayer& m, DenseLayer& v) {
            m.W = b1 * m.W + (1 - b1) * g.W;
            v.W = b2 * v.W + (1 - b2) * g.W.cwiseProduct(g.W);
            p.W.array() -= step_ * (m.W.array() / c1) / ((v.W.array() / c2).sqrt() + eps);
            m.b = b1 * m.b + (1 - b1) * g.b;
            v.b = b2 * v.b + (1 - b2) * g.b.cwiseProduct(g.b);
            p.b.array() -= step_ * (m.b.array() / c1) / ((v.b.array() / c2).sqrt() + eps);
        };
        for (std::size_t l = first_layer; l < params.embedding.size(); ++l)
            apply(params.embedding[l], grad.embedding[l], m_.embedding[l], v_.embedding[l]);
        apply(params.head, grad.head, m_.head, v_.head);
    }

private:
    NetParams m_, v_;
    double step_;
    std::size_t t_ = 0;
};

inline double grad_norm(const NetParams& g, std::size_t first_layer) {
    double s = g.head.W.squaredNorm() + g.head.b.squaredNorm();
    for (std::size_t l = first_layer; l < g.embedding.size(); ++l)
        s += g.embedding[l].W.squaredNorm() + g.embedding[l].b.squaredNorm();
    return std::sqrt(s);
}

inline void scale_grad(NetParams& g, double f, std::size_t first_layer) {
    g.head.W *= f;
    g.head.b *= f;
    for (std::size_t l = first_layer; l < g.embedding.size(); ++l) {
        g.embedding[l].W *= f;
        g.embedding[l].b *= f;
    }
}

/// Record indices sorted by content key, so training does not depend on
/// the order records were appended in.
inline std::vector<std::size_t> canonical_order(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<std::size_t> out(idx.begin(), idx.end());
    std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = ds[a];
        const auto& rb = ds[b];
        if (ra.seed != rb.seed)
            return ra.seed < rb.seed;
        if (ra.theta.unit() != rb.theta.unit())
            return ra.theta.unit() < rb.theta.unit();
        if (ra.series.length() != rb.series.length())
            return ra.series.length() < rb.series.length();
        return ra.series.values() < rb.series.values();
    });
    return out;
}

} // namespace detail

/// Core loop over prepared columns: `inputs` holds the activations entering
/// the first unfrozen layer.
inline TrainReport train_columns(PosteriorModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& thetas,
                                 const TrainConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(inputs.cols());
    if (n == 0)
        throw ConfigError("train: no usable records");
    const std::size_t first = cfg.frozen_layers;
    if (first > model.params().embedding.size())
        throw ConfigError("train: frozen_layers exceeds the embedding depth");

    Rng rng = rng_stream(cfg.seed, Purpose::Training);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(n)));
    if (n >= 2)
        n_val = std::max<std::size_t>(n_val, 1);
    std::vector<Eigen::Index> val_idx, train_idx;
    for (std::size_t i = 0; i < n; ++i)
        (i < n_val ? val_idx : train_idx).push_back(static_cast<Eigen::Index>(perm[i]));
    if (val_idx.empty())
        val_idx = train_idx;

    const Eigen::MatrixXd val_x = inputs(Eigen::all, val_idx);
    const Eigen::MatrixXd val_t = thetas(Eigen::all, val_idx);

    detail::Adam adam(model.params(), cfg.step_size);
    NetParams grad = model.params().zeros_like();
    NetParams best = model.params();
    double best_val = nll_and_grad(model, val_x, val_t, nullptr, first);
    TrainReport rep;
    rep.used_records = n;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(train_idx);
        double epoch_loss = 0.0;
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size, ++batch_id) {
            const std::size_t stop = std::min(train_idx.size(), start + cfg.batch_size);
            std::vector<Eigen::Index> bidx(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                           train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
            const Eigen::MatrixXd bx = inputs(Eigen::all, bidx);
            const Eigen::MatrixXd bt = thetas(Eigen::all, bidx);
            const double loss = nll_and_grad(model, bx, bt, &grad, first);
            const double norm = detail::grad_norm(grad, first);
            if (!std::isfinite(loss) || !std::isfinite(norm))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_id));
            if (norm > cfg.clip_norm)
                detail::scale_grad(grad, cfg.clip_norm / norm, first);
            adam.update(model.params(), grad, first);
            epoch_loss += loss * static_cast<double>(stop - start);
        }
        rep.train_loss.push_back(epoch_loss / static_cast<double>(train_idx.size()));
        const double v = nll_and_grad(model, val_x, val_t, nullptr, first);
        if (!std::isfinite(v))
            throw NumericError("train: non-finite validation loss in epoch " + std::to_string(epoch));
        rep.val_loss.push_back(v);
        rep.epochs_run = epoch;
        if (v < best_val) {
            best_val = v;
            best = model.params();
            rep.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.params() = std::move(best);
    return rep;
}

/// Fits (x - offset) / scale on the real entries of non-diverged records.
inline void fit_input_normalization(PosteriorModel& model, const Dataset& ds) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& r : ds.records()) {
        if (r.diverged)
            continue;
        for (double v : r.series.values()) {
            sum += v;
            sq += v * v;
            ++n;
        }
    }
    if (n == 0)
        return;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    const double sd = std::sqrt(var);
    model.set_input_normalization(mean, sd > 1e-12 ? sd : 1.0);
}

/// Network inputs (one column per listed record).
inline Eigen::MatrixXd input_matrix(const PosteriorModel& model, const Dataset& ds, std::span<const std::size_t> idx) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(model.t_max()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
        X.col(static_cast<Eigen::Index>(c)) = model.input_vector(ds[idx[c]].series);
    return X;
}

inline Eigen::MatrixXd theta_matrix(const Dataset& ds, std::span<const std::size_t> idx, std::size_t d) {
    Eigen::MatrixXd T(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
        for (std::size_t i = 0; i < d; ++i)
            T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = ds[idx[c]].theta[i];
    return T;
}

/// Activations after the first `layers` embedding layers for every record,
/// one column per record.
inline Eigen::MatrixXd dataset_features(const PosteriorModel& model, const Dataset& ds, std::size_t layers,
                                        std::size_t chunk = 256) {
    Eigen::MatrixXd F;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i)
            idx.push_back(i);
        Eigen::MatrixXd part = model.forward_layers(input_matrix(model, ds, idx), 0, layers);
        if (F.size() == 0)
            F.resize(part.rows(), static_cast<Eigen::Index>(ds.size()));
        F.middleCols(static_cast<Eigen::Index>(start), part.cols()) = part;
    }
    return F;
}

/// Trains on the listed records (all non-diverged records by default).
/// `feature_cache`, if given, holds dataset_features(model, ds,
/// cfg.frozen_layers) for every record and saves recomputing the frozen
/// layers.
inline TrainReport train(PosteriorModel& model, const Dataset& ds, const TrainConfig& cfg,
                         std::span<const std::size_t> subset = {}, const Eigen::MatrixXd* feature_cache = nullptr) {
    cfg.validate();
    if (ds.empty())
        throw ConfigError("train: empty dataset");
    if (!same_space(ds.space(), model.space()))
        throw ConfigError("train: dataset space differs from model space");
    if (cfg.frozen_layers > model.depth())
        throw ConfigError("train: frozen_layers exceeds the embedding depth");

    std::vector<std::size_t> all;
    if (subset.empty()) {
        all.resize(ds.size());
        std::iota(all.begin(), all.end(), 0);
        subset = all;
    }
    std::vector<std::size_t> usable;
    std::size_t skipped = 0;
    for (auto i : subset) {
        if (ds[i].diverged)
            ++skipped;
        else
            usable.push_back(i);
    }
    const auto order = detail::canonical_order(ds, usable);
    const Eigen::MatrixXd T = theta_matrix(ds, order, model.dim());
    TrainReport rep;
    if (feature_cache && cfg.frozen_layers > 0) {
        if (static_cast<std::size_t>(feature_cache->cols()) < ds.size())
            throw ConfigError("train: feature cache is shorter than the dataset");
        Eigen::MatrixXd F(feature_cache->rows(), static_cast<Eigen::Index>(order.size()));
        for (std::size_t c = 0; c < order.size(); ++c)
            F.col(static_cast<Eigen::Index>(c)) = feature_cache->col(static_cast<Eigen::Index>(order[c]));
        rep = train_columns(model, F, T, cfg);
    } else {
        rep = train_columns(model, model.forward_layers(input_matrix(model, ds, order), 0, cfg.frozen_layers), T, cfg);
    }
    rep.skipped_diverged = skipped;

    auto& meta = model.meta();
    meta.epochs += rep.epochs_run;
    meta.best_epoch = rep.best_epoch;
    meta.seed = cfg.seed;
    meta.train_loss.insert(meta.train_loss.end(), rep.train_loss.begin(), rep.train_loss.end());
    meta.val_loss.insert(meta.val_loss.end(), rep.val_loss.begin(), rep.val_loss.end());
    return rep;
}

struct LocalFit {
    PosteriorModel model;
    bool fallback = false;
    std::size_t subset_size = 0;
    TrainReport report;
};

/// Fine-tunes a copy of `global` on the records whose theta lies inside
/// `box`. With fewer than `n_min` such records the global model is returned
/// unchanged and `fallback` is set.
inline LocalFit train_local(const PosteriorModel& global, const Dataset& ds, const Box& box, const TrainConfig& cfg,
                            std::size_t n_min = 20, const Eigen::MatrixXd* feature_cache = nullptr) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!ds[i].diverged && box.contains(ds[i].theta.unit()))
            subset.push_back(i);
    LocalFit fit{global, false, subset.size(), {}};
    if (subset.empty() || subset.size() < n_min) {
        fit.fallback = true;
        return fit;
    }
    fit.report = train(fit.model, ds, cfg, subset, feature_cache);
    return fit;
}

} // namespace antr
