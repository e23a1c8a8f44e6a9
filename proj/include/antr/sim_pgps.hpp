#pragma once

// PGPS limit order book model: liquidity providers post unit limit orders
// around the best quotes, liquidity takers send unit market orders with a
// buy probability that follows a mean-reverting walk, and a price-time
// priority book matches them. The observable is the mid-price.

#include "antr/core.hpp"

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>

namespace antr::pgps {

enum class Side { Bid, Ask };

inline const char* side_name(Side s) { return s == Side::Bid ? "bid" : "ask"; }

using Price = std::int64_t;
using OrderId = std::uint64_t;

struct Order {
    OrderId id = 0;
    std::uint32_t owner = 0;
};

enum class EventType { Rest, Trade, MarketTrade, MarketDiscard, Cancel };

inline const char* event_name(EventType e) {
    switch (e) {
    case EventType::Rest: return "rest";
    case EventType::Trade: return "trade";
    case EventType::MarketTrade: return "market_trade";
    case EventType::MarketDiscard: return "market_discard";
    case EventType::Cancel: return "cancel";
    }
    return "?";
}

/// One book event. For trades `order_id` is the passive (resting) order and
/// `aggressor_id` the incoming one (0 for market orders).
struct BookEvent {
    std::size_t step = 0;
    EventType type = EventType::Rest;
    Side side = Side::Bid;
    Price price = 0;
    OrderId order_id = 0;
    OrderId aggressor_id = 0;

    friend bool operator==(const BookEvent&, const BookEvent&) = default;
};

/// Price-time priority book with unit volumes. Crossing orders execute
/// immediately against the opposite best and are never stored.
class OrderBook {
public:
    std::optional<Price> best_bid() const {
        if (bids_.empty())
            return std::nullopt;
        return bids_.begin()->first;
    }
    std::optional<Price> best_ask() const {
        if (asks_.empty())
            return std::nullopt;
        return asks_.begin()->first;
    }
    bool crossed() const {
        auto b = best_bid();
        auto a = best_ask();
        return b && a && !(*b < *a);
    }

    /// Submits a unit limit order. Returns the order id assigned.
    OrderId submit_limit(Side side, Price price, std::uint32_t owner) {
        const OrderId id = ++next_order_id_;
        ++placed_;
        if (side == Side::Bid) {
            if (auto a = best_ask(); a && price >= *a) {
                fill_front(asks_, *a, Side::Ask, id);
                ++executed_; // the aggressor itself
                return id;
            }
            rest(bids_, side, price, id, owner);
        } else {
            if (auto b = best_bid(); b && price <= *b) {
                fill_front(bids_, *b, Side::Bid, id);
                ++executed_;
                return id;
            }
            rest(asks_, side, price, id, owner);
        }
        return id;
    }

    /// Unit market order; a buy lifts the best ask. Discarded if the opposite
    /// side is empty. Returns the execution price, if any.
    std::optional<Price> submit_market(Side side) {
        if (side == Side::Bid) {
            if (auto a = best_ask()) {
                fill_front(asks_, *a, Side::Ask, 0);
                ++market_filled_;
                return a;
            }
        } else {
            if (auto b = best_bid()) {
                fill_front(bids_, *b, Side::Bid, 0);
                ++market_filled_;
                return b;
            }
        }
        ++market_discarded_;
        log({step_, EventType::MarketDiscard, side, 0, 0, 0});
        return std::nullopt;
    }

    bool cancel(OrderId id) {
        auto it = index_.find(id);
        if (it == index_.end())
            return false;
        const auto [side, price, owner] = it->second;
        (void)owner;
        bool removed = side == Side::Bid ? erase_from(bids_, price, id) : erase_from(asks_, price, id);
        if (!removed)
            return false;
        index_.erase(it);
        ++cancelled_;
        log({step_, EventType::Cancel, side, price, id, 0});
        return true;
    }

    /// Resting order ids in ascending id order together with their owners.
    std::vector<std::pair<OrderId, std::uint32_t>> resting_orders() const {
        std::vector<std::pair<OrderId, std::uint32_t>> out;
        out.reserve(index_.size());
        for (const auto& [id, loc] : index_)
            out.emplace_back(id, loc.owner);
        return out;
    }

    std::size_t resting() const { return index_.size(); }
    std::size_t depth(Side side) const {
        std::size_t n = 0;
        if (side == Side::Bid)
            for (const auto& [p, q] : bids_) n += q.size();
        else
            for (const auto& [p, q] : asks_) n += q.size();
        return n;
    }

    std::uint64_t placed() const { return placed_; }
    std::uint64_t executed() const { return executed_; }
    std::uint64_t cancelled() const { return cancelled_; }
    std::uint64_t market_filled() const { return market_filled_; }
    std::uint64_t market_discarded() const { return market_discarded_; }
    OrderId next_order_id() const { return next_order_id_ + 1; }

    void set_step(std::size_t step) { step_ = step; }
    void enable_log(bool on) { logging_ = on; }
    const std::vector<BookEvent>& events() const { return events_; }

private:
    struct Location {
        Side side;
        Price price;
        std::uint32_t owner;
    };
    using BidLevels = std::map<Price, std::deque<Order>, std::greater<>>;
    using AskLevels = std::map<Price, std::deque<Order>>;

    void log(const BookEvent& e) {
        if (logging_)
            events_.push_back(e);
    }

    template <class Levels>
    void rest(Levels& levels, Side side, Price price, OrderId id, std::uint32_t owner) {
        levels[price].push_back({id, owner});
        index_.emplace(id, Location{side, price, owner});
        log({step_, EventType::Rest, side, price, id, 0});
    }

    template <class Levels>
    void fill_front(Levels& levels, Price price, Side passive_side, OrderId aggressor) {
        auto lvl = levels.find(price);
        const Order passive = lvl->second.front();
        lvl->second.pop_front();
        if (lvl->second.empty())
            levels.erase(lvl);
        index_.erase(passive.id);
        ++executed_;
        log({step_, aggressor ? EventType::Trade : EventType::MarketTrade, passive_side, price, passive.id, aggressor});
    }

    template <class Levels>
    static bool erase_from(Levels& levels, Price price, OrderId id) {
        auto lvl = levels.find(price);
        if (lvl == levels.end())
            return false;
        auto& q = lvl->second;
        for (auto it = q.begin(); it != q.end(); ++it) {
            if (it->id == id) {
                q.erase(it);
                if (q.empty())
                    levels.erase(lvl);
                return true;
            }
        }
        return false;
    }

    BidLevels bids_;
    AskLevels asks_;
    std::map<OrderId, Location> index_;
    OrderId next_order_id_ = 0;
    std::uint64_t placed_ = 0, executed_ = 0, cancelled_ = 0;
    std::uint64_t market_filled_ = 0, market_discarded_ = 0;
    std::size_t step_ = 0;
    bool logging_ = false;
    std::vector<BookEvent> events_;
};

// ---------------------------------------------------------------------------
// Taker buy-probability walk and the depth parameter
// ---------------------------------------------------------------------------

struct QWalkState {
    double q = 0.5;
};

/// Steps toward 0.5 by `delta_s` with probability min(1, 0.5 + |q - 0.5|),
/// away otherwise; an unbiased coin at q = 0.5. Result clamped to [0,1].
inline QWalkState qwalk_step(QWalkState s, double delta_s, Rng& rng) {
    const double u = rng.uniform();
    double dev = s.q - 0.5;
    if (std::abs(dev) < 1e-12) {
        s.q = 0.5 + (u < 0.5 ? delta_s : -delta_s);
    } else {
        const double p_revert = std::min(1.0, 0.5 + std::abs(dev));
        const double toward = dev > 0.0 ? -delta_s : delta_s;
        s.q += (u < p_revert) ? toward : -toward;
    }
    if (std::abs(s.q - 0.5) < 1e-12)
        s.q = 0.5;
    s.q = std::clamp(s.q, 0.0, 1.0);
    return s;
}

inline constexpr std::size_t kNormIterations = 100000;
inline constexpr std::uint64_t kNormSeed = 0x51A7E5EEDULL;

/// RMS deviation of the walk about 0.5 over 10^5 steps. Cached per
/// (delta_s, seed).
inline double qwalk_norm_const(double delta_s, std::uint64_t seed = kNormSeed) {
    if (!(delta_s > 0.0))
        throw ConfigError("qwalk_norm_const: delta_s must be positive");
    static std::mutex mu;
    static std::map<std::pair<double, std::uint64_t>, double> cache;
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find({delta_s, seed}); it != cache.end())
            return it->second;
    }
    Rng rng = rng_stream(seed, Purpose::Init);
    QWalkState s;
    double acc = 0.0;
    for (std::size_t i = 0; i < kNormIterations; ++i) {
        s = qwalk_step(s, delta_s, rng);
        acc += (s.q - 0.5) * (s.q - 0.5);
    }
    const double c = std::sqrt(acc / static_cast<double>(kNormIterations));
    std::lock_guard lock(mu);
    cache.emplace(std::pair{delta_s, seed}, c);
    return c;
}

inline double compute_lambda(double lambda0, double c_lambda, double q, double c_norm) {
    return lambda0 * (1.0 + c_lambda * std::abs(q - 0.5) / c_norm);
}

// ---------------------------------------------------------------------------
// Limit order placement
// ---------------------------------------------------------------------------

inline Price round_tick(double p) { return static_cast<Price>(std::floor(p + 0.5)); }

struct Placement {
    Price price = 0;
    OrderId id = 0;
    bool traded = false;
    std::optional<Price> trade_price;
};

enum class PlacementRule {
    // p = p_s + lambda * log(u) + s with p_s the own-side best (ask: s=+1,
    // bid: s=-1). Asks land below the best ask and mostly cross.
    AsPrinted,
    // bid = p_a - 1 + lambda * log(u), ask = p_b + 1 - lambda * log(u): each
    // order is placed relative to the opposite best and never crosses.
    OppositeAnchored,
};

/// Prices an order by `rule`, using `fallback_ref` when the reference side
/// is empty, floors it at one tick and submits it.
inline Placement place_limit_order(OrderBook& book, Side side, double lambda_t, double u, Price fallback_ref,
                                   std::uint32_t owner = 0, PlacementRule rule = PlacementRule::AsPrinted) {
    const bool own_side = rule == PlacementRule::AsPrinted;
    const bool use_ask = (side == Side::Ask) == own_side;
    const auto anchor = use_ask ? book.best_ask() : book.best_bid();
    const Price ref = anchor ? *anchor : fallback_ref;
    const double s = side == Side::Ask ? 1.0 : -1.0;
    const double depth = own_side ? lambda_t * std::log(u) : -s * lambda_t * std::log(u);
    Placement out;
    out.price = std::max<Price>(1, round_tick(static_cast<double>(ref) + depth + s));
    const auto opp = side == Side::Ask ? book.best_bid() : book.best_ask();
    const std::uint64_t before = book.executed();
    out.id = book.submit_limit(side, out.price, owner);
    out.traded = book.executed() != before;
    if (out.traded)
        out.trade_price = opp;
    return out;
}

inline Placement place_limit_order(OrderBook& book, Side side, double lambda_t, Rng& rng, Price fallback_ref,
                                   std::uint32_t owner = 0, PlacementRule rule = PlacementRule::AsPrinted) {
    return place_limit_order(book, side, lambda_t, rng.uniform(), fallback_ref, owner, rule);
}

// ---------------------------------------------------------------------------
// Full simulation
// ---------------------------------------------------------------------------

struct PgpsParams {
    double lambda0 = 100.0;
    double c_lambda = 10.0;
    double alpha = 0.075;
    double mu = 0.3;
    double delta_s = 0.075;
    double delta = 0.075;
};

enum class CancelOwner { Provider, Taker };

struct PgpsSettings {
    std::size_t n_providers = 125;
    std::size_t n_takers = 125;
    Price p0 = 1000;
    std::size_t warmup = 200;
    CancelOwner cancel_owner = CancelOwner::Provider;
    PlacementRule placement = PlacementRule::OppositeAnchored;
    bool enforce_ranges = true;
    bool log_events = false;
};

/// Table of calibrated ranges, in (lambda0, C_lambda, alpha, mu, delta_s, delta) order.
inline SpacePtr pgps_space() {
    return make_space({1.0, 1.0, 0.05, 0.10, 0.05, 0.05}, {200.0, 20.0, 0.10, 0.50, 0.10, 0.10},
                      {"lambda0", "C_lambda", "alpha", "mu", "delta_s", "delta"});
}

inline PgpsParams pgps_params_from(const ParamVector& theta) {
    if (theta.dim() != 6)
        throw ConfigError("pgps_params_from: expected 6 coordinates");
    const auto p = theta.physical();
    return {p[0], p[1], p[2], p[3], p[4], p[5]};
}

inline void validate_ranges(const PgpsParams& p) {
    const auto space = pgps_space();
    const double v[6] = {p.lambda0, p.c_lambda, p.alpha, p.mu, p.delta_s, p.delta};
    for (std::size_t i = 0; i < 6; ++i) {
        const double lo = space->lower()[i], hi = space->upper()[i];
        const double tol = 1e-9 * (hi - lo);
        if (!std::isfinite(v[i]) || v[i] < lo - tol || v[i] > hi + tol)
            throw ConfigError("pgps: parameter " + space->names()[i] + " = " + std::to_string(v[i]) +
                              " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

struct PgpsStats {
    std::uint64_t placed = 0;
    std::uint64_t executed = 0;
    std::uint64_t cancelled = 0;
    std::uint64_t resting = 0;
    std::uint64_t market_filled = 0;
    std::uint64_t market_discarded = 0;
    std::uint64_t crossed_steps = 0;
    double q_min = 0.5;
    double q_max = 0.5;
};

struct PgpsRun {
    TimeSeries series;
    PgpsStats stats;
    std::vector<BookEvent> events;
};

/// One run of `warmup + t_obs` steps; after warm-up records, per step, the
/// most recent mid-price seen while both sides were quoted.
/// Per step every provider draws three uniforms and every taker two,
/// whether or not it acts, so that neighbouring parameter values share
/// their random numbers.
inline PgpsRun pgps_simulate(const PgpsParams& params, std::size_t t_obs, std::uint64_t seed,
                             const PgpsSettings& settings = {}) {
    if (settings.enforce_ranges)
        validate_ranges(params);
    if (t_obs < 1)
        throw ConfigError("pgps_simulate: T_obs must be >= 1");
    if (settings.p0 < 2)
        throw ConfigError("pgps_simulate: p0 must be at least 2 ticks");

    const double c_norm = qwalk_norm_const(params.delta_s);
    Rng rng = rng_stream(seed, Purpose::Simulation);

    OrderBook book;
    book.enable_log(settings.log_events);
    const auto taker_base = static_cast<std::uint32_t>(settings.n_providers);
    // Seed quotes belong to provider 0.
    book.submit_limit(Side::Bid, settings.p0 - 1, 0);
    book.submit_limit(Side::Ask, settings.p0 + 1, 0);

    QWalkState walk;
    double lambda_t = compute_lambda(params.lambda0, params.c_lambda, walk.q, c_norm);
    // Last mid-price seen after any book event with both sides quoted.
    double last_mid = static_cast<double>(settings.p0);
    auto note_mid = [&] {
        const auto b = book.best_bid();
        const auto a = book.best_ask();
        if (b && a)
            last_mid = 0.5 * static_cast<double>(*a + *b);
    };
    PgpsStats stats;

    std::vector<double> mids;
    mids.reserve(t_obs);
    const std::size_t total = settings.warmup + t_obs;
    for (std::size_t t = 0; t < total; ++t) {
        book.set_step(t);
        for (std::size_t i = 0; i < settings.n_providers; ++i) {
            const double u_submit = rng.uniform();
            const double u_side = rng.uniform();
            const double u_price = rng.uniform();
            if (u_submit < params.alpha) {
                const Side side = u_side < 0.5 ? Side::Bid : Side::Ask;
                place_limit_order(book, side, lambda_t, u_price, round_tick(last_mid), static_cast<std::uint32_t>(i),
                                  settings.placement);
                note_mid();
            }
        }
        for (std::size_t j = 0; j < settings.n_takers; ++j) {
            const double u_submit = rng.uniform();
            const double u_side = rng.uniform();
            if (u_submit < params.mu) {
                book.submit_market(u_side < walk.q ? Side::Bid : Side::Ask);
                note_mid();
            }
        }
        for (const auto& [id, owner] : book.resting_orders()) {
            const bool provider_owned = owner < taker_base;
            const bool eligible = settings.cancel_owner == CancelOwner::Provider ? provider_owned : !provider_owned;
            if (!eligible)
                continue;
            if (rng.uniform() < params.delta) {
                book.cancel(id);
                note_mid();
            }
        }

        walk = qwalk_step(walk, params.delta_s, rng);
        stats.q_min = std::min(stats.q_min, walk.q);
        stats.q_max = std::max(stats.q_max, walk.q);
        lambda_t = compute_lambda(params.lambda0, params.c_lambda, walk.q, c_norm);

        if (book.crossed())
            ++stats.crossed_steps;
        if (t >= settings.warmup)
            mids.push_back(last_mid);
    }

    stats.placed = book.placed();
    stats.executed = book.executed(); // limit orders that traded, either side
    stats.cancelled = book.cancelled();
    stats.resting = book.resting();
    stats.market_filled = book.market_filled();
    stats.market_discarded = book.market_discarded();
    return {TimeSeries(std::move(mids)), stats, book.events()};
}

inline void write_event_log(std::ostream& os, const std::vector<BookEvent>& events) {
    os << "step,event,side,price,order_id\n";
    for (const auto& e : events)
        os << e.step << ',' << event_name(e.type) << ',' << side_name(e.side) << ',' << e.price << ',' << e.order_id
           << '\n';
}

} // namespace antr::pgps
