#pragma once
// Reference matcher for the order book: a flat list scanned linearly for the
// best price, ties broken by arrival order.

#include "antr/sim_pgps.hpp"

#include <vector>

namespace oracle {

using antr::pgps::BookEvent;
using antr::pgps::EventType;
using antr::pgps::OrderId;
using antr::pgps::Price;
using antr::pgps::Side;

class FlatBook {
public:
    OrderId submit_limit(Side side, Price price) {
        const OrderId id = ++next_;
        const Side opp = side == Side::Bid ? Side::Ask : Side::Bid;
        if (int k = best_index(opp); k >= 0) {
            const bool crosses = side == Side::Bid ? price >= orders_[k].price : price <= orders_[k].price;
            if (crosses) {
                events_.push_back({step_, EventType::Trade, opp, orders_[k].price, orders_[k].id, id});
                orders_.erase(orders_.begin() + k);
                return id;
            }
        }
        orders_.push_back({id, side, price});
        events_.push_back({step_, EventType::Rest, side, price, id, 0});
        return id;
    }

    void submit_market(Side side) {
        const Side opp = side == Side::Bid ? Side::Ask : Side::Bid;
        const int k = best_index(opp);
        if (k < 0) {
            events_.push_back({step_, EventType::MarketDiscard, side, 0, 0, 0});
            return;
        }
        events_.push_back({step_, EventType::MarketTrade, opp, orders_[k].price, orders_[k].id, 0});
        orders_.erase(orders_.begin() + k);
    }

    bool cancel(OrderId id) {
        for (std::size_t i = 0; i < orders_.size(); ++i) {
            if (orders_[i].id == id) {
                events_.push_back({step_, EventType::Cancel, orders_[i].side, orders_[i].price, id, 0});
                orders_.erase(orders_.begin() + static_cast<std::ptrdiff_t>(i));
                return true;
            }
        }
        return false;
    }

    void set_step(std::size_t s) { step_ = s; }
    const std::vector<BookEvent>& events() const { return events_; }
    std::size_t resting() const { return orders_.size(); }

private:
    struct Resting {
        OrderId id;
        Side side;
        Price price;
    };

    int best_index(Side side) const {
        int best = -1;
        for (std::size_t i = 0; i < orders_.size(); ++i) {
            const auto& o = orders_[i];
            if (o.side != side)
                continue;
            if (best < 0) {
                best = static_cast<int>(i);
                continue;
            }
            const auto& b = orders_[static_cast<std::size_t>(best)];
            const bool better = side == Side::Bid ? o.price > b.price : o.price < b.price;
            if (better || (o.price == b.price && o.id < b.id))
                best = static_cast<int>(i);
        }
        return best;
    }

    std::vector<Resting> orders_;
    std::vector<BookEvent> events_;
    OrderId next_ = 0;
    std::size_t step_ = 0;
};

// Drives both books with the same random stream of at most `max_events`
// operations; returns true when their event logs are identical.
inline bool replay_matches(std::uint64_t seed, std::size_t max_events, std::size_t* n_events = nullptr) {
    antr::Rng rng(seed, 77);
    antr::pgps::OrderBook book;
    book.enable_log(true);
    FlatBook flat;
    const std::size_t n = 1 + rng.below(max_events);
    std::vector<OrderId> ids;
    const Price center = 100 + static_cast<Price>(rng.below(50));
    for (std::size_t e = 0; e < n; ++e) {
        book.set_step(e / 5);
        flat.set_step(e / 5);
        const double u = rng.uniform();
        const Side side = rng.bernoulli(0.5) ? Side::Bid : Side::Ask;
        if (u < 0.6) {
            const Price p = center + static_cast<Price>(rng.below(21)) - 10;
            const OrderId a = book.submit_limit(side, p, 0);
            const OrderId b = flat.submit_limit(side, p);
            if (a != b)
                return false;
            ids.push_back(a);
        } else if (u < 0.8) {
            book.submit_market(side);
            flat.submit_market(side);
        } else if (!ids.empty()) {
            // sometimes targets an order that already left the book
            const OrderId id = ids[rng.below(ids.size())];
            if (book.cancel(id) != flat.cancel(id))
                return false;
        }
        if (book.crossed())
            return false;
    }
    if (n_events)
        *n_events = n;
    return book.events() == flat.events() && book.resting() == flat.resting();
}

} // namespace oracle
