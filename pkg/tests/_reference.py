"""Deliberately naive reference implementations used only by the tests.

The matcher keeps resting orders in an unordered dict and rescans it
linearly for every decision, so it shares no data-structure assumptions
with the engine; agreement on fill sequences is therefore meaningful.
"""

import numpy as np


class RefBook:
    """Brute-force price-time-priority matcher with expiry and uncross."""

    def __init__(self, last_price=1.0):
        self.resting = {}  # oid -> [is_bid, price, seq, vol, expires_at]
        self.last_price = last_price
        self.step = 0
        self._seq = 0
        self.expired_volume = 0

    def _best(self, is_bid):
        """Linear scan for the opposite side's head; None when empty."""
        best = None
        for oid, (b, price, seq, vol, _exp) in self.resting.items():
            if b != is_bid:
                continue
            if best is None:
                best = (price, seq, oid)
                continue
            bp, bs, _ = best
            if is_bid:
                if price > bp or (price == bp and seq < bs):
                    best = (price, seq, oid)
            else:
                if price < bp or (price == bp and seq < bs):
                    best = (price, seq, oid)
        return best

    def insert(self, oid, is_bid, price, vol, ttl, matching=True):
        fills = []
        if matching:
            while vol:
                head = self._best(not is_bid)
                if head is None:
                    break
                hp, _hs, hoid = head
                if (is_bid and hp > price) or (not is_bid and hp < price):
                    break
                entry = self.resting[hoid]
                take = min(vol, entry[3])
                entry[3] -= take
                vol -= take
                self.last_price = hp
                if is_bid:
                    fills.append((self.step, hp, take, oid, hoid))
                else:
                    fills.append((self.step, hp, take, hoid, oid))
                if entry[3] == 0:
                    del self.resting[hoid]
        if vol:
            self.resting[oid] = [is_bid, price, self._seq, vol,
                                 self.step + ttl]
            self._seq += 1
        return fills

    def expire(self, now):
        for oid in [o for o, e in self.resting.items() if e[4] <= now]:
            self.expired_volume += self.resting[oid][3]
            del self.resting[oid]

    def uncross(self):
        bids = [e for e in self.resting.values() if e[0]]
        asks = [e for e in self.resting.values() if not e[0]]
        if not bids or not asks:
            return [], None
        candidates = sorted({e[1] for e in bids} | {e[1] for e in asks} | {1.0})
        best_price, best_vol = None, 0
        for p in candidates:
            demand = sum(e[3] for e in bids if e[1] >= p)
            supply = sum(e[3] for e in asks if e[1] <= p)
            vol = min(demand, supply)
            if vol > best_vol or (vol == best_vol and vol > 0 and
                                  (abs(p - 1.0), p)
                                  < (abs(best_price - 1.0), best_price)):
                best_price, best_vol = p, vol
        if best_vol == 0:
            return [], None

        by_prio_bid = sorted(
            ((oid, e) for oid, e in self.resting.items() if e[0]),
            key=lambda kv: (-kv[1][1], kv[1][2]))
        by_prio_ask = sorted(
            ((oid, e) for oid, e in self.resting.items() if not e[0]),
            key=lambda kv: (kv[1][1], kv[1][2]))
        fills = []
        remaining = best_vol
        bi = ai = 0
        while remaining:
            boid, bentry = by_prio_bid[bi]
            aoid, aentry = by_prio_ask[ai]
            take = min(bentry[3], aentry[3], remaining)
            fills.append((self.step, best_price, take, boid, aoid))
            bentry[3] -= take
            aentry[3] -= take
            remaining -= take
            if bentry[3] == 0:
                del self.resting[boid]
                bi += 1
            if aentry[3] == 0:
                del self.resting[aoid]
                ai += 1
        self.last_price = best_price
        return fills, best_price

    def snapshot(self):
        """Priority-ordered resting orders: (is_bid, price, oid, vol)."""
        bids = sorted((e for e in self.resting.items() if e[1][0]),
                      key=lambda kv: (-kv[1][1], kv[1][2]))
        asks = sorted((e for e in self.resting.items() if not e[1][0]),
                      key=lambda kv: (kv[1][1], kv[1][2]))
        return ([(True, e[1], oid, e[3]) for oid, e in bids],
                [(False, e[1], oid, e[3]) for oid, e in asks])

    def total_resting_volume(self):
        return sum(e[3] for e in self.resting.values())


def brute_kurtosis(x):
    """Plain-loop raw kurtosis m4/m2^2 for cross-checking the estimator."""
    x = [float(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    m2 = sum((v - mean) ** 2 for v in x) / n
    if m2 == 0.0:
        return None
    m4 = sum((v - mean) ** 4 for v in x) / n
    return m4 / (m2 * m2)


def make_order_stream(n_orders, seed, price_decimals=2, ttl_lo=5, ttl_hi=60):
    """Reproducible random order stream as parallel arrays.

    Prices walk around 1.0 on a coarse grid so levels collide constantly,
    exercising time priority; volumes up to 3 exercise partial fills.
    """
    rng = np.random.default_rng(seed)
    drift = np.cumsum(rng.normal(0.0, 0.002, n_orders))
    offset = rng.uniform(-0.03, 0.03, n_orders)
    prices = np.round(np.maximum(1.0 + drift + offset, 0.01), price_decimals)
    is_bid = rng.random(n_orders) < 0.5
    volumes = rng.integers(1, 4, n_orders)
    ttls = rng.integers(ttl_lo, ttl_hi + 1, n_orders)
    return prices, is_bid, volumes, ttls
