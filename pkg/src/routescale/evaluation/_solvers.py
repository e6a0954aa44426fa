"""Reference-solver kernels (numba when enabled, plain Python otherwise).

A solution is a set of routes.  Backhauls may only start once every linehaul
in the instance is served, so at most one route mixes both kinds: pure
linehaul routes run first, then the mixed route, then pure backhaul routes.
Per-route feasibility is the step-by-step replay used by the environment
mask, so route costs and masks agree to the same tolerance.
"""
import numpy as np

from .._accel import njit
from ..env.kernels import EPS

INF = np.inf


@njit
def route_cost(seq, n, dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    """Cost of depot -> seq[:n] (-> depot unless open); inf if infeasible."""
    load_l = 1.0
    load_b = 1.0
    clock = 0.0
    used = 0.0
    cur = 0
    seen_pick = False
    for k in range(n):
        j = seq[k]
        if pickup[j]:
            seen_pick = True
            if demand[j] > load_b + EPS:
                return INF
        else:
            if seen_pick or demand[j] > load_l + EPS:
                return INF
        d = dist[cur, j]
        finish = max(clock + d, tl[j]) + ts[j]
        if finish > tr[j] + EPS:
            return INF
        if open_:
            if used + d > rho + EPS:
                return INF
        else:
            back = dist[j, 0]
            if finish + back > horizon + EPS or used + d + back > rho + EPS:
                return INF
        if pickup[j]:
            load_b -= demand[j]
        else:
            load_l -= demand[j]
        used += d
        clock = finish
        cur = j
    if n > 0 and not open_:
        used += dist[cur, 0]
    return used


# ---------------------------------------------------------------- exact


@njit
def enumerate_routes(dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    """Best feasible route per customer subset (bitmask over customers 1..M)."""
    M = dist.shape[0] - 1
    S_MAX = 1 << M
    best = np.full(S_MAX, INF)
    best_seq = np.zeros((S_MAX, M), dtype=np.int64)
    # two stored labels per (subset, last): lowest cost and earliest clock
    lab_cost = np.full((S_MAX, M + 1, 2), INF)
    lab_clock = np.full((S_MAX, M + 1, 2), INF)

    seq = np.zeros(M, dtype=np.int64)
    nxt = np.ones(M + 1, dtype=np.int64)
    st_mask = np.zeros(M + 1, dtype=np.int64)
    st_ll = np.ones(M + 1)
    st_lb = np.ones(M + 1)
    st_clock = np.zeros(M + 1)
    st_used = np.zeros(M + 1)
    st_pick = np.zeros(M + 1, dtype=np.bool_)
    depth = 0
    while depth >= 0:
        j = nxt[depth]
        if j > M:
            depth -= 1
            continue
        nxt[depth] = j + 1
        mask = st_mask[depth]
        if mask & (1 << (j - 1)):
            continue
        cur = 0 if depth == 0 else seq[depth - 1]
        if pickup[j]:
            if demand[j] > st_lb[depth] + EPS:
                continue
        elif st_pick[depth] or demand[j] > st_ll[depth] + EPS:
            continue
        d = dist[cur, j]
        finish = max(st_clock[depth] + d, tl[j]) + ts[j]
        if finish > tr[j] + EPS:
            continue
        back = dist[j, 0]
        if open_:
            if st_used[depth] + d > rho + EPS:
                continue
        elif finish + back > horizon + EPS or st_used[depth] + d + back > rho + EPS:
            continue
        used = st_used[depth] + d
        nmask = mask | (1 << (j - 1))
        # dominance against stored labels
        dominated = False
        for k in range(2):
            if lab_cost[nmask, j, k] <= used and lab_clock[nmask, j, k] <= finish:
                dominated = True
        if dominated:
            continue
        if used < lab_cost[nmask, j, 0]:
            lab_cost[nmask, j, 0] = used
            lab_clock[nmask, j, 0] = finish
        if finish < lab_clock[nmask, j, 1]:
            lab_cost[nmask, j, 1] = used
            lab_clock[nmask, j, 1] = finish
        seq[depth] = j
        total = used if open_ else used + back
        if total < best[nmask]:
            best[nmask] = total
            best_seq[nmask, : depth + 1] = seq[: depth + 1]
            best_seq[nmask, depth + 1:] = 0
        if depth + 1 < M:
            depth += 1
            st_mask[depth] = nmask
            st_ll[depth] = st_ll[depth - 1] - (0.0 if pickup[j] else demand[j])
            st_lb[depth] = st_lb[depth - 1] - (demand[j] if pickup[j] else 0.0)
            st_clock[depth] = finish
            st_used[depth] = used
            st_pick[depth] = st_pick[depth - 1] or pickup[j]
            nxt[depth] = 1
    return best, best_seq


@njit
def _partition(route, full):
    """Min-cost cover of every subset of ``full`` by routes; returns (cost, choice)."""
    size = route.shape[0]
    g = np.full(size, INF)
    choice = np.zeros(size, dtype=np.int64)
    g[0] = 0.0
    sub = full
    subsets = []
    while sub:
        subsets.append(sub)
        sub = (sub - 1) & full
    for idx in range(len(subsets) - 1, -1, -1):
        S = subsets[idx]
        low = S & -S
        rest = S ^ low
        T_rest = rest
        while True:
            T = T_rest | low
            c = route[T] + g[S ^ T]
            if c < g[S]:
                g[S] = c
                choice[S] = T
            if T_rest == 0:
                break
            T_rest = (T_rest - 1) & rest
    return g, choice


@njit
def exact_solve(dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    """Optimal objective and depot-delimited tour (closed tours end at 0)."""
    M = dist.shape[0] - 1
    route, route_seq = enumerate_routes(dist, demand, pickup, tl, tr, ts, horizon, rho, open_)
    lmask = 0
    bmask = 0
    for j in range(1, M + 1):
        if pickup[j]:
            bmask |= 1 << (j - 1)
        else:
            lmask |= 1 << (j - 1)
    gL, chL = _partition(route, lmask)
    gB, chB = _partition(route, bmask)
    best = gL[lmask] + gB[bmask]
    mixed = 0
    if lmask and bmask:
        full = lmask | bmask
        T = full
        while T:
            if (T & lmask) and (T & bmask) and route[T] < INF:
                c = route[T] + gL[lmask & ~T] + gB[bmask & ~T]
                if c < best:
                    best = c
                    mixed = T
            T = (T - 1) & full
    tour = np.zeros(2 * M + 2, dtype=np.int64)
    n = 1
    if best == INF:
        return best, tour[:0]
    L_left = lmask & ~mixed
    B_left = bmask & ~mixed
    order = []
    while L_left:
        T = chL[L_left]
        order.append(T)
        L_left ^= T
    if mixed:
        order.append(mixed)
    while B_left:
        T = chB[B_left]
        order.append(T)
        B_left ^= T
    for T in order:
        k = 0
        while k < M and route_seq[T, k] != 0:
            tour[n] = route_seq[T, k]
            n += 1
            k += 1
        tour[n] = 0
        n += 1
    if open_:
        n -= 1
    return best, tour[:n]


# ---------------------------------------------------------------- heuristic


@njit
def _kind(seq, n, pickup):
    """0 empty, 1 pure linehaul, 2 pure backhaul, 3 mixed."""
    has_l = False
    has_b = False
    for k in range(n):
        if pickup[seq[k]]:
            has_b = True
        else:
            has_l = True
    return (1 if has_l else 0) + (2 if has_b else 0)


@njit
def _count_mixed(routes, lens, n_routes, pickup, skip1, skip2):
    c = 0
    for r in range(n_routes):
        if r != skip1 and r != skip2 and _kind(routes[r], lens[r], pickup) == 3:
            c += 1
    return c


@njit
def _insert(src, n, pos, j, out):
    for k in range(pos):
        out[k] = src[k]
    out[pos] = j
    for k in range(pos, n):
        out[k + 1] = src[k]


@njit
def greedy_insertion(dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    M = dist.shape[0] - 1
    routes = np.zeros((M, M), dtype=np.int64)
    lens = np.zeros(M, dtype=np.int64)
    costs = np.zeros(M)
    n_routes = 0
    routed = np.zeros(M + 1, dtype=np.bool_)
    buf = np.zeros(M + 1, dtype=np.int64)
    single = np.zeros(1, dtype=np.int64)
    for _ in range(M):
        best_delta = INF
        best_j = -1
        best_r = -1
        best_pos = -1
        for j in range(1, M + 1):
            if routed[j]:
                continue
            for r in range(n_routes):
                kind = _kind(routes[r], lens[r], pickup)
                becomes_mixed = (kind == 1 and pickup[j]) or (kind == 2 and not pickup[j])
                if becomes_mixed and _count_mixed(routes, lens, n_routes, pickup, r, -1) > 0:
                    continue
                for pos in range(lens[r] + 1):
                    _insert(routes[r], lens[r], pos, j, buf)
                    c = route_cost(buf, lens[r] + 1, dist, demand, pickup, tl, tr, ts, horizon,
                                   rho, open_)
                    delta = c - costs[r]
                    if delta < best_delta - 1e-12:
                        best_delta = delta
                        best_j = j
                        best_r = r
                        best_pos = pos
            single[0] = j
            c = route_cost(single, 1, dist, demand, pickup, tl, tr, ts, horizon, rho, open_)
            if c < best_delta - 1e-12:
                best_delta = c
                best_j = j
                best_r = -1
                best_pos = 0
        if best_j < 0:
            return routes, lens, costs, -1  # some customer cannot be served alone
        if best_r < 0:
            best_r = n_routes
            n_routes += 1
        _insert(routes[best_r].copy(), lens[best_r], best_pos, best_j, routes[best_r])
        lens[best_r] += 1
        costs[best_r] = route_cost(routes[best_r], lens[best_r], dist, demand, pickup, tl, tr, ts,
                                   horizon, rho, open_)
        routed[best_j] = True
    return routes, lens, costs, n_routes


@njit
def local_search(routes, lens, costs, n_routes, dist, demand, pickup, tl, tr, ts, horizon, rho,
                 open_, max_rounds=1000):
    M = dist.shape[0] - 1
    buf = np.zeros(M + 1, dtype=np.int64)
    buf2 = np.zeros(M + 1, dtype=np.int64)
    for _ in range(max_rounds):
        improved = False
        # 2-opt inside each route
        for r in range(n_routes):
            n = lens[r]
            for i in range(n - 1):
                for k in range(i + 1, n):
                    for q in range(n):
                        buf[q] = routes[r, q]
                    for q in range(k - i + 1):
                        buf[i + q] = routes[r, k - q]
                    c = route_cost(buf, n, dist, demand, pickup, tl, tr, ts, horizon, rho, open_)
                    if c < costs[r] - 1e-10:
                        routes[r, :n] = buf[:n]
                        costs[r] = c
                        improved = True
        # relocate one customer
        for r in range(n_routes):
            i = 0
            while i < lens[r]:
                j = routes[r, i]
                n_src = lens[r] - 1
                for q in range(i):
                    buf[q] = routes[r, q]
                for q in range(i, n_src):
                    buf[q] = routes[r, q + 1]
                c_src = route_cost(buf, n_src, dist, demand, pickup, tl, tr, ts, horizon, rho,
                                   open_) if n_src > 0 else 0.0
                if c_src == INF:
                    i += 1
                    continue
                moved = False
                for s in range(n_routes):
                    if s == r:
                        continue
                    n_dst = lens[s]
                    for pos in range(n_dst + 1):
                        _insert(routes[s], n_dst, pos, j, buf2)
                        c_dst = route_cost(buf2, n_dst + 1, dist, demand, pickup, tl, tr, ts,
                                           horizon, rho, open_)
                        if c_dst == INF:
                            continue
                        gain = costs[r] + costs[s] - c_src - c_dst
                        if gain <= 1e-10:
                            continue
                        k_src = _kind(buf, n_src, pickup)
                        k_dst = _kind(buf2, n_dst + 1, pickup)
                        n_mixed = _count_mixed(routes, lens, n_routes, pickup, r, s)
                        n_mixed += (1 if k_src == 3 else 0) + (1 if k_dst == 3 else 0)
                        if n_mixed > 1:
                            continue
                        routes[r, :n_src] = buf[:n_src]
                        lens[r] = n_src
                        costs[r] = c_src
                        routes[s, : n_dst + 1] = buf2[: n_dst + 1]
                        lens[s] = n_dst + 1
                        costs[s] = c_dst
                        moved = True
                        improved = True
                        break
                    if moved:
                        break
                if not moved and n_src > 0 and n_routes < M:
                    # open a new route for j alone
                    buf2[0] = j
                    c_dst = route_cost(buf2, 1, dist, demand, pickup, tl, tr, ts, horizon, rho,
                                       open_)
                    n_mixed = _count_mixed(routes, lens, n_routes, pickup, r, -1)
                    n_mixed += 1 if _kind(buf, n_src, pickup) == 3 else 0
                    if costs[r] - c_src - c_dst > 1e-10 and n_mixed <= 1:
                        routes[r, :n_src] = buf[:n_src]
                        lens[r] = n_src
                        costs[r] = c_src
                        routes[n_routes, 0] = j
                        lens[n_routes] = 1
                        costs[n_routes] = c_dst
                        n_routes += 1
                        moved = True
                        improved = True
                if not moved:
                    i += 1
        # move a customer elsewhere in its own route
        for r in range(n_routes):
            n = lens[r]
            for i in range(n):
                j = routes[r, i]
                for q in range(i):
                    buf[q] = routes[r, q]
                for q in range(i, n - 1):
                    buf[q] = routes[r, q + 1]
                for pos in range(n):
                    if pos == i:
                        continue
                    _insert(buf, n - 1, pos, j, buf2)
                    c = route_cost(buf2, n, dist, demand, pickup, tl, tr, ts, horizon, rho, open_)
                    if c < costs[r] - 1e-10:
                        routes[r, :n] = buf2[:n]
                        costs[r] = c
                        improved = True
                        break
        # exchange two customers between routes
        for r in range(n_routes):
            for s in range(r + 1, n_routes):
                for i in range(lens[r]):
                    for k in range(lens[s]):
                        nr, ns = lens[r], lens[s]
                        buf[:nr] = routes[r, :nr]
                        buf2[:ns] = routes[s, :ns]
                        buf[i] = routes[s, k]
                        buf2[k] = routes[r, i]
                        c_r = route_cost(buf, nr, dist, demand, pickup, tl, tr, ts, horizon, rho,
                                         open_)
                        if c_r == INF:
                            continue
                        c_s = route_cost(buf2, ns, dist, demand, pickup, tl, tr, ts, horizon, rho,
                                         open_)
                        if c_r + c_s > costs[r] + costs[s] - 1e-10:
                            continue
                        n_mixed = _count_mixed(routes, lens, n_routes, pickup, r, s)
                        n_mixed += (1 if _kind(buf, nr, pickup) == 3 else 0)
                        n_mixed += (1 if _kind(buf2, ns, pickup) == 3 else 0)
                        if n_mixed > 1:
                            continue
                        routes[r, :nr] = buf[:nr]
                        routes[s, :ns] = buf2[:ns]
                        costs[r] = c_r
                        costs[s] = c_s
                        improved = True
        # drop emptied routes
        w = 0
        for r in range(n_routes):
            if lens[r] > 0:
                if w != r:
                    routes[w] = routes[r]
                    lens[w] = lens[r]
                    costs[w] = costs[r]
                w += 1
        n_routes = w
        if not improved:
            break
    return n_routes


@njit
def kick(routes, lens, n_routes, victims, draws, dist, demand, pickup, tl, tr, ts, horizon, rho,
         open_):
    """Remove ``victims`` and reinsert each at a feasible slot picked by its uniform draw.

    Removal never breaks feasibility (Euclidean distances); a victim with no
    feasible slot opens a new route.  Returns the new route count.
    """
    M = dist.shape[0] - 1
    buf = np.zeros(M + 1, dtype=np.int64)
    for v in victims:
        for r in range(n_routes):
            n = lens[r]
            for i in range(n):
                if routes[r, i] == v:
                    for q in range(i, n - 1):
                        routes[r, q] = routes[r, q + 1]
                    lens[r] = n - 1
                    break
    w = 0
    for r in range(n_routes):
        if lens[r] > 0:
            if w != r:
                routes[w] = routes[r]
                lens[w] = lens[r]
            w += 1
    n_routes = w
    for t in range(victims.shape[0]):
        j = victims[t]
        count = 0
        for phase in range(2):
            pick = int(draws[t] * count) if phase == 1 else -1
            seen = 0
            done = False
            for r in range(n_routes):
                kind = _kind(routes[r], lens[r], pickup)
                becomes_mixed = (kind == 1 and pickup[j]) or (kind == 2 and not pickup[j])
                if becomes_mixed and _count_mixed(routes, lens, n_routes, pickup, r, -1) > 0:
                    continue
                for pos in range(lens[r] + 1):
                    _insert(routes[r], lens[r], pos, j, buf)
                    if route_cost(buf, lens[r] + 1, dist, demand, pickup, tl, tr, ts, horizon,
                                  rho, open_) == INF:
                        continue
                    if phase == 0:
                        count += 1
                    elif seen == pick:
                        routes[r, :lens[r] + 1] = buf[:lens[r] + 1]
                        lens[r] += 1
                        done = True
                        break
                    seen += 1
                if done:
                    break
            if phase == 0 and count == 0:
                routes[n_routes, 0] = j
                lens[n_routes] = 1
                n_routes += 1
                break
    return n_routes


def tour_to_routes(tour, M):
    """Split a depot-delimited tour into the (routes, lens, n_routes) layout."""
    routes = np.zeros((M, M), dtype=np.int64)
    lens = np.zeros(M, dtype=np.int64)
    r = -1
    prev = 0
    for node in tour[1:]:
        if node == 0:
            prev = 0
            continue
        if prev == 0:
            r += 1
        routes[r, lens[r]] = node
        lens[r] += 1
        prev = node
    return routes, lens, r + 1


@njit
def routes_to_tour(routes, lens, n_routes, pickup, open_):
    """Concatenate routes as pure linehaul, mixed, pure backhaul."""
    M = routes.shape[1]
    tour = np.zeros(2 * M + 2, dtype=np.int64)
    n = 1
    for want in (1, 3, 2):
        for r in range(n_routes):
            if _kind(routes[r], lens[r], pickup) != want:
                continue
            for k in range(lens[r]):
                tour[n] = routes[r, k]
                n += 1
            tour[n] = 0
            n += 1
    if open_:
        n -= 1
    return tour[:n]
