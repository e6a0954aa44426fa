"""Feasibility-mask and transition kernels over a (batch, trajectory) grid.

Two implementations of each: an ``@njit`` loop and a vectorised numpy
version.  ``feasibility_mask`` / ``apply_step`` dispatch on the accel flag;
tests check that both paths agree bit for bit.

Conventions: instances without time windows carry ``tl=0, tr=inf, ts=0`` and
``horizon=inf``; instances without a duration limit carry ``rho=inf``.
"""
import numpy as np

from .._accel import USE_NUMBA, njit

EPS = 1e-9


@njit
def mask_numba(cur, visited, load_l, load_b, clock, used, lh_left, done,
               dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    # checks are written inline: a helper taking this many arrays costs ~50x in call overhead
    B, P = cur.shape
    N = dist.shape[1]
    out = np.zeros((B, P, N), dtype=np.bool_)
    for b in range(B):
        for p in range(P):
            if done[b, p]:
                out[b, p, 0] = True
                continue
            c = cur[b, p]
            out[b, p, 0] = c != 0
            for j in range(1, N):
                if visited[b, p, j]:
                    continue
                if pickup[b, j]:
                    if lh_left[b, p] > 0 or demand[b, j] > load_b[b, p] + EPS:
                        continue
                elif demand[b, j] > load_l[b, p] + EPS:
                    continue
                d = dist[b, c, j]
                finish = max(clock[b, p] + d, tl[b, j]) + ts[b, j]
                if finish > tr[b, j] + EPS:
                    continue
                if open_[b]:
                    out[b, p, j] = used[b, p] + d <= rho[b] + EPS
                    continue
                back = dist[b, j, 0]
                if finish + back > horizon[b] + EPS:
                    continue
                out[b, p, j] = used[b, p] + d + back <= rho[b] + EPS
    return out


def mask_numpy(cur, visited, load_l, load_b, clock, used, lh_left, done,
               dist, demand, pickup, tl, tr, ts, horizon, rho, open_):
    B = cur.shape[0]
    d = dist[np.arange(B)[:, None], cur]  # (B, P, N)
    back = dist[:, None, :, 0]
    finish = np.maximum(clock[..., None] + d, tl[:, None, :]) + ts[:, None, :]
    ok = ~visited & (finish <= tr[:, None, :] + EPS)
    dem = demand[:, None, :]
    pick = pickup[:, None, :]
    cap_pick = (lh_left[..., None] <= 0) & (dem <= load_b[..., None] + EPS)
    cap_line = dem <= load_l[..., None] + EPS
    ok &= np.where(pick, cap_pick, cap_line)
    open_b = open_[:, None, None]
    rho_b = rho[:, None, None]
    open_ok = used[..., None] + d <= rho_b + EPS
    closed_ok = (finish + back <= horizon[:, None, None] + EPS) & (
        used[..., None] + d + back <= rho_b + EPS)
    ok &= np.where(open_b, open_ok, closed_ok)
    ok[..., 0] = cur != 0
    ok[done] = False
    ok[done, 0] = True
    return ok


@njit
def step_numba(actions, cur, visited, load_l, load_b, clock, used, lh_left, n_left, done, cost,
               dist, demand, pickup, tl, ts, open_):
    B, P = cur.shape
    for b in range(B):
        for p in range(P):
            if done[b, p]:
                continue
            a = actions[b, p]
            d = dist[b, cur[b, p], a]
            if a == 0:
                if not open_[b]:
                    cost[b, p] += d
                clock[b, p] = 0.0
                used[b, p] = 0.0
                load_l[b, p] = 1.0
                load_b[b, p] = 1.0
            else:
                cost[b, p] += d
                used[b, p] += d
                clock[b, p] = max(clock[b, p] + d, tl[b, a]) + ts[b, a]
                # loads are clamped at 0: demands that fill the vehicle exactly can leave -1 ulp
                if pickup[b, a]:
                    load_b[b, p] = max(load_b[b, p] - demand[b, a], 0.0)
                else:
                    load_l[b, p] = max(load_l[b, p] - demand[b, a], 0.0)
                    lh_left[b, p] -= 1
                visited[b, p, a] = True
                n_left[b, p] -= 1
            cur[b, p] = a
            done[b, p] = n_left[b, p] == 0 and (open_[b] or a == 0)


def step_numpy(actions, cur, visited, load_l, load_b, clock, used, lh_left, n_left, done, cost,
               dist, demand, pickup, tl, ts, open_):
    B, P = cur.shape
    bi = np.broadcast_to(np.arange(B)[:, None], (B, P))
    live = ~done
    a = actions
    d = dist[bi, cur, a]
    to_depot = live & (a == 0)
    to_cust = live & (a != 0)
    open_bp = np.broadcast_to(open_[:, None], (B, P))
    cost += np.where(to_cust | (to_depot & ~open_bp), d, 0.0)

    is_pick = pickup[bi, a]
    dem = demand[bi, a]
    new_clock = np.maximum(clock + d, tl[bi, a]) + ts[bi, a]
    clock[:] = np.where(to_cust, new_clock, np.where(to_depot, 0.0, clock))
    used[:] = np.where(to_cust, used + d, np.where(to_depot, 0.0, used))
    load_l[:] = np.where(to_cust & ~is_pick, np.maximum(load_l - dem, 0.0), np.where(to_depot, 1.0, load_l))
    load_b[:] = np.where(to_cust & is_pick, np.maximum(load_b - dem, 0.0), np.where(to_depot, 1.0, load_b))
    lh_left -= (to_cust & ~is_pick).astype(lh_left.dtype)
    n_left -= to_cust.astype(n_left.dtype)
    vb, vp = np.nonzero(to_cust)
    visited[vb, vp, a[vb, vp]] = True
    cur[:] = np.where(live, a, cur)
    done |= live & (n_left == 0) & (open_bp | (a == 0))


feasibility_mask = mask_numba if USE_NUMBA else mask_numpy
apply_step = step_numba if USE_NUMBA else step_numpy
