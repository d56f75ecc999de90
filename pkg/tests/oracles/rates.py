"""Second evaluator for rates, harvested power and EE, written with explicit loops over links."""
import math


def _sinr_rate(sig, interf, noise):
    return math.log(1.0 + sig / (interf + noise))


def link(inst, w, s, i, j, l):
    return abs(complex(inst.channels[s, i, j] @ w[s, l])) ** 2


def noma_rates(inst, w, nu, sigma_c2, prefactor=1.0):
    N, K2 = inst.n_cells, 2 * inst.pairs
    s2 = inst.sigma2
    out = {}
    for i in range(N):
        for j in range(inst.pairs):
            f = int(inst.pairing[i, j])
            c = sigma_c2 / nu[i][j] if nu[i][j] > 0 else 0.0
            intf_near = sum(link(inst, w, s, i, j, l) for s in range(N) for l in range(K2) if (s, l) != (i, f))
            intf_far = sum(link(inst, w, s, i, f, l) for s in range(N) for l in range(K2) if (s, l) != (i, f))
            intf_own = sum(link(inst, w, s, i, j, l) for s in range(N) for l in range(K2)
                           if (s, l) not in ((i, f), (i, j)))
            r1 = _sinr_rate(link(inst, w, i, i, j, f), intf_near, s2 + c)
            r2 = _sinr_rate(link(inst, w, i, i, f, f), intf_far, s2)
            r3 = _sinr_rate(link(inst, w, i, i, j, j), intf_own, s2 + c)
            out[(i, f)] = prefactor * min(r1, r2)
            out[(i, j)] = prefactor * r3
    return out


def received(inst, w, i, j):
    return sum(link(inst, w, s, i, j, l) for s in range(w.shape[0]) for l in range(w.shape[1]))


def oma_rates(inst, w, alpha, tau):
    N, K = inst.n_cells, inst.pairs
    s2, sc2 = inst.sigma2, inst.sigma_c2
    out = {}
    for i in range(N):
        for j in range(K):
            f = int(inst.pairing[i, j])
            intf_n = sum(link(inst, w, s, i, j, l) for s in range(N) for l in range(K) if (s, l) != (i, j))
            intf_f = sum(link(inst, w, s, i, f, l) for s in range(N) for l in range(K, 2 * K) if (s, l) != (i, f))
            out[(i, j)] = tau * _sinr_rate(link(inst, w, i, i, j, j), intf_n, s2 + sc2 / alpha[i][j])
            out[(i, f)] = (1 - tau) * _sinr_rate(link(inst, w, i, i, f, f), intf_f, s2)
    return out
