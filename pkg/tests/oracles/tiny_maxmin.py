"""Random-search oracle for max-min rate on one-cell, one-pair, two-antenna instances.

Independent of the library's rate code: rates are written out directly from
the channel arrays.  Each sample is reduced with exact one-dimensional
choices (full power, EH-tight split for PS; minimal energy-beam power for TS),
so every sample is feasible by construction.

    python3 tests/oracles/tiny_maxmin.py  ->  tests/oracles/tiny_maxmin.json
"""
import json
from pathlib import Path

import numpy as np

from swiptnoma.netmodel import Scenario, generate_instance

SEEDS = range(5)
SAMPLES = 1_000_000
CHUNK = 100_000


def tiny_scenario():
    return Scenario().with_overrides(n_cells=1, pairs_per_cell=1, antennas=2)


def _unit(rng, n, nt):
    v = rng.standard_normal((n, nt)) + 1j * rng.standard_normal((n, nt))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _params(inst):
    p = inst.scenario.power
    bw = inst.scenario.network.bandwidth
    return dict(P=p.p_max, s2=p.noise_psd * bw, sc2=p.circuit_noise_psd * bw, e=p.eh_threshold, zeta=p.eh_efficiency)


def ps_chunk(inst, rng, n):
    q = _params(inst)
    hn, hf = inst.channels[0, 0, 0], inst.channels[0, 0, 1]
    w = rng.standard_normal((n, 8))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    w *= np.sqrt(q["P"])
    wn = w[:, 0:2] + 1j * w[:, 2:4]
    wf = w[:, 4:6] + 1j * w[:, 6:8]
    a_nn, a_nf = np.abs(wn @ hn) ** 2, np.abs(wf @ hn) ** 2
    a_fn, a_ff = np.abs(wn @ hf) ** 2, np.abs(wf @ hf) ** 2
    alpha = 1.0 - q["e"] / (q["zeta"] * (a_nn + a_nf + q["s2"]))
    ok = alpha > 0
    alpha = np.where(ok, alpha, 1.0)
    c = q["sc2"] / alpha
    r_far = np.minimum(np.log1p(a_nf / (a_nn + q["s2"] + c)), np.log1p(a_ff / (a_fn + q["s2"])))
    r_near = np.log1p(a_nn / (q["s2"] + c))
    return np.where(ok, np.minimum(r_far, r_near), -np.inf)


def ts_chunk(inst, rng, n):
    q = _params(inst)
    P = q["P"]
    hn, hf = inst.channels[0, 0, 0], inst.channels[0, 0, 1]
    rho = rng.uniform(0.0, 1.0, n)
    dE = _unit(rng, n, 2)
    gE = np.abs(dE @ hn) ** 2
    pE = np.maximum(q["e"] / (rho * q["zeta"]) - q["s2"], 0.0) / gE
    ok = (pE <= P) & (rho > 0)
    theta = 1.0 - rho
    T = np.maximum(P - rho * pE, 0.0) / theta
    s = rng.uniform(0.0, 1.0, n)
    pn, pf = np.minimum(s * T, P), np.minimum((1 - s) * T, P)
    dn, df = _unit(rng, n, 2), _unit(rng, n, 2)
    a_nn, a_nf = pn * np.abs(dn @ hn) ** 2, pf * np.abs(df @ hn) ** 2
    a_fn, a_ff = pn * np.abs(dn @ hf) ** 2, pf * np.abs(df @ hf) ** 2
    r_far = np.minimum(np.log1p(a_nf / (a_nn + q["s2"])), np.log1p(a_ff / (a_fn + q["s2"])))
    r_near = np.log1p(a_nn / q["s2"])
    return np.where(ok, theta * np.minimum(r_far, r_near), -np.inf)


def best(fn, inst, seed):
    rng = np.random.default_rng(10_000 + seed)
    return float(max(fn(inst, rng, CHUNK).max() for _ in range(SAMPLES // CHUNK)))


def main():
    out = {"samples": SAMPLES, "units": "nats/s/Hz", "seeds": {}}
    for seed in SEEDS:
        inst = generate_instance(tiny_scenario(), seed)
        out["seeds"][str(seed)] = {"ps": best(ps_chunk, inst, seed), "ts": best(ts_chunk, inst, seed)}
        print(seed, out["seeds"][str(seed)])
    Path(__file__).with_suffix(".json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
