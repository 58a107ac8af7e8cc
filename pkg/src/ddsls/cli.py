"""Batch experiment driver.

Subcommands: simulate | synth | bounds | mpc | concentration | bootstrap.
Every command reads a JSON config (defaults reproduce the reference
experiment setup), is deterministic under (config, seed), writes CSV/JSON
artifacts with 17-significant-digit numbers, and exits nonzero with a
structured JSON error record on failure.  DDSLS_THREADS caps trial fan-out.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback

import numpy as np

from . import analysis, lqg, synth
from .blockops import CostWeights, obs_stack, psd_sqrt, spectral_norm, toeplitz_stack
from .experiments import compare_controllers, parallel_map
from .hankel import build_hankel
from .lti import LtiSystem, average, generate_ensemble, save_ensemble, simulate

DEFAULT_CONFIG = {
    "system": {
        "A": [[1.01, 0.01, 0.00], [0.01, 1.01, 0.01], [0.00, 0.01, 1.01]],
        "B": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "sigma2": 0.1,
    },
    "weights": {
        "Q": [[1e-3, 0.0, 0.0], [0.0, 1e-3, 0.0], [0.0, 0.0, 1e-3]],
        "R": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "terminal": "dare",
    },
    "horizons": {"L": 10, "T": 45, "H": 1000},
    "sampling": {"N": 100, "N_list": [8, 32, 128], "trials": 10, "seed": 0},
    "synthesis": {"mode": "robust", "eps": "bootstrap", "structure": "blockdiag"},
    "output_dir": "ddsls_out",
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj) -> None:
    class _Enc(json.JSONEncoder):
        def default(self, o):
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            if isinstance(o, np.ndarray):
                return o.tolist()
            return super().default(o)

    _atomic_write(path, json.dumps(obj, indent=2, cls=_Enc, allow_nan=True) + "\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def _system(cfg: dict) -> LtiSystem:
    s = cfg["system"]
    return LtiSystem(
        A=np.asarray(s["A"], dtype=float),
        B=np.asarray(s["B"], dtype=float),
        noise_std=math.sqrt(s["sigma2"]),
    )


def _weights(cfg: dict, sys_: LtiSystem) -> CostWeights:
    w = cfg["weights"]
    Q = np.asarray(w["Q"], dtype=float)
    R = np.asarray(w["R"], dtype=float)
    terminal = w.get("terminal", "dare")
    if isinstance(terminal, str):
        if terminal == "dare":
            QF = lqg.dare(sys_, Q, R)
        elif terminal == "state":
            QF = Q
        else:
            raise ValueError(f"unknown terminal weight spec {terminal!r}")
    else:
        QF = np.asarray(terminal, dtype=float)
    return CostWeights(q_state=Q, r_input=R, q_terminal=QF, horizon=cfg["horizons"]["L"])


def _out_dir(cfg: dict) -> str:
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(cfg: dict) -> dict:
    sys_ = _system(cfg)
    T = cfg["horizons"]["T"]
    N = cfg["sampling"]["N"]
    seed = cfg["sampling"]["seed"]
    ens = generate_ensemble(sys_, T, N, seed)
    out = _out_dir(cfg)
    save_ensemble(ens, out, sigma2=cfg["system"]["sigma2"])
    return {"output_dir": out, "N": N, "T": T, "seed": seed}


def _resolve_eps(cfg: dict, ens, data) -> float:
    spec = cfg["synthesis"]["eps"]
    L = cfg["horizons"]["L"]
    if spec == "bootstrap":
        return analysis.bootstrap_epsilon(
            ens, L, statistic="noise", seed=cfg["sampling"]["seed"] + 1
        )
    if spec == "true":
        return float(spectral_norm(data.hw))
    return float(spec)


def cmd_synth(cfg: dict) -> dict:
    sys_ = _system(cfg)
    weights = _weights(cfg, sys_)
    L, T = cfg["horizons"]["L"], cfg["horizons"]["T"]
    N, seed = cfg["sampling"]["N"], cfg["sampling"]["seed"]
    mode = cfg["synthesis"]["mode"]
    structure = cfg["synthesis"].get("structure", "blockdiag")

    ens = generate_ensemble(sys_, T, N, seed)
    avg = average(ens)
    data = synth.DataHankels.from_trajectory(avg, L)
    if mode == "noiseless":
        noiseless = simulate(sys_, np.zeros(sys_.state_dim), avg.u)
        data = synth.DataHankels.from_trajectory(noiseless, L)
        result = synth.synth_noiseless(data, weights)
    elif mode == "robust":
        result = synth.synth_robust(data, weights, _resolve_eps(cfg, ens, data), structure=structure)
    elif mode == "naive":
        result = synth.synth_robust(data, weights, 0.0, mode="naive", structure=structure)
    else:
        raise ValueError(f"unknown synthesis mode {mode!r}")

    out = _out_dir(cfg)
    summary = result.summary()
    summary["residuals"] = {
        "structure_max": float(
            np.abs(data.h1x @ result.ghat[: data.cols, : data.n] - np.eye(data.n)).max()
        )
    }
    _write_json(os.path.join(out, "synthesis.json"), summary)
    _write_csv(
        os.path.join(out, "phi_x.csv"),
        [f"c{j}" for j in range(result.responses.phi_x.dense.shape[1])],
        result.responses.phi_x.dense.tolist(),
    )
    _write_csv(
        os.path.join(out, "phi_u.csv"),
        [f"c{j}" for j in range(result.responses.phi_u.dense.shape[1])],
        result.responses.phi_u.dense.tolist(),
    )
    _write_csv(
        os.path.join(out, "controller.csv"),
        [f"c{j}" for j in range(result.controller.dense.shape[1])],
        result.controller.dense.tolist(),
    )
    return summary


def cmd_bounds(cfg: dict) -> dict:
    sys_ = _system(cfg)
    weights = _weights(cfg, sys_)
    L, T = cfg["horizons"]["L"], cfg["horizons"]["T"]
    seed = cfg["sampling"]["seed"]
    n = sys_.state_dim

    rng = np.random.default_rng(seed)
    u = rng.standard_normal((T, sys_.input_dim))
    noiseless = simulate(sys_, np.zeros(n), u)
    responses_star, jstar = lqg.optimal_responses(sys_, weights)
    gstar = lqg.recover_gstar(build_hankel(noiseless.x, L), build_hankel(noiseless.u, L), responses_star)

    toep = spectral_norm(toeplitz_stack(sys_.A, np.eye(n), T - L + 1))
    obsn = spectral_norm(obs_stack(sys_.A, L))
    qhalf = float(np.linalg.norm(psd_sqrt(weights.q_state)))
    eps_max = analysis.eps_precondition(gstar.norm, L, toep)

    sigma2 = cfg["system"]["sigma2"]
    delta = cfg.get("bounds", {}).get("delta", 0.05)
    nmin = analysis.sample_complexity(delta, gstar.norm, L, toep, n, T, sigma2)

    eps_grid = [0.0] + [eps_max * f for f in (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)]
    rows = []
    for eps in eps_grid:
        bound = analysis.suboptimality_bound(
            analysis.BoundInputs(
                gstar_norm=gstar.norm,
                eps=eps,
                L=L,
                T=T,
                obsnorm=obsn,
                toepnorm=toep,
                qhalf_frob=qhalf,
                jstar=jstar,
            )
        )
        rows.append([eps, bound.value, int(bound.certified)])
    out = _out_dir(cfg)
    _write_csv(os.path.join(out, "suboptimality_bounds.csv"), ["eps", "bound", "certified"], rows)

    params = analysis.TailParams(n=n, T=T, N=cfg["sampling"]["N"], sigma2=sigma2)
    tmax = 3.0 * analysis.lipschitz_shift(params) if sigma2 > 0 else 1.0
    tail_rows = [
        [t, analysis.tail_bound_matrix(float(t), params), analysis.tail_bound_lipschitz_at(float(t), params)]
        for t in np.linspace(0.0, tmax, 20)
    ]
    _write_csv(
        os.path.join(out, "tail_bounds.csv"),
        ["t", "matrix_bound", "lipschitz_bound"],
        tail_rows,
    )

    summary = {
        "gstar_norm": gstar.norm,
        "jstar": jstar,
        "toepnorm": toep,
        "obsnorm": obsn,
        "qhalf_frob": qhalf,
        "eps_precondition": eps_max,
        "sample_complexity": {"delta": delta, "N_min": nmin},
    }
    _write_json(os.path.join(out, "bounds.json"), summary)
    return summary


def cmd_mpc(cfg: dict) -> dict:
    sys_ = _system(cfg)
    weights = _weights(cfg, sys_)
    results = compare_controllers(
        sys_,
        weights,
        N_list=cfg["sampling"]["N_list"],
        trials_per_N=cfg["sampling"]["trials"],
        seed=cfg["sampling"]["seed"],
        T=cfg["horizons"]["T"],
        mpc_horizon=cfg["horizons"]["H"],
    )
    out = _out_dir(cfg)
    by_key: dict[tuple, list] = {}
    for r in results.records:
        by_key.setdefault((r.controller, r.N), []).append(r)
    for (ctrl, N), rows in by_key.items():
        _write_csv(
            os.path.join(out, f"mpc_{ctrl}_N{N}.csv"),
            [
                "trial",
                "feasible",
                "diverged",
                "cost",
                "state_norm",
                "input_norm",
                "gamma",
                "eps",
                "certified",
                "rel_subopt",
                "subopt_bound",
            ],
            [
                [
                    r.trial,
                    int(r.feasible),
                    int(r.diverged),
                    r.cost,
                    r.state_norm,
                    r.input_norm,
                    r.gamma if r.gamma is not None else math.nan,
                    r.eps if r.eps is not None else math.nan,
                    int(r.certified) if r.certified is not None else math.nan,
                    r.rel_subopt if r.rel_subopt is not None else math.nan,
                    r.subopt_bound if r.subopt_bound is not None else math.nan,
                ]
                for r in sorted(rows, key=lambda r: r.trial)
            ],
        )
    _write_json(os.path.join(out, "mpc_summary.json"), results.summary)
    return results.summary


def cmd_concentration(cfg: dict) -> dict:
    sys_ = _system(cfg)
    n = sys_.state_dim
    T = cfg["horizons"]["T"]
    L = cfg["horizons"]["L"]
    N = cfg["sampling"]["N"]
    trials = cfg["sampling"]["trials"]
    seed = cfg["sampling"]["seed"]
    sigma2 = cfg["system"]["sigma2"]
    params = analysis.TailParams(n=n, T=T, N=N, sigma2=sigma2)

    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)

    def one(s):
        rng = np.random.default_rng(int(s))
        wbar = math.sqrt(sigma2 / N) * rng.standard_normal((T, n))
        return float(analysis.hankel_norms_of_signals(wbar[None], L)[0])

    norms = np.asarray(parallel_map(one, seeds))
    tgrid = np.linspace(0.0, float(norms.max()) * 1.5, 10)
    rows = []
    for t in tgrid:
        empirical = float(np.mean(norms >= t))
        rows.append(
            [
                t,
                empirical,
                analysis.tail_bound_matrix(float(t), params),
                analysis.tail_bound_lipschitz_at(float(t), params),
            ]
        )
    out = _out_dir(cfg)
    _write_csv(
        os.path.join(out, "concentration.csv"),
        ["t", "empirical_tail", "matrix_bound", "lipschitz_bound"],
        rows,
    )
    summary = {"trials": trials, "N": N, "mean_norm": float(norms.mean()), "max_norm": float(norms.max())}
    _write_json(os.path.join(out, "concentration.json"), summary)
    return summary


def cmd_bootstrap(cfg: dict) -> dict:
    sys_ = _system(cfg)
    T = cfg["horizons"]["T"]
    L = cfg["horizons"]["L"]
    N = cfg["sampling"]["N"]
    seed = cfg["sampling"]["seed"]
    ens = generate_ensemble(sys_, T, N, seed)
    data = synth.DataHankels.from_trajectory(average(ens), L)
    eps_boot = analysis.bootstrap_epsilon(ens, L, statistic="noise", seed=seed + 1)
    eps_dev = analysis.bootstrap_epsilon(ens, L, statistic="deviation", seed=seed + 1)
    summary = {
        "N": N,
        "eps_bootstrap_noise": eps_boot,
        "eps_bootstrap_deviation": eps_dev,
        "eps_realized": float(spectral_norm(data.hw)),
    }
    _write_json(os.path.join(_out_dir(cfg), "bootstrap.json"), summary)
    return summary


_COMMANDS = {
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "bounds": cmd_bounds,
    "mpc": cmd_mpc,
    "concentration": cmd_concentration,
    "bootstrap": cmd_bootstrap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddsls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--mode", type=str, default=None, choices=["noiseless", "robust", "naive"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("sampling", {})["seed"] = args.seed
    if args.trials is not None:
        overrides.setdefault("sampling", {})["trials"] = args.trials
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.mode is not None:
        overrides.setdefault("synthesis", {})["mode"] = args.mode
    try:
        cfg = load_config(args.config, overrides)
        summary = _COMMANDS[args.command](cfg)
        print(json.dumps(summary, default=str))
        return 0
    except Exception as exc:  # pragma: no cover - exercised via CLI tests
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
            "traceback": traceback.format_exc().splitlines()[-3:],
        }
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
