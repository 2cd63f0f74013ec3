"""Command-line experiment runner.

Every subcommand reads a JSON or YAML config of the form::

    model: {family: gaussian, n: 2, E0: 1.0, lambda: [1.0, 2.0]}   # or model_file: path
    seed: 0                 # optional, overrides --seed
    tol_scale: 1.0          # optional, overrides --tol-scale
    params: {...}           # operation parameters, see README

and writes its outputs plus ``manifest.json`` into ``--out``.  Exit codes:
0 success, 2 invalid config (nothing written), 3 numerical failure,
4 partial results (manifest lists the failures).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import io as sio
from .errors import ConfigError, SaddleScatterError
from .flow import FlowOptions
from .potentials import PotentialModel, model_from_config

logger = logging.getLogger("saddlescatter")

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


class Partial(Exception):
    """Raised by a runner whose outputs are written but some items failed."""

    def __init__(self, failures: list):
        super().__init__(f"{len(failures)} item(s) failed")
        self.failures = failures


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    text = p.read_text()
    try:
        cfg = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    if "model_file" in cfg:
        mp = (p.parent / cfg["model_file"]) if not Path(cfg["model_file"]).is_absolute() else Path(cfg["model_file"])
        if not mp.exists():
            raise ConfigError(f"model_file {mp} not found")
        cfg = {**cfg, "model": yaml.safe_load(mp.read_text())}
    return cfg


def _model(cfg: dict) -> PotentialModel:
    if "model" not in cfg or not isinstance(cfg["model"], dict):
        raise ConfigError("config needs a 'model' mapping")
    return model_from_config(cfg["model"])


def _req(params: dict, key: str, kind: Callable = float):
    if key not in params:
        raise ConfigError(f"params is missing {key!r}")
    try:
        return kind(params[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params.{key}: {exc}") from exc


def _energy(params: dict, model: PotentialModel, h: float | None = None) -> float:
    """``E`` directly, or ``E1`` with ``E = E0 + h E1``."""
    if "E" in params:
        return _req(params, "E")
    if "E1" in params and h is not None:
        return model.E0 + h * _req(params, "E1")
    raise ConfigError("params needs 'E' (or 'E1' together with 'h')")


def _vec_list(values, n: int, name: str) -> np.ndarray:
    """Directions given as angles (n = 2) or as vectors."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr[None]
    if arr.ndim == 1 and n == 2:
        return np.stack([np.cos(arr), np.sin(arr)], axis=1)
    arr = np.atleast_2d(arr)
    if arr.shape[1] != n:
        raise ConfigError(f"{name} must have {n} components")
    return arr


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class Writer:
    """Collects outputs; all files are written atomically into ``out``."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []

    def text(self, name: str, text: str) -> None:
        sio.atomic_write_text(self.out / name, text)
        self.files.append(name)

    def json(self, name: str, obj: Any) -> None:
        self.text(name, sio.dump_json(obj))

    def csv(self, name: str, header: list[str], rows: list[list]) -> None:
        self.text(name, _csv_text(header, rows))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run_validate(cfg, params, model, w: Writer, ctx):
    from .potentials import GridSpec, validate_assumptions

    try:
        grid = GridSpec(**params["grid"]) if "grid" in params else None
    except TypeError as exc:
        raise ConfigError(f"params.grid: {exc}") from exc
    rep = validate_assumptions(model, grid)
    w.json("validation.json", rep.to_dict())
    if not rep.ok:
        raise SaddleScatterError("model violates the barrier assumptions (see validation.json)")


def run_flow(cfg, params, model, w: Writer, ctx):
    from .flow import PhasePoint, trajectory

    n = model.n
    t_end = _req(params, "t_end")
    ns = int(params.get("n_samples", 101))
    if "points" in params:
        pts = np.atleast_2d(np.asarray(params["points"], float))
        if pts.shape[1] != 2 * n:
            raise ConfigError(f"points need {2 * n} components")
    elif "random" in params:
        r = params["random"]
        count = int(r.get("count", 10))
        lo, hi = r.get("energy", [model.E0 - 0.2, model.E0 + 0.2])
        rad = float(r.get("radius", 1.0)) * model.length_scale
        rng = np.random.default_rng(ctx["seed"])
        rows = []
        for _ in range(1000 * count):
            if len(rows) == count:
                break
            x = rng.uniform(-rad, rad, n)
            kin = rng.uniform(lo, hi) - float(model.potential(x))
            d = rng.standard_normal(n)
            if kin > 0:
                rows.append(np.concatenate([x, np.sqrt(2 * kin) * d / np.linalg.norm(d)]))
        if len(rows) < count:
            raise ConfigError("energy window lies below the potential on the sampling box")
        pts = np.array(rows)
    else:
        raise ConfigError("flow needs 'points' or 'random'")
    ts = np.linspace(0.0, t_end, ns)
    summary = []
    for k, p in enumerate(pts):
        seg = trajectory(model, PhasePoint(p[:n], p[n:]), ts, ctx["flow"], variational=bool(params.get("variational", False)))
        name = f"trajectory_{k:04d}.csv"
        seg.write_csv(w.out / name, model, ctx["flow"])
        w.files += [name, name + ".json"]
        inv = seg.check_invariants(model)
        summary.append({"index": k, "initial": p, **inv})
    w.json("flow_summary.json", summary)


def run_manifold(cfg, params, model, w: Writer, ctx):
    from .manifolds import ManifoldOptions, sample_manifold

    opts = ManifoldOptions(eps=float(params.get("eps", 1e-3)), n_seeds=int(params.get("n_seeds", 64)),
                           n_times=int(params.get("n_times", 41)), R_patch=float(params.get("R_patch", 4.0)),
                           flow=ctx["flow"])
    for side in params.get("sides", ["+", "-"]):
        if side not in ("+", "-"):
            raise ConfigError("sides must be '+' or '-'")
        patch = sample_manifold(model, side, opts=opts)
        tag = "plus" if side == "+" else "minus"
        header, rows = patch.csv_rows()
        w.csv(f"manifold_{tag}.csv", header, rows)
        w.json(f"manifold_{tag}.json", {"side": side, "diagnostics": patch.diagnostics,
                                         "lambdas": patch.lambdas, "axes": patch.axes,
                                         "eps": patch.eps, "R_patch": patch.R_patch})


def run_scatter(cfg, params, model, w: Writer, ctx):
    from .asymptotics import AsymptoticOptions, batch_csv, perp_basis

    n = model.n
    E = _energy(params, model, params.get("h"))
    om = _vec_list(_req(params, "omega", list), n, "omega")
    zs = np.asarray(_req(params, "z", list), float)
    rows = []
    for o in om:
        B = perp_basis(o)
        zz = zs[:, None] if zs.ndim == 1 else zs
        if zz.shape[1] == n - 1:
            zz = zz @ B.T
        for z in zz:
            rows.append([*o, *z, E])
    rows = np.array(rows)
    header, out = batch_csv(model, rows, AsymptoticOptions(flow=ctx["flow"]))
    full = [["omega%d" % (i + 1) for i in range(n)] + ["z%d" % (i + 1) for i in range(n)] + ["E"] + header]
    body = [[*r, *o] for r, o in zip(rows.tolist(), out)]
    w.csv("scatter.csv", full[0], body)
    failed = [i for i, o in enumerate(out) if o[-1] == "failed"]
    if failed:
        raise Partial([{"row": i, "status": "failed"} for i in failed])


def _amplitude_item(args):
    model_cfg, omega, theta, E, h, search, oracle, flow = args
    from .amplitude import SearchSpec, flux_normalized, semiclassical_leading_amplitude
    from .asymptotics import AsymptoticOptions

    model = model_from_config(model_cfg)
    res = semiclassical_leading_amplitude(model, omega, theta, E, h, SearchSpec(**search),
                                          AsymptoticOptions(flow=flow))
    d = res.to_dict()
    d["abs_amplitude"] = abs(res.value)
    if oracle:
        from .quantum.partial_waves import partial_wave_amplitude

        ang = float(np.arctan2(omega[0] * theta[1] - omega[1] * theta[0], omega @ theta))
        pw = partial_wave_amplitude(model, E, h, [ang])
        fa = abs(flux_normalized(res.value, E, model.n))
        fq = float(abs(pw.f[0]))
        d["oracle"] = {"abs_f_partial_wave": fq, "abs_f_semiclassical": fa,
                       "relative_error": abs(fa - fq) / fq, "conversion": "(2E)^(n/4)",
                       "pw_error_estimate": float(pw.error_estimate[0])}
    return d


def run_amplitude(cfg, params, model, w: Writer, ctx):
    n = model.n
    h = _req(params, "h")
    E = _energy(params, model, h)
    om = _vec_list(_req(params, "omega", list), n, "omega")[0]
    ths = _vec_list(_req(params, "theta", list), n, "theta")
    search = dict(params.get("search", {}))
    oracle = bool(params.get("oracle", False))
    if oracle and n != 2:
        raise ConfigError("the partial-wave oracle needs n = 2")
    items = [(model.to_config(), om, th, E, h, search, oracle, ctx["flow"]) for th in ths]
    results, failures = [], []
    if ctx["jobs"] > 1 and len(items) > 1:
        with ProcessPoolExecutor(ctx["jobs"]) as ex:
            futs = [ex.submit(_amplitude_item, it) for it in items]
            outs = []
            for f in futs:
                try:
                    outs.append(f.result())
                except SaddleScatterError as exc:
                    outs.append(exc)
    else:
        outs = []
        for it in items:
            try:
                outs.append(_amplitude_item(it))
            except SaddleScatterError as exc:
                outs.append(exc)
    for k, o in enumerate(outs):
        if isinstance(o, Exception):
            failures.append({"theta": ths[k], "error": f"{type(o).__name__}: {o}"})
            results.append({"theta": ths[k], "status": "failed", "error": str(o)})
        else:
            results.append(o)
    w.json("amplitude.json", results)
    if failures:
        if len(failures) == len(items):
            raise SaddleScatterError("; ".join(f["error"] for f in failures))
        raise Partial(failures)


def run_oracle1d(cfg, params, model, w: Writer, ctx):
    from .quantum.numerov import numerov_scattering_1d

    h = _req(params, "h")
    if "E" in params:
        E = np.atleast_1d(np.asarray(params["E"], float))
    elif "E1" in params:
        E = model.E0 + h * np.atleast_1d(np.asarray(params["E1"], float))
    else:
        raise ConfigError("oracle1d needs 'E' or 'E1'")
    r = numerov_scattering_1d(model, E, h, kdx=float(params.get("kdx", 0.1)))
    rows = [[E[i], abs(r.T[i]) ** 2, abs(r.R[i]) ** 2, r.T[i].real, r.T[i].imag, r.R[i].real, r.R[i].imag,
             r.unitarity_defect[i], r.error_estimate[i]] for i in range(E.size)]
    w.csv("oracle1d.csv", ["E", "T2", "R2", "T_re", "T_im", "R_re", "R_im", "unitarity_defect", "error_estimate"], rows)


def run_oracle2d(cfg, params, model, w: Writer, ctx):
    from .quantum.partial_waves import partial_wave_amplitude

    E = _req(params, "E")
    h = _req(params, "h")
    th = np.atleast_1d(np.asarray(_req(params, "theta", list), float))
    r = partial_wave_amplitude(model, E, h, th, kdx=float(params.get("kdx", 0.1)))
    rows = [[th[i], r.f[i].real, r.f[i].imag, abs(r.f[i]), r.error_estimate[i]] for i in range(th.size)]
    w.csv("oracle2d.csv", ["theta", "f_re", "f_im", "f_abs", "error_estimate"], rows)
    w.json("oracle2d.json", {"k": r.k, "m_max": r.m_max, "dx": r.dx, "R_match": r.R_match,
                             "optical_theorem_defect": r.optical_theorem_defect(),
                             "total_cross_section": r.total_cross_section()})


def run_husimi(cfg, params, model, w: Writer, ctx):
    from .manifolds import ManifoldOptions, sample_manifold
    from .quantum.experiments import wavefront_transit
    from .quantum.grid import Grid

    h = _req(params, "h")
    g = params.get("grid", {})
    N = int(g.get("N", 512))
    X = float(g.get("X", 8.0))
    grid = Grid((N,) * model.n, ((-X, X),) * model.n)
    x0 = np.asarray(_req(params, "x0", list), float)
    xi0 = np.asarray(_req(params, "xi0", list), float)
    T = _req(params, "T")
    pc = params.get("patch", {})
    patch = sample_manifold(model, pc.get("side", "+"),
                            opts=ManifoldOptions(n_seeds=int(pc.get("n_seeds", 256)),
                                                 n_times=int(pc.get("n_times", 400)),
                                                 R_patch=float(pc.get("R_patch", 12.0)), flow=ctx["flow"]))
    pts, *_ = patch.flat()
    delta = float(params.get("delta_factor", 5.0)) * np.sqrt(h)
    res = wavefront_transit(model, h, grid, x0, xi0, T, pts, delta,
                            float(params.get("r_escape", 0.5)), dt=float(params.get("dt", 0.02)),
                            snapshot=(w.out / "final_state.ssqs") if params.get("snapshot") else None)
    if params.get("snapshot"):
        w.files.append("final_state.ssqs")
    w.json("husimi.json", {**res.to_dict(), "delta": delta, "h": h, "grid": {"N": N, "X": X}})


def run_verify(cfg, params, model, w: Writer, ctx):
    from .verifier import sampled_configurations

    audits = sampled_configurations(model, int(params.get("count", 20)), ctx["seed"],
                                    tuple(params.get("t_range", (0.2, 1.0))))
    w.json("verify.json", audits)
    bad = [a for a in audits if a.get("excess") is None]
    if bad:
        raise Partial(bad)


RUNNERS = {
    "flow": run_flow, "manifold": run_manifold, "scatter": run_scatter, "amplitude": run_amplitude,
    "oracle1d": run_oracle1d, "oracle2d": run_oracle2d, "husimi": run_husimi, "verify": run_verify,
    "validate-model": run_validate,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saddlescatter", description="Classical and semiclassical scattering off a barrier top.")
    p.add_argument("command", choices=sorted(RUNNERS))
    p.add_argument("--config", required=True, help="JSON or YAML experiment config")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply integration tolerances")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command: str, cfg: dict, out: Path, seed: int = 0, jobs: int = 1, tol_scale: float = 1.0) -> int:
    """Execute one subcommand; returns the exit status."""
    t0 = time.perf_counter()
    try:
        if str(cfg.get("operation", command)).replace("-", "") != command.replace("-", ""):
            raise ConfigError(f"config is for {cfg['operation']!r}, not {command!r}")
        seed = int(cfg.get("seed", seed))
        tol_scale = float(cfg.get("tol_scale", tol_scale))
        if tol_scale <= 0:
            raise ConfigError("tol_scale must be positive")
        params = cfg.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("'params' must be a mapping")
        model = _model(cfg)
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        return EXIT_SCHEMA
    ctx = {"seed": seed, "jobs": max(1, int(jobs)), "flow": FlowOptions().scaled(tol_scale)}
    w = Writer(out)
    status, code, extra = "ok", EXIT_OK, {}
    try:
        RUNNERS[command](cfg, params, model, w, ctx)
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        # nothing may be left behind for schema errors
        for f in w.files:
            (out / f).unlink(missing_ok=True)
        return EXIT_SCHEMA
    except Partial as exc:
        status, code, extra = "partial", EXIT_PARTIAL, {"failures": exc.failures}
        logger.warning("%s", exc)
    except SaddleScatterError as exc:
        status, code, extra = "failed", EXIT_NUMERIC, {"error": f"{type(exc).__name__}: {exc}"}
        logger.error("%s: %s", type(exc).__name__, exc)
    extra.update({"command": command, "seed": seed, "tol_scale": tol_scale,
                  "model_hash": model.config_hash()})
    sio.write_manifest(out, cfg, w.files, time.perf_counter() - t0, status, extra)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        return EXIT_SCHEMA
    return run(args.command, cfg, Path(args.out), args.seed, args.jobs, args.tol_scale)


if __name__ == "__main__":
    sys.exit(main())
