"""Command line driver: config in, JSON/CSV/Markdown artifacts out.

    partialwidths widths --config run.json --out results/
    partialwidths run --config run.json --override absorber.cap.strengths=[0.5,1,2]

Exit codes: 0 success, 1 a hard assertion failed, 2 config error,
3 numerical failure.  Failures also leave ``error.json`` in the output
directory.  ``PARTIALWIDTHS_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .fock import BasisBudgetError, SymmetryError, build_basis
from .lindblad import BlockDensity, StepSizeError, TraceDriftError, build_generator, propagate, rate_oracle
from .model import CAP, ECS, assemble_hamiltonian, mode_hamiltonian
from .pipeline import (REFERENCE_CONFIG, absorber_study, cap_specs, compare_methods, ecs_specs,
                       model_from_config, resonance_near)
from .spectral import NoChannelsError, NoStableResonanceError, SpectralError
from .widths import purity_closed_form

STAGES = ("spectrum", "widths", "propagate", "purity", "scan")
THREADS_ENV = "PARTIALWIDTHS_THREADS"

DEFAULT_TOLERANCES = {
    "stability_rel": 1e-4,
    "bound": 1e-8,
    "capov_rel": 1e-8,
    "orth": 1e-10,
    "sum_rule": 1e-6,
    "imag": 1e-10,
    "trace": 1e-8,
    "positivity": 1e-8,
    "decay": 1e-8,
    "rate": 1e-6,
    "purity": 1e-6,
    "cross_gamma": 1e-2,
    "cross_partial": 2e-2,
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nums = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "model": _obj({
        "num_points": {"type": "integer", "minimum": 2},
        "spacing": _pos,
        "fd_order": {"enum": [2, 4]},
        "mass": _pos,
        "well": {"oneOf": [{"type": "null"}, _obj({"depth": _num, "width": _pos}, ["depth", "width"])]},
        "interaction": {"oneOf": [{"type": "null"},
                                  _obj({"strength": _num, "range": _pos}, ["strength", "range"])]},
    }, ["num_points", "spacing"]),
    "particles": {"type": "integer", "minimum": 1},
    "absorber": _obj({
        "cap": _obj({"onset": _num, "exponent": {"type": "integer", "minimum": 2},
                     "strengths": {**_nums, "items": {"type": "number", "minimum": 0}}},
                    ["onset", "strengths"]),
        "ecs": _obj({"R0": _num, "thetas": _nums}, ["R0", "thetas"]),
    }),
    "resonance": _obj({"energy_window": {**_nums, "minItems": 2, "maxItems": 2}}),
    "run": {"type": "array", "items": {"enum": list(STAGES)}, "uniqueItems": True},
    "propagation": _obj({
        "absorber": {"enum": ["CAP", "ECS"]},
        "method": {"enum": ["rk4", "adaptive"]},
        "dt": _pos,
        "lifetimes": _pos,
        "samples": {"type": "integer", "minimum": 2},
    }),
    "scan": _obj({
        "absorber": {"enum": ["CAP", "ECS"]},
        "parameter": {"enum": ["eta", "x_cap", "theta", "R0", "samples"]},
        "values": {**_nums, "minItems": 3},
    }, ["parameter", "values"]),
    "tolerances": _obj({k: _pos for k in DEFAULT_TOLERANCES}),
    "output": _obj({"dir": {"type": "string"}, "formats": {
        "type": "array", "items": {"enum": ["json", "csv", "md"]}, "uniqueItems": True}}),
}, ["model", "particles", "absorber"])

DEFAULT_RUN = ["widths"]
DEFAULT_PROPAGATION = {"method": "adaptive", "dt": 0.5, "lifetimes": 5.0, "samples": 51}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class AssertionFailure(RuntimeError):
    pass


# -- config -----------------------------------------------------------------

def default_config() -> dict:
    cfg = copy.deepcopy(REFERENCE_CONFIG)
    cfg["run"] = list(DEFAULT_RUN)
    return cfg


def apply_override(cfg: dict, item: str) -> None:
    """``a.b.c=value``; the value is parsed as JSON, falling back to a plain string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value", key)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _error_path(err) -> str:
    path = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        if extra:
            path.append(extra[0])
    return ".".join(path)


def validate_config(cfg: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        while err.context:
            err = jsonschema.exceptions.best_match(err.context)
        raise ConfigError(err.message, _error_path(err))
    if not cfg["absorber"]:
        raise ConfigError("at least one absorber (cap or ecs) is required", "absorber")
    win = cfg.get("resonance", {}).get("energy_window")
    if win and win[0] >= win[1]:
        raise ConfigError("energy_window must be increasing", "resonance.energy_window")


def load_config(path: Optional[str], overrides=()) -> dict:
    if path is None:
        cfg = default_config()
    else:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        apply_override(cfg, item)
    validate_config(cfg)
    return cfg


# -- artifacts --------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(data, path: Path) -> None:
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def _absorber_dict(spec) -> dict:
    return {"kind": type(spec).__name__, **dataclasses.asdict(spec)}


def absorber_check(parts) -> dict:
    """Reported, not asserted: how far the absorber coefficients are from positive semidefinite."""
    h_eigs = np.linalg.eigvalsh(parts.h_I)
    v = parts.V_I
    v_eigs = np.linalg.eigvalsh(0.5 * (v + v.T)) if np.any(v) else np.zeros(1)
    return {"h_I_eigenvalue_range": [h_eigs[0], h_eigs[-1]],
            "h_I_negative_count": int(np.count_nonzero(h_eigs < -1e-12 * max(1.0, abs(h_eigs[-1])))),
            "V_I_entry_range": [float(v.min()), float(v.max())],
            "V_I_eigenvalue_range": [v_eigs[0], v_eigs[-1]]}


# -- stages -----------------------------------------------------------------

class Experiment:
    """Holds the model and the results of the stages run so far."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.tol = {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}
        self.formats = set(cfg.get("output", {}).get("formats", ["json", "csv", "md"]))
        self.model = model_from_config(cfg)
        self.n = cfg["particles"]
        self.basis = build_basis(self.model.num_points, self.n)
        self.studies = {}
        self.trajectory = None
        self.artifacts = {}
        self.failures = []

    def _write(self, name: str, data) -> None:
        self.artifacts[name] = _plain(data)
        if "json" in self.formats:
            dump_json(data, self.out / name)

    def _check(self, ok: bool, message: str) -> bool:
        if not ok:
            self.failures.append(message)
        return ok

    def specs(self, kind: str) -> list:
        section = self.cfg["absorber"].get(kind.lower())
        if section is None:
            raise ConfigError(f"no {kind} absorber configured", f"absorber.{kind.lower()}")
        return cap_specs(self.cfg) if kind == "CAP" else ecs_specs(self.cfg)

    def kinds(self) -> list[str]:
        return [k for k in ("CAP", "ECS") if k.lower() in self.cfg["absorber"]]

    # spectrum ---------------------------------------------------------------
    def spectrum(self) -> None:
        entries = []
        for kind in self.kinds():
            for spec in self.specs(kind):
                modes = mode_hamiltonian(self.model, spec)
                sectors = {}
                for n in range(self.n + 1):
                    H, _ = assemble_hamiltonian(self.basis, self.model, spec, n, modes)
                    mat = H.matrix
                    scale = max(1.0, float(np.max(np.abs(mat), initial=0.0)))
                    herm_res = float(np.max(np.abs(mat - mat.conj().T), initial=0.0))
                    hermitian = herm_res <= 1e-12 * scale
                    vals = (np.linalg.eigvalsh(mat).astype(complex) if hermitian
                            else np.linalg.eigvals(mat))
                    vals = vals[np.lexsort((vals.imag, vals.real))]
                    max_im = float(np.max(vals.imag, initial=-np.inf))
                    sectors[n] = {"dim": int(mat.shape[0]), "hermitian": hermitian,
                                  "hermitian_residual": herm_res, "max_imag": max_im,
                                  "eigenvalues": [[float(v.real), float(v.imag)] for v in vals]}
                    if kind == "CAP":
                        self._check(max_im <= self.tol["imag"],
                                    f"CAP {spec}: sector {n} eigenvalue with Im = {max_im:.3e} > 0")
                entries.append({"absorber": _absorber_dict(spec), "sectors": sectors})
        self._write("spectrum.json", {"particles": self.n, "basis": self.basis.hash,
                                      "spectra": entries})

    # widths -----------------------------------------------------------------
    def study(self, kind: str):
        if kind not in self.studies:
            specs = self.specs(kind)
            if len(specs) < 3:
                key = "strengths" if kind == "CAP" else "thetas"
                raise ConfigError("a resonance scan needs at least three absorber values",
                                  f"absorber.{kind.lower()}.{key}")
            window = self.cfg.get("resonance", {}).get("energy_window")
            self.studies[kind] = absorber_study(
                self.model, specs, "eta" if kind == "CAP" else "theta", self.n, self.basis,
                self.tol["stability_rel"], window, self.tol)
        return self.studies[kind]

    def widths(self) -> None:
        widths, stability = {}, {}
        for kind in self.kinds():
            st = self.study(kind)
            rep = st.report
            widths[kind] = {**rep.to_dict(), "resonance_energy": st.resonance.energy,
                            "open_channels": st.open_channels(),
                            "absorber_check": absorber_check(st.mid.modes.parts)}
            stability[kind] = st.stability.to_dict()
            self._check(abs(rep.sum_residual) <= self.tol["sum_rule"] * rep.gamma_total,
                        f"{kind}: sum residual {rep.sum_residual:.3e} exceeds "
                        f"{self.tol['sum_rule']:g} * Gamma")
        if len(self.studies) == 2 and "CAP" in widths and "ECS" in widths:
            cmp = compare_methods(self.studies["CAP"].report, self.studies["ECS"].report)
            devs = [r["rel_dev"] for r in cmp["channels"] if r["rel_dev"] is not None]
            cmp["gamma_within_tol"] = cmp["gamma_rel_dev"] <= self.tol["cross_gamma"]
            cmp["partials_within_tol"] = all(d <= self.tol["cross_partial"] for d in devs)
            widths["comparison"] = cmp
        self._write("widths.json", widths)
        self._write("stability.json", stability)

    # propagation -------------------------------------------------------------
    def _propagation_cfg(self) -> dict:
        p = {**DEFAULT_PROPAGATION, **self.cfg.get("propagation", {})}
        p.setdefault("absorber", self.kinds()[0])
        return p

    def propagate(self) -> None:
        p = self._propagation_cfg()
        st = self.study(p["absorber"])
        sectors = list(range(max(0, self.n - 2), self.n + 1))
        gen = build_generator(self.basis, st.mid.modes, sectors)
        dims = {k: self.basis.dim(k) for k in sectors if k != self.n}
        init = BlockDensity.from_pure(st.resonance.vector, self.n, dims)
        gamma = st.report.gamma_total
        t_end = p["lifetimes"] / gamma
        traj = propagate(init, gen, t_end, p["dt"], method=p["method"], samples=p["samples"],
                         channels=st.channels, entropy=True)
        self.trajectory = (traj, st)
        if "csv" in self.formats:
            traj.to_csv(self.out / "trajectory.csv")

        t = traj.times
        decay_err = float(np.max(np.abs(traj.P_res - np.exp(-gamma * t))))
        oracle = rate_oracle(gamma, st.report.partials, t)
        rate_err = float(np.max(np.abs(traj.P - oracle.channels)))
        branch_err = float(np.max(np.abs(traj.P[-1] - oracle.channels[-1])))
        trace_err = float(np.max(np.abs(traj.total_trace - 1.0)))
        min_eig = min(float(np.min(v)) for v in traj.min_eigenvalues.values())
        self._check(decay_err <= self.tol["decay"], f"P_res deviates from exp(-Gamma t) by {decay_err:.3e}")
        self._check(rate_err <= self.tol["rate"], f"channel populations deviate from rates by {rate_err:.3e}")
        self._check(trace_err <= self.tol["trace"], f"trace drift {trace_err:.3e}")
        self._check(min_eig >= -self.tol["positivity"], f"block eigenvalue {min_eig:.3e} below zero")
        self._write("propagation.json", {
            "absorber": p["absorber"], "method": p["method"], "dt": p["dt"], "t_end": t_end,
            "samples": len(t), "gamma_total": gamma, "decay_error": decay_err,
            "rate_error": rate_err, "final_branching_error": branch_err, "trace_error": trace_err,
            "min_block_eigenvalue": min_eig, "positivity_events": len(traj.positivity_log)})

    def purity(self) -> None:
        if self.trajectory is None:
            self.propagate()
        traj, st = self.trajectory
        rep = st.report
        closed, asym = purity_closed_form(rep.kappa, rep.energies, rep.gamma_total, traj.times)
        err = float(np.max(np.abs(traj.purity - closed)))
        self._check(err <= self.tol["purity"], f"purity deviates from closed form by {err:.3e}")
        self._write("purity.json", {"times": traj.times, "propagated": traj.purity,
                                    "closed_form": closed, "asymptote": asym, "max_error": err})

    # scan -------------------------------------------------------------------
    def scan(self) -> None:
        sc = self.cfg.get("scan")
        if sc is None:
            raise ConfigError("the scan stage needs a 'scan' section", "scan")
        kind = sc.get("absorber", self.kinds()[0])
        st = self.study(kind)
        base = st.mid.spec
        field = {"eta": "strength", "x_cap": "onset", "theta": "theta", "R0": "R0"}.get(sc["parameter"])
        if field is not None and not hasattr(base, field):
            raise ConfigError(f"parameter {sc['parameter']} does not apply to {kind}", "scan.parameter")
        rows = []
        guess = st.resonance.energy
        for value in sc["values"]:
            spec = dataclasses.replace(base, **{field: float(value)}) if field else base
            res, channels, rep = resonance_near(self.model, spec, guess, self.n, self.basis, self.tol)
            rows.append({"value": float(value), "energy": res.energy, "gamma_total": rep.gamma_total,
                         "partials": rep.partials, "sum_residual": rep.sum_residual})
        gammas = np.array([r["gamma_total"] for r in rows])
        g_drift = float((gammas.max() - gammas.min()) / abs(gammas.mean()))
        p_drift = []
        for p in st.open_channels():
            vals = np.array([r["partials"][p] if p < len(r["partials"]) else np.nan for r in rows])
            p_drift.append({"p": p, "max_rel_drift": float((vals.max() - vals.min()) / abs(vals.mean()))})
        tol = self.tol["stability_rel"]
        passed = g_drift <= tol and all(d["max_rel_drift"] <= tol for d in p_drift)
        residuals = np.abs([r["sum_residual"] for r in rows])
        self._check(passed, f"{sc['parameter']} scan drifts beyond {tol:g}")
        self._write("scan.json", {"absorber": kind, "parameter": sc["parameter"], "rows": rows,
                                  "gamma_max_rel_drift": g_drift, "partial_drifts": p_drift,
                                  "tolerance": tol, "pass": passed,
                                  "residual_decreasing": bool(np.all(np.diff(residuals) < 0))})

    # summary ----------------------------------------------------------------
    def summary(self) -> str:
        lines = ["# partialwidths summary", ""]
        w = self.artifacts.get("widths.json")
        if w:
            for kind in ("CAP", "ECS"):
                if kind not in w:
                    continue
                r = w[kind]
                lines += [f"## {kind}", "",
                          f"resonance energy: {r['resonance_energy'][0]:.10g} "
                          f"{r['resonance_energy'][1]:+.10g}i",
                          f"Gamma: {r['gamma_total']:.10g}",
                          f"sum residual: {r['sum_residual']:.3e}", "",
                          "| p | E_p | Gamma_p |", "|---|---|---|"]
                lines += [f"| {c['p']} | {c['energy']:.8g} | {c['gamma_p']:.6e} |" for c in r["partials"]]
                lines.append("")
            if "comparison" in w:
                c = w["comparison"]
                lines += ["## CAP vs ECS", "",
                          f"Gamma: CAP {c['gamma_cap']:.8g}, ECS {c['gamma_ecs']:.8g}, "
                          f"relative deviation {c['gamma_rel_dev']:.3e}", "",
                          "| p | E_p | CAP | ECS | rel. dev. |", "|---|---|---|---|---|"]
                for row in c["channels"]:
                    dev = "closed" if row["rel_dev"] is None else f"{row['rel_dev']:.3e}"
                    lines.append(f"| {row['p']} | {row['energy']:.8g} | {row['cap']:.6e} | "
                                 f"{row['ecs']:.6e} | {dev} |")
                lines.append("")
                for kind, idx in c.get("unmatched", {}).items():
                    if idx:
                        lines += [f"channels found by {kind} only: {idx}", ""]
        prop = self.artifacts.get("propagation.json")
        if prop:
            lines += ["## Propagation", "", "| quantity | value |", "|---|---|"]
            for key in ("absorber", "method", "t_end", "decay_error", "rate_error",
                        "final_branching_error", "trace_error", "min_block_eigenvalue"):
                lines.append(f"| {key} | {prop[key]} |")
            lines.append("")
        pur = self.artifacts.get("purity.json")
        if pur:
            lines += ["## Purity", "", f"asymptote: {pur['asymptote']:.10g}",
                      f"max deviation from closed form: {pur['max_error']:.3e}", ""]
        sc = self.artifacts.get("scan.json")
        if sc:
            lines += [f"## {sc['parameter']} scan ({sc['absorber']})", "",
                      "| value | Re E | Im E | Gamma | sum residual |", "|---|---|---|---|---|"]
            for r in sc["rows"]:
                lines.append(f"| {r['value']:g} | {r['energy'][0]:.10g} | {r['energy'][1]:.6e} | "
                             f"{r['gamma_total']:.8e} | {r['sum_residual']:.3e} |")
            lines += ["", f"Gamma drift {sc['gamma_max_rel_drift']:.3e} "
                          f"(tolerance {sc['tolerance']:g}): {'PASS' if sc['pass'] else 'FAIL'}", ""]
        if self.failures:
            lines += ["## Failed assertions", ""] + [f"- {f}" for f in self.failures] + [""]
        return "\n".join(lines)


def run(cfg: dict, out: Path, stages=None) -> int:
    """Run ``stages`` (default: the config's ``run`` list) and write artifacts to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    stages = list(stages or cfg.get("run", DEFAULT_RUN))
    stage = "setup"
    try:
        exp = Experiment(cfg, out)
        for stage in STAGES:
            if stage in stages:
                getattr(exp, stage)()
    except ConfigError as exc:
        return _fail(out, stage, exc, 2, path=exc.path)
    except (NoStableResonanceError, NoChannelsError, SpectralError, TraceDriftError, StepSizeError,
            BasisBudgetError, SymmetryError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        return _fail(out, stage, exc, 3)
    if "md" in exp.formats:
        (out / "summary.md").write_text(exp.summary())
    if exp.failures:
        return _fail(out, "assertions", AssertionFailure("; ".join(exp.failures)), 1,
                     failures=exp.failures)
    return 0


def _fail(out: Path, stage: str, exc: Exception, code: int, **extra) -> int:
    err = {"stage": stage, "error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    text = json.dumps(err, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return code


def _thread_limit():
    from contextlib import nullcontext

    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(raw))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partialwidths", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"run": "run the stages listed in the config",
             "spectrum": "sector spectra for every configured absorber",
             "widths": "resonance, channels and partial widths (CAP and/or ECS)",
             "propagate": "Lindblad propagation checked against rate equations",
             "purity": "propagated purity against its closed form",
             "scan": "convergence scan over one absorber parameter"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="experiment config (JSON); default: the reference model")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key with a JSON value, e.g. absorber.cap.onset=11")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as exc:
        out = Path(args.out or "partialwidths-out")
        return _fail(out, "config", exc, 2, path=exc.path)
    out = Path(args.out or cfg.get("output", {}).get("dir", "partialwidths-out"))
    stages = None if args.command == "run" else [args.command]
    with _thread_limit():
        return run(cfg, out, stages)


if __name__ == "__main__":
    sys.exit(main())
