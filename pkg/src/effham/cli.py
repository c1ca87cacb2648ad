"""Config-driven command line front end.

Subcommands:

* ``effham run CONFIG [--output P] [--format csv|json] [--epsilon LIST] [--seed N]``
* ``effham list-scenarios``
* ``effham validate-config CONFIG``

A run executes one analysis (algebra-check, spectrum, evolve, couplings,
scaling or effective) for one model, prints one line per check, and writes
a machine-readable report.  Exit codes: 0 all checks passed, 1 at least one
check failed, 2 config or usage error.  Reports are deterministic: repeated
runs on the same config are byte identical (no timestamps in the output).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics, models, rotations
from .algebra import ladder_relation_report, verify_su3_cross_relations
from .errors import ConfigError, EffhamError
from .hilbert import basis_state, collective_operator, number_operator
from .models import ModelSpec
from .rotations import SCENARIOS, EffectiveScenario

OUTPUT_DIR_ENV = "EFFHAM_OUTPUT_DIR"

ANALYSES = ("algebra-check", "spectrum", "evolve", "couplings", "scaling", "effective")
SCALING_METRICS = ("eigenvalue-error", "infidelity", "offdiag-residual")


def _fmt(x) -> str:
    """Scientific notation with 15 significant digits (deterministic)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.14e}"


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    model: ModelSpec
    analysis: str
    scenario: str | None
    form: str
    epsilons: tuple[float, ...]
    times: tuple[float, ...]
    initial_photons: tuple[int, ...]
    initial_level: int
    initial_occupations: tuple[int, ...] | None
    order_threshold: float
    metric: str
    max_order: int
    draws: int
    seed: int
    max_error: float | None
    output: Path
    fmt: str
    raw: dict[str, dict[str, str]] = field(default_factory=dict)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_times(text: str) -> tuple[float, ...]:
    """Either 'start:stop:count' or an explicit comma/space separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"time grid {text!r} must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 2:
            raise ConfigError("time grid needs at least two points")
        return tuple(np.linspace(start, stop, count))
    return _parse_floats(text)


def _model_spec(section) -> ModelSpec:
    kind = section.get("kind")
    if kind is None:
        raise ConfigError("missing model.kind")
    kwargs: dict = {"kind": kind}
    if "atoms" in section:
        kwargs["atoms"] = section.getint("atoms")
    if "n_max" in section:
        kwargs["n_max"] = _parse_ints(section["n_max"])
    if "energies" in section:
        kwargs["energies"] = _parse_floats(section["energies"])
    if "couplings" in section:
        kwargs["couplings"] = _parse_floats(section["couplings"])
    if "couplings_b" in section:
        kwargs["couplings_b"] = _parse_floats(section["couplings_b"])
    for key in ("omega_field", "omega_b", "omega", "g", "spin_j", "omega0"):
        if key in section:
            kwargs[key] = section.getfloat(key)
    try:
        return ModelSpec(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a sectioned key-value config file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "model" not in parser or "analysis" not in parser:
        raise ConfigError("config needs [model] and [analysis] sections")
    model = _model_spec(parser["model"])
    ana = parser["analysis"]
    analysis = ana.get("kind", "")
    if analysis not in ANALYSES:
        raise ConfigError(f"analysis.kind must be one of {ANALYSES}, got {analysis!r}")
    scenario = ana.get("scenario", None)
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if analysis in ("spectrum", "scaling", "effective") and scenario is None:
        raise ConfigError(f"analysis {analysis!r} needs a scenario")
    form = ana.get("form", "corrected")
    if form not in ("corrected", "printed"):
        raise ConfigError("analysis.form must be corrected or printed")
    metric = ana.get("metric", "eigenvalue-error")
    if metric not in SCALING_METRICS:
        raise ConfigError(f"analysis.metric must be one of {SCALING_METRICS}")

    out_sec = parser["output"] if "output" in parser else {}
    overrides = overrides or {}
    out_path = overrides.get("output") or out_sec.get("path", "report.csv")
    fmt = overrides.get("format") or out_sec.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output format must be csv or json")
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    output = Path(out_path)
    if not output.is_absolute():
        output = base / output

    eps_text = overrides.get("epsilon") or ana.get("epsilons", "0.04 0.02 0.01")
    seed = overrides.get("seed")
    if seed is None:
        seed = ana.getint("seed", 0)

    raw = {name: dict(parser[name]) for name in parser.sections()}
    return RunConfig(
        model=model,
        analysis=analysis,
        scenario=scenario,
        form=form,
        epsilons=_parse_floats(eps_text),
        times=_parse_times(ana.get("times", "0:100:201")),
        initial_photons=_parse_ints(ana.get("initial_photons", "0")),
        initial_level=ana.getint("initial_level", 1),
        initial_occupations=_parse_ints(ana["initial_occupations"])
        if "initial_occupations" in ana else None,
        order_threshold=ana.getfloat("order_threshold", 2.6),
        metric=metric,
        max_order=ana.getint("max_order", 3),
        draws=ana.getint("draws", 100),
        seed=int(seed),
        max_error=ana.getfloat("max_error") if "max_error" in ana else None,
        output=output,
        fmt=fmt,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------

def _build_model(cfg: RunConfig) -> models.ModelInstance:
    return models.build(cfg.model)


def _initial_state(cfg: RunConfig, model: models.ModelInstance) -> np.ndarray:
    photons = cfg.initial_photons
    if len(photons) != len(model.space.modes):
        raise ConfigError("initial_photons must give one entry per mode")
    if cfg.initial_occupations is not None:
        return basis_state(model.space, photons, occupations=cfg.initial_occupations)
    return basis_state(model.space, photons, level=cfg.initial_level)


def _scenario(cfg: RunConfig) -> EffectiveScenario:
    return EffectiveScenario(cfg.scenario, form=cfg.form)


def _run_algebra_check(cfg: RunConfig):
    model = _build_model(cfg)
    checks, rows = [], []
    for name, alg in model.algebras.items():
        rep = ladder_relation_report(alg)
        for rel, val in rep.residuals.items():
            rows.append((f"{name}:{rel}", val, rep.tol))
            checks.append(Check(f"algebra {name}:{rel}", val <= rep.tol, val, rep.tol))
    if cfg.model.kind in ("xi3", "lambda3"):
        space = model.space
        a = model.operators["a"]
        if cfg.model.kind == "xi3":
            y_plus = (a @ a) @ model.operators["S13"]
            mixed = model.operators["S12"] @ model.operators["S32"]
            rep = verify_su3_cross_relations(model.algebras["12"], model.algebras["23"],
                                             y_plus, "xi", mixed_expected=mixed)
        else:
            y_plus = model.operators["S12"] @ (model.operators["S33"] - model.operators["n"])
            rep = verify_su3_cross_relations(model.algebras["13"], model.algebras["23"],
                                             y_plus, "lambda")
        for rel, val in rep.residuals.items():
            rows.append((f"cross:{rel}", val, rep.tol))
            checks.append(Check(f"cross {rel}", val <= rep.tol, val, rep.tol))
        for rel, val in (rep.extras or {}).items():
            rows.append((f"cross:{rel} (informational)", val, math.nan))
    header = ("relation", "residual", "tolerance")
    data = [(r[0], _fmt(r[1]), _fmt(r[2]) if not math.isnan(r[2]) else "") for r in rows]
    return checks, header, data, {}


def _run_spectrum(cfg: RunConfig):
    model = _build_model(cfg)
    forms = rotations.closed_form_effective(model, _scenario(cfg))
    h_eff = forms.selected
    if forms.sector_mask is not None:
        raise ConfigError(
            f"scenario {cfg.scenario!r} is restricted to an occupation sector; "
            "spectrum comparison is only defined for full-space scenarios")
    masks = models.block_masks(model, skip_truncated=True)
    if not masks and not model.conserved:
        masks = [np.ones(model.space.dim, dtype=bool)]
    report = dynamics.compare_spectra(model.h_int, h_eff, masks)
    rows = []
    for b, (mask, blk) in enumerate(zip(masks, report.blocks)):
        idx = np.where(mask)[0]
        ev_exact = np.linalg.eigvalsh(model.h_int.matrix[np.ix_(idx, idx)])
        ev_eff = np.linalg.eigvalsh(h_eff.matrix[np.ix_(idx, idx)])
        for k, (x, y) in enumerate(zip(ev_exact, ev_eff)):
            rows.append((b, k, _fmt(x), _fmt(y), _fmt(abs(x - y))))
    checks = [Check("block-structure", True, report.block_leakage, 1e-10)]
    for name, val in forms.guards.items():
        checks.append(Check(f"guard {name}", True, val))
    if cfg.max_error is not None:
        checks.append(Check("max-eigenvalue-error", report.max_error <= cfg.max_error,
                            report.max_error, cfg.max_error))
    else:
        checks.append(Check("max-eigenvalue-error", True, report.max_error))
    header = ("block_id", "index", "exact_ev", "eff_ev", "abs_err")
    extra = {"max_error": report.max_error, "mean_error": report.mean_error,
             "deviation_printed_vs_corrected": forms.deviation_norm}
    return checks, header, rows, extra


def _default_observables(model: models.ModelInstance):
    obs = {}
    for m in range(len(model.space.modes)):
        obs[f"n{m}" if len(model.space.modes) > 1 else "n"] = number_operator(model.space, m)
    for lvl in range(1, model.space.ensemble.levels + 1):
        obs[f"P{lvl}"] = collective_operator(model.space, lvl, lvl)
    for name, op in model.conserved.items():
        obs[f"<{name}>"] = op
    return obs


def _run_evolve(cfg: RunConfig):
    model = _build_model(cfg)
    psi0 = _initial_state(cfg, model)
    obs = _default_observables(model)
    traj = dynamics.evolve(model.h_int, psi0, cfg.times, observables=obs)
    checks = [Check("norm-conservation", traj.norm_drift() <= 1e-10,
                    traj.norm_drift(), 1e-10)]
    for name in model.conserved:
        series = traj.observables[f"<{name}>"]
        drift = float(np.ptp(series))
        checks.append(Check(f"conserved <{name}>", drift <= 1e-9, drift, 1e-9))
    columns = ["time"] + list(obs.keys())
    infid = None
    if cfg.scenario is not None:
        forms = rotations.closed_form_effective(model, _scenario(cfg))
        eff = dynamics.effective_evolution(forms.selected, psi0, cfg.times,
                                           rotation=forms.rotation)
        infid = dynamics.infidelity_series(traj, eff)
        columns.append("infidelity")
    rows = []
    for i, t in enumerate(traj.times):
        row = [_fmt(t)] + [_fmt(traj.observables[k][i]) for k in obs]
        if infid is not None:
            row.append(_fmt(infid[i]))
        rows.append(tuple(row))
    extra = {}
    if infid is not None:
        extra["max_infidelity"] = float(np.max(infid))
    return checks, tuple(columns), rows, extra


def _run_couplings(cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0.0
    for draw in range(cfg.draws):
        g = rng.uniform(0.01, 0.1, 3)
        d2 = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
        d3 = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
        if abs(d3 - d2) < 0.2 or abs(d3) < 0.2 or abs(d2) < 0.2:
            continue
        deltas = [0.0, d2, d3, 0.0]
        table = rotations.coupling_table(g, deltas, max_order=cfg.max_order)
        closed = {
            "lam12": g[0] * g[1] * (2 * d2 - d3) / (d2 * (d3 - d2)),
            "lam22": g[1] * g[2] * (2 * d3 - d2) / (d3 * (d2 - d3)),
            "lam13": 3 * g[0] * g[1] * g[2] / (d2 * d3),
        }
        got = {"lam12": table.lam_at(1, 2), "lam22": table.lam_at(2, 2),
               "lam13": table.lam_at(1, 3)}
        for key in closed:
            rel = abs(got[key] - closed[key]) / max(abs(closed[key]), 1e-300)
            worst = max(worst, rel)
            rows.append((draw, key, _fmt(got[key]), _fmt(closed[key]), _fmt(rel)))
    checks = [Check("recurrence-vs-closed-forms", worst <= 1e-12, worst, 1e-12)]
    header = ("draw", "constant", "recurrence", "closed_form", "rel_err")
    return checks, header, rows, {"draws_used": len(rows) // 3}


def _scaled_model(cfg: RunConfig, eps: float) -> models.ModelInstance:
    """Rebuild the model with couplings scaled so the expansion parameter is eps."""
    spec = cfg.model
    if spec.kind == "spin-in-field":
        return models.build(ModelSpec(kind=spec.kind, omega=spec.omega,
                                      g=eps * abs(spec.omega), spin_j=spec.spin_j))
    if spec.kind == "dicke":
        delta = abs(spec.omega0 - spec.omega_field)
        return models.build(ModelSpec(kind=spec.kind, omega_field=spec.omega_field,
                                      omega0=spec.omega0, g=eps * delta,
                                      atoms=spec.atoms, n_max=spec.n_max))
    model0 = models.build(spec)
    current = max(abs(t.epsilon) for t in model0.interactions if t.detuning != 0)
    return models.build(models.with_scaled_couplings(spec, eps / current))


def _run_scaling(cfg: RunConfig):
    rows = []

    def metric(eps: float) -> float:
        model = _scaled_model(cfg, eps)
        forms = rotations.closed_form_effective(model, _scenario(cfg))
        if cfg.metric == "eigenvalue-error":
            masks = models.block_masks(model, skip_truncated=True)
            if not masks:
                masks = [np.ones(model.space.dim, dtype=bool)]
            report = dynamics.compare_spectra(model.h_int, forms.selected, masks)
            for b, blk in enumerate(report.blocks):
                rows.append((_fmt(eps), _fmt(blk.max_error), b))
            return report.max_error
        if cfg.metric == "offdiag-residual":
            gen, _ = rotations.eliminating_generator(model)
            val = rotations.cancellation_residual(model.h_int, rotations.matrix_exponential(gen))
            rows.append((_fmt(eps), _fmt(val), 0))
            return val
        psi0 = _initial_state(cfg, model)
        traj = dynamics.evolve(model.h_int, psi0, cfg.times)
        eff = dynamics.effective_evolution(forms.selected, psi0, cfg.times,
                                           rotation=forms.rotation)
        val = float(np.max(dynamics.infidelity_series(traj, eff)))
        rows.append((_fmt(eps), _fmt(val), 0))
        return val

    fit = dynamics.scaling_study(metric, cfg.epsilons)
    passed = (not math.isnan(fit.order)) and fit.order >= cfg.order_threshold
    checks = [Check("scaling-order", passed, fit.order, cfg.order_threshold,
                    detail=f"residual={fit.residual:.3g} saturated={fit.saturated}")]
    header = ("epsilon", "metric", "block_id")
    extra = {"fitted_order": fit.order, "fit_residual": fit.residual,
             "saturated": fit.saturated}
    return checks, header, rows, extra


def _run_effective(cfg: RunConfig):
    model = _build_model(cfg)
    forms = rotations.closed_form_effective(model, _scenario(cfg))
    rows = [("deviation_norm", _fmt(forms.deviation_norm)),
            ("deviation_relative", _fmt(forms.deviation_relative))]
    checks = []
    for name, val in forms.guards.items():
        rows.append((f"guard:{name}", _fmt(val)))
        checks.append(Check(f"guard {name}", True, val))
    for note in forms.notes:
        rows.append(("note", note))
    checks.append(Check("forms-built", True, forms.deviation_norm))
    header = ("quantity", "value")
    return checks, header, rows, {"notes": list(forms.notes)}


_RUNNERS = {
    "algebra-check": _run_algebra_check,
    "spectrum": _run_spectrum,
    "evolve": _run_evolve,
    "couplings": _run_couplings,
    "scaling": _run_scaling,
    "effective": _run_effective,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header, rows, checks, extra):
    lines = ["# effham report", f"# columns: {','.join(header)}"]
    for key, val in extra.items():
        lines.append(f"# {key} = {val}")
    for chk in checks:
        status = "PASS" if chk.passed else "FAIL"
        lines.append(f"# check {chk.name}: {status}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, cfg: RunConfig, header, rows, checks, extra):
    doc = {
        "config": cfg.raw,
        "checks": [{"name": c.name, "passed": bool(c.passed),
                    "value": None if c.value is None else float(c.value),
                    "threshold": None if c.threshold is None else float(c.threshold),
                    "detail": c.detail} for c in checks],
        "data": {"columns": list(header),
                 "rows": [[str(x) for x in row] for row in rows],
                 "extra": {k: (v if isinstance(v, (list, str, bool)) else float(v))
                           for k, v in extra.items()}},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run(config_path: str, overrides: dict | None = None) -> int:
    """Execute one configured analysis; returns the process exit code."""
    try:
        cfg = load_config(config_path, overrides)
        checks, header, rows, extra = _RUNNERS[cfg.analysis](cfg)
    except (ConfigError, EffhamError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for chk in checks:
        status = "PASS" if chk.passed else "FAIL"
        parts = [f"[{status}] {chk.name}"]
        if chk.value is not None:
            parts.append(f"value={chk.value:.6g}")
        if chk.threshold is not None:
            parts.append(f"threshold={chk.threshold:.6g}")
        if chk.detail:
            parts.append(chk.detail)
        print(" ".join(parts))
    if cfg.fmt == "csv":
        _write_csv(cfg.output, header, rows, checks, extra)
    else:
        _write_json(cfg.output, cfg, header, rows, checks, extra)
    print(f"report written to {cfg.output}")
    return 0 if all(c.passed for c in checks) else 1


def list_scenarios() -> int:
    """Print the table of effective-Hamiltonian scenarios."""
    width = max(len(s) for s in SCENARIOS)
    print(f"{'scenario':{width}}  {'model':14}  guards / effective form")
    print("-" * 100)
    for info in SCENARIOS.values():
        kinds = ",".join(info.model_kinds)
        print(f"{info.identifier:{width}}  {kinds:14}  {info.guards}")
        print(f"{'':{width}}  {'':14}  {info.sketch}")
    print(f"{len(SCENARIOS)} scenarios")
    return 0


def validate_config(config_path: str) -> int:
    try:
        load_config(config_path)
    except (ConfigError, EffhamError, ValueError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    print(f"config ok: {config_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="effham",
        description="Build model Hamiltonians, apply small nonlinear rotations, "
                    "and verify the resulting effective forms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured analysis")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="override the report path")
    p_run.add_argument("--format", choices=("csv", "json"), help="override the report format")
    p_run.add_argument("--epsilon", help="override the epsilon grid (comma separated)")
    p_run.add_argument("--seed", type=int, help="override the RNG seed")

    sub.add_parser("list-scenarios", help="print the scenario table")

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "run":
        overrides = {"output": args.output, "format": args.format,
                     "epsilon": args.epsilon, "seed": args.seed}
        return run(args.config, {k: v for k, v in overrides.items() if v is not None})
    if args.command == "list-scenarios":
        return list_scenarios()
    return validate_config(args.config)


if __name__ == "__main__":
    raise SystemExit(main())
