"""Sweep drivers joining the limit formulas to Monte Carlo runs.

A run sweeps exactly one of the mixing weight w, the penalty lambda, or the
iteration count t.  Theory columns always describe the finite-p instance at
hand: the spectral law is the eigenvalue histogram of the covariance actually
built at p = round(gamma n), and for a fixed signal the direction law and the
signal energy come from the drawn vector itself.  Exchangeable signals
(random effects) are the exception; their theory averages over the draw, so
every replicate redraws the signal.

Noise is shared across grid columns within a replicate: the draw for (role,
replicate, step) does not depend on w or lambda, so curves wobble together
instead of independently.  Replicate results land in preassigned array rows
and are reduced in index order, which keeps output bytes independent of the
thread count.

Optimal-weight runs reuse the curve schema with the located weight stored in
the risk_emp_mean column; the theory columns hold the risk decomposition at
that weight.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import DEFAULT_W_GRID, ExperimentConfig, config_hash, parse_grid
from .curves import CurveRow, RiskCurve, emit_csv, write_manifest
from .finite import DesignOps, _noise, variance_monotonicity_factor
from .measures import DiscreteMeasure
from .spectra import (
    CovarianceFactors,
    RandomEffects,
    Role,
    build_covariance,
    draw_design,
    draw_signal,
    empirical_G,
    empirical_H,
    substream,
)
from .theory import (
    GSS_TOL,
    INV_PHI,
    LimitModel,
    RiskDecomposition,
    W_MIN,
    c_of_w,
    clamp_weight,
    interpolator_limit_risk,
    optimal_w,
    random_effects_risk,
    ridge_limit_risk,
)


@dataclass(frozen=True)
class SweepSpec:
    """What varies along the x-axis and the fixed path parameters."""

    var: str  # "w", "lambda" or "t"
    values: np.ndarray
    w: float | None = None
    lam: float | None = None
    t: int = 5


@dataclass
class StudyContext:
    """One resolved problem instance shared by theory and simulation."""

    cov_model: object
    signal_model: object
    cov: CovarianceFactors
    H: DiscreteMeasure
    G: DiscreteMeasure | None
    beta: np.ndarray | None
    gamma_eff: float
    sigma2: float
    bstar_eff: float
    n: int
    p: int


def build_context(cfg: ExperimentConfig) -> StudyContext:
    """Build covariance and signal once; exchangeable signals stay undrawn."""
    p = cfg.p
    cov_model = cfg.covariance_model()
    cov = build_covariance(cov_model, p)
    H = empirical_H(cov.eigenvalues)
    signal_model = cfg.signal_model()
    if isinstance(signal_model, RandomEffects):
        beta, G, bstar_eff = None, None, cfg.bstar
    else:
        beta = draw_signal(signal_model, p, seed=cfg.seed, replicate=0)
        G = empirical_G(cov.eigenvalues, cov.eigenvectors, beta)
        bstar_eff = float(beta @ beta)
    return StudyContext(
        cov_model=cov_model,
        signal_model=signal_model,
        cov=cov,
        H=H,
        G=G,
        beta=beta,
        gamma_eff=p / cfg.n,
        sigma2=cfg.sigma2,
        bstar_eff=bstar_eff,
        n=cfg.n,
        p=p,
    )


def resolve_sweep(cfg: ExperimentConfig) -> SweepSpec:
    """Pick the sweep axis: a multi-point lambda grid wins, w otherwise."""
    lam = cfg.lam
    w = cfg.w
    if cfg.mode == "optimal-w" or (lam is not None and lam.size > 1):
        if lam is None:
            raise ValueError("a lambda grid is required to sweep the penalty")
        if cfg.mode != "optimal-w":
            if w is None:
                fixed_w = INV_PHI
            elif w.size == 1:
                fixed_w = float(w[0])
            else:
                raise ValueError("cannot sweep w and lambda at once; fix one")
        else:
            fixed_w = None
        return SweepSpec(var="lambda", values=lam.copy(), w=fixed_w, t=cfg.t)
    fixed_lam = float(lam[0]) if lam is not None else None
    grid = w if w is not None else parse_grid(DEFAULT_W_GRID, "w")
    return SweepSpec(var="w", values=grid.copy(), lam=fixed_lam, t=cfg.t)


# --------------------------------------------------------------------------
# theory side


def theory_point(ctx: StudyContext, w: float, lam: float | None) -> RiskDecomposition:
    """Limit risk of the instance at one (w, lambda) point."""
    if ctx.G is None and lam is not None:
        return random_effects_risk(
            ctx.H, ctx.gamma_eff, ctx.sigma2, ctx.bstar_eff, w, lam
        )
    model = LimitModel(
        H=ctx.H,
        G=ctx.G if ctx.G is not None else ctx.H,
        gamma=ctx.gamma_eff,
        sigma2=ctx.sigma2,
        bstar=ctx.bstar_eff,
    )
    if lam is None:
        return interpolator_limit_risk(model, w)
    return ridge_limit_risk(model, w, lam)


def theory_point_at_t(ctx: StudyContext, w: float, t: int) -> RiskDecomposition:
    """Interpolator limit risk with the finite-t variance multiplier."""
    limit = theory_point(ctx, w, None)
    factor = variance_monotonicity_factor(clamp_weight(w), t)[-1]
    variance = limit.variance * factor / c_of_w(clamp_weight(w))
    return RiskDecomposition.from_parts(limit.bias, variance)


def _theory_rows(ctx: StudyContext, sweep: SweepSpec) -> tuple[list[CurveRow], list[str]]:
    rows, notes = [], []
    for value in sweep.values:
        if sweep.var == "w":
            used = clamp_weight(float(value))
            if used != float(value):
                notes.append(f"w = {value:g} clamped to {used:g} in the limit formulas")
            dec = theory_point(ctx, used, sweep.lam)
            rows.append(CurveRow(used, dec.bias, dec.variance, dec.total))
        elif sweep.var == "lambda":
            dec = theory_point(ctx, sweep.w, float(value))
            rows.append(CurveRow(float(value), dec.bias, dec.variance, dec.total))
        else:
            dec = theory_point_at_t(ctx, sweep.w, int(value))
            rows.append(CurveRow(float(value), dec.bias, dec.variance, dec.total))
    return rows, notes


def run_theory(cfg: ExperimentConfig) -> RiskCurve:
    ctx = build_context(cfg)
    sweep = resolve_sweep(cfg)
    rows, notes = _theory_rows(ctx, sweep)
    return RiskCurve(sweep_var=sweep.var, rows=rows, notes=tuple(notes))


# --------------------------------------------------------------------------
# simulation side


def _path_risks(
    ctx: StudyContext,
    cfg: ExperimentConfig,
    sweep: SweepSpec,
    rep: int,
) -> np.ndarray:
    """Risks of one replicate at every sweep point, noise shared across columns."""
    n, p = ctx.n, ctx.p
    beta = (
        ctx.beta
        if ctx.beta is not None
        else draw_signal(ctx.signal_model, p, seed=cfg.seed, replicate=rep)
    )
    design = draw_design(
        ctx.cov_model, n, p, entry_dist=cfg.entry_dist, seed=cfg.seed, replicate=rep
    )
    ops = DesignOps(design.X)
    s = ops.s
    cb = ops.V.T @ beta
    perp = beta - ops.V @ cb

    if sweep.var == "w":
        weights = sweep.values.astype(float)
        g = np.broadcast_to(ops.gains(sweep.lam)[:, None], (ops.rank, weights.size))
        snapshots = [sweep.t]
    elif sweep.var == "lambda":
        weights = np.full(sweep.values.size, float(sweep.w))
        g = s[:, None] / (s[:, None] ** 2 + n * sweep.values[None, :])
        snapshots = [sweep.t]
    else:
        weights = np.array([float(sweep.w)])
        g = ops.gains(sweep.lam)[:, None]
        snapshots = [int(v) for v in sweep.values]
    h = g * s[:, None]
    wt = 1.0 - weights

    scale = float(np.sqrt(cfg.sigma2))
    sigma = ctx.cov.sigma

    def proj_noise(role: Role, step: int) -> np.ndarray:
        rng = substream(cfg.seed, role, rep, step)
        return ops.U.T @ _noise(rng, cfg.noise_dist, n, scale)

    def column_risks(C: np.ndarray) -> np.ndarray:
        E = ops.V @ (C - cb[:, None]) - perp[:, None]
        return np.einsum("ij,ij->j", E, sigma @ E)

    recorded = []
    C = h * cb[:, None] + g * proj_noise(Role.NOISE_REAL, 0)[:, None]
    if snapshots[0] == 0:
        recorded.append(column_risks(C))
    for step in range(1, max(snapshots) + 1):
        ur = proj_noise(Role.NOISE_REAL, step)[:, None]
        us = proj_noise(Role.NOISE_SYNTH, step)[:, None]
        C = weights * (h * cb[:, None] + g * ur) + wt * (h * C + g * us)
        if step in snapshots:
            recorded.append(column_risks(C))
    if sweep.var == "t":
        return np.concatenate(recorded)
    return recorded[-1]


def simulate_points(
    cfg: ExperimentConfig, ctx: StudyContext, sweep: SweepSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Replicate-averaged risks and standard errors at each sweep point."""
    results = np.empty((cfg.reps, sweep.values.size))

    def worker(rep: int) -> None:
        results[rep, :] = _path_risks(ctx, cfg, sweep, rep)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(worker, range(cfg.reps)))
    else:
        for rep in range(cfg.reps):
            worker(rep)
    means = results.mean(axis=0)
    ses = results.std(axis=0, ddof=1) / np.sqrt(cfg.reps)
    return means, ses


def run_simulate(cfg: ExperimentConfig) -> RiskCurve:
    ctx = build_context(cfg)
    sweep = resolve_sweep(cfg)
    means, ses = simulate_points(cfg, ctx, sweep)
    rows, notes = [], []
    for value, mean, se in zip(sweep.values, means, ses):
        if sweep.var == "w":
            used = clamp_weight(float(value))
            if used != float(value):
                notes.append(
                    f"w = {value:g} simulated exactly; theory columns use {used:g}"
                )
            dec = theory_point(ctx, used, sweep.lam)
        elif sweep.var == "lambda":
            dec = theory_point(ctx, sweep.w, float(value))
        else:
            dec = theory_point_at_t(ctx, sweep.w, int(value))
        rows.append(
            CurveRow(
                float(value), dec.bias, dec.variance, dec.total,
                float(mean), float(se), cfg.reps,
            )
        )
    return RiskCurve(sweep_var=sweep.var, rows=rows, notes=tuple(notes))


def run_optimal_w(cfg: ExperimentConfig) -> RiskCurve:
    ctx = build_context(cfg)
    if cfg.lam is None:
        raise ValueError("optimal-w mode needs a lambda value or grid")
    rows, notes = [], []
    capped = False
    for lam in cfg.lam:
        w_star, _ = optimal_w(lambda w: theory_point(ctx, w, float(lam)).total)
        dec = theory_point(ctx, w_star, float(lam))
        # the section search returns an interval midpoint, so a boundary
        # optimum lands up to GSS_TOL inside it
        capped = capped or w_star >= 1.0 - W_MIN - GSS_TOL
        rows.append(
            CurveRow(float(lam), dec.bias, dec.variance, dec.total, float(w_star))
        )
    if capped:
        notes.append(
            f"search interval is [{W_MIN:g}, {1.0 - W_MIN:g}]; "
            "weights at the upper end mean the optimum is full real data"
        )
    notes.append("risk_emp_mean column holds the optimal weight")
    return RiskCurve(sweep_var="lambda", rows=rows, notes=tuple(notes))


# --------------------------------------------------------------------------
# output assembly


def _panel_kind(mode: str, sweep_var: str) -> str:
    if mode == "optimal-w":
        return "wstar_vs_lambda"
    return {"w": "risk_vs_w", "lambda": "risk_vs_lambda", "t": "risk_vs_t"}[sweep_var]


def write_run(cfg: ExperimentConfig, curve: RiskCurve, stem: str) -> dict:
    """Write one curve plus its manifest into cfg.out; returns the manifest."""
    out = _ensure_out(cfg)
    csv_name = f"{stem}.csv"
    emit_csv(curve, out / csv_name)
    entries = {
        "config_hash": config_hash(cfg),
        "seed": str(cfg.seed),
        "mode": cfg.mode,
        "n": str(cfg.n),
        "p": str(cfg.p),
        "gamma": format(cfg.gamma, "g"),
        "panel.main.kind": _panel_kind(cfg.mode, curve.sweep_var),
        "panel.main.series.1.file": csv_name,
        "panel.main.series.1.label": f"gamma={cfg.gamma:g}",
    }
    if curve.sweep_var == "w":
        entries["panel.main.refline"] = format(INV_PHI, ".12g")
    if cfg.mode == "optimal-w":
        entries["wstar_column"] = "risk_emp_mean"
    for name, source in cfg.grid_sources.items():
        entries[f"grid.{name}"] = source
    write_manifest(out / "manifest.txt", entries)
    return entries


def _ensure_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# figure drivers

FIG1_GAMMAS = (1.5, 2.0, 3.0)
FIG1_THEORY_GRID = DEFAULT_W_GRID
FIG1_EMP_GRID = "0.3:0.95:21"
FIG1C_GAMMA = 2.0
FIG1C_TSWEEP = "0:10:11"
FIG2A_GAMMAS = (1.2, 2.0, 4.0)
FIG2AB_SIGMA2 = 64.0
FIG2B_GAMMA = 2.0
FIG2_LAM_GRID = "log:0.001:1000:61"
FIG2C_LAM_GRID = "log:0.01:10:10"
FIG2C_N = 400
FIG2C_T = 10


def _gamma_tag(gamma: float) -> str:
    return format(gamma, "g").replace(".", "p")


def _protocol(cfg: ExperimentConfig, **defaults) -> ExperimentConfig:
    """Protocol values for a figure panel, yielding to explicit overrides."""
    updates = {k: v for k, v in defaults.items() if k not in cfg.explicit}
    sub = replace(cfg, **updates)
    sub.grid_sources = dict(cfg.grid_sources)
    sub.explicit = set(cfg.explicit)
    return sub


def _merged_panel_curve(cfg: ExperimentConfig) -> RiskCurve:
    """Dense theory rows plus sparse simulated rows, sorted on the weight."""
    ctx = build_context(cfg)
    theory_grid = parse_grid(FIG1_THEORY_GRID, "w")
    emp_grid = cfg.w if cfg.w is not None else parse_grid(FIG1_EMP_GRID, "w")
    t_rows, notes = _theory_rows(ctx, SweepSpec("w", theory_grid, lam=None, t=cfg.t))
    emp_sweep = SweepSpec("w", emp_grid, lam=None, t=cfg.t)
    means, ses = simulate_points(cfg, ctx, emp_sweep)
    rows = list(t_rows)
    for value, mean, se in zip(emp_grid, means, ses):
        used = clamp_weight(float(value))
        dec = theory_point(ctx, used, None)
        rows.append(
            CurveRow(
                float(value), dec.bias, dec.variance, dec.total,
                float(mean), float(se), cfg.reps,
            )
        )
    rows.sort(key=lambda row: (row.sweep_value, row.risk_emp_mean is not None))
    return RiskCurve(sweep_var="w", rows=rows, notes=tuple(notes))


def run_figure_interpolator(cfg: ExperimentConfig) -> dict:
    """Panels: risk vs w for two covariances, then risk vs t.

    Protocol: n = 200, t = 5, 100 replicates, sparse normalized signal;
    panel a is isotropic, panel b is one-step autoregressive, panel c tracks
    the iteration at the golden-ratio weight.
    """
    out = _ensure_out(cfg)
    entries = {
        "config_hash": config_hash(cfg),
        "seed": str(cfg.seed),
        "mode": cfg.mode,
        "theory_w_grid": FIG1_THEORY_GRID,
        "empirical_w_grid": FIG1_EMP_GRID,
    }
    panels = {"a": "isotropic", "b": "ar1"}
    for panel, cov in panels.items():
        entries[f"panel.{panel}.kind"] = "risk_vs_w"
        entries[f"panel.{panel}.refline"] = format(INV_PHI, ".12g")
        entries[f"panel.{panel}.title"] = (
            "Interpolator risk vs mixing weight "
            + ("(identity covariance)" if cov == "isotropic" else "(AR(1) covariance)")
        )
        for k, gamma in enumerate(FIG1_GAMMAS, start=1):
            sub = _protocol(cfg, cov=cov, signal="bern", gamma=gamma, lam=None)
            curve = _merged_panel_curve(sub)
            name = f"fig1{panel}_gamma{_gamma_tag(gamma)}.csv"
            emit_csv(curve, out / name)
            entries[f"panel.{panel}.series.{k}.file"] = name
            entries[f"panel.{panel}.series.{k}.label"] = f"gamma={gamma:g}"
            entries[f"panel.{panel}.series.{k}.p"] = str(sub.p)

    sub = _protocol(cfg, cov="isotropic", signal="bern", gamma=FIG1C_GAMMA, lam=None)
    ctx = build_context(sub)
    sweep = SweepSpec("t", parse_grid(FIG1C_TSWEEP, "t"), w=INV_PHI, lam=None, t=sub.t)
    means, ses = simulate_points(sub, ctx, sweep)
    rows = []
    for value, mean, se in zip(sweep.values, means, ses):
        dec = theory_point_at_t(ctx, INV_PHI, int(value))
        rows.append(
            CurveRow(
                float(value), dec.bias, dec.variance, dec.total,
                float(mean), float(se), sub.reps,
            )
        )
    name = "fig1c.csv"
    emit_csv(RiskCurve(sweep_var="t", rows=rows), out / name)
    entries["panel.c.kind"] = "risk_vs_t"
    entries["panel.c.title"] = "Risk vs iteration at the golden-ratio weight"
    entries["panel.c.series.1.file"] = name
    entries["panel.c.series.1.label"] = f"gamma={FIG1C_GAMMA:g}, w=1/phi"
    entries["panel.c.series.1.p"] = str(sub.p)
    write_manifest(out / "manifest.txt", entries)
    return entries


def run_figure_mixing(cfg: ExperimentConfig) -> dict:
    """Panels: optimal weight vs penalty (two models), then a robustness run.

    Panels a and b locate the optimal mixing weight across penalties for the
    isotropic and spiked models at low signal-to-noise; panel c simulates a
    correlated design whose top eigenvalue grows with p and compares it with
    the exchangeable-signal prediction.
    """
    out = _ensure_out(cfg)
    entries = {
        "config_hash": config_hash(cfg),
        "seed": str(cfg.seed),
        "mode": cfg.mode,
        "wstar_column": "risk_emp_mean",
    }
    lam_source = cfg.grid_sources.get("lam", FIG2_LAM_GRID)
    lam_grid = cfg.lam if cfg.lam is not None else parse_grid(FIG2_LAM_GRID, "lambda")

    entries["panel.a.kind"] = "wstar_vs_lambda"
    entries["panel.a.title"] = "Optimal mixing weight vs penalty (isotropic)"
    entries["panel.a.grid.lambda"] = lam_source
    for k, gamma in enumerate(FIG2A_GAMMAS, start=1):
        sub = _protocol(
            cfg, mode="optimal-w", cov="isotropic", signal="random-effects",
            gamma=gamma, sigma2=FIG2AB_SIGMA2,
        )
        sub.lam = lam_grid
        curve = run_optimal_w(sub)
        name = f"fig2a_gamma{_gamma_tag(gamma)}.csv"
        emit_csv(curve, out / name)
        entries[f"panel.a.series.{k}.file"] = name
        entries[f"panel.a.series.{k}.label"] = f"gamma={gamma:g}"
        entries[f"panel.a.series.{k}.p"] = str(sub.p)

    sub = _protocol(
        cfg, mode="optimal-w", cov="spiked", signal="spiked-aligned",
        gamma=FIG2B_GAMMA, sigma2=FIG2AB_SIGMA2,
    )
    sub.lam = lam_grid
    curve = run_optimal_w(sub)
    name = "fig2b.csv"
    emit_csv(curve, out / name)
    entries["panel.b.kind"] = "wstar_vs_lambda"
    entries["panel.b.title"] = "Optimal mixing weight vs penalty (spiked)"
    entries["panel.b.grid.lambda"] = lam_source
    entries["panel.b.series.1.file"] = name
    entries["panel.b.series.1.label"] = f"s={sub.cov_s:g}, theta={sub.signal_theta:g}"
    entries["panel.b.series.1.p"] = str(sub.p)

    sub = _protocol(
        cfg, mode="simulate", cov="equicorr", signal="random-effects",
        gamma=2.0, sigma2=1.0, n=FIG2C_N, t=FIG2C_T,
    )
    sub.lam = cfg.lam if cfg.lam is not None else parse_grid(FIG2C_LAM_GRID, "lambda")
    sub.w = np.array([INV_PHI])
    curve = run_simulate(sub)
    name = "fig2c.csv"
    emit_csv(curve, out / name)
    entries["panel.c.kind"] = "risk_vs_lambda"
    entries["panel.c.title"] = "Risk vs penalty under equicorrelated covariates"
    entries["panel.c.grid.lambda"] = cfg.grid_sources.get("lam", FIG2C_LAM_GRID)
    entries["panel.c.series.1.file"] = name
    entries["panel.c.series.1.label"] = f"n={sub.n}, t={sub.t}, w=1/phi"
    entries["panel.c.series.1.p"] = str(sub.p)
    write_manifest(out / "manifest.txt", entries)
    return entries


# --------------------------------------------------------------------------
# selftest

def run_selftest() -> list[tuple[str, bool, str]]:
    """Fast internal consistency checks; returns (name, passed, detail) rows."""
    from .stieltjes import solve_m
    from .theory import dynamic_weights, isotropic_ridge_risk

    checks: list[tuple[str, bool, str]] = []

    sol = solve_m(-1.0, DiscreteMeasure.dirac(1.0), 2.0)
    want = np.sqrt(2.0) - 1.0
    err = abs(sol.m - want)
    checks.append(("fixed_point_reference", err < 1e-10, f"|m - (sqrt(2)-1)| = {err:.2e}"))

    seq = dynamic_weights(2)
    ok = abs(seq[1] - 2.0 / 3.0) < 1e-15 and abs(seq[2] - 5.0 / 8.0) < 1e-15
    checks.append(("dynamic_weights", ok, f"w1 = {seq[1]:.12g}, w2 = {seq[2]:.12g}"))

    dec = isotropic_ridge_risk(1.0, 2.0, 1.0, 1.0, 0.5, 1.0)
    gap = abs(dec.total - dec.bias - dec.variance)
    checks.append(("risk_decomposition", gap == 0.0, f"|total - bias - var| = {gap:.1e}"))

    cfg = ExperimentConfig(mode="simulate", gamma=1.5, n=40, reps=24, t=2, seed=7)
    cfg.lam = np.array([0.5])
    ctx = build_context(cfg)
    sweep = SweepSpec("w", np.array([0.5, 0.8]), lam=0.5, t=2)
    first, _ = simulate_points(cfg, ctx, sweep)
    second, _ = simulate_points(cfg, ctx, sweep)
    ok = bool(np.array_equal(first, second))
    checks.append(("replicate_determinism", ok, f"risks = {first.round(4).tolist()}"))

    dec = theory_point(ctx, 0.5, 0.5)
    rel = abs(first[0] - dec.total) / dec.total
    checks.append(
        ("simulation_vs_theory", rel < 0.25, f"relative gap = {rel:.3f} at n = 40")
    )
    return checks
