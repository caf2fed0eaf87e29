"""Command-line front end.

Four subcommands: ``test`` runs the eigenvalue tests on a panel CSV and
writes a per-k report; ``montecarlo`` replicates rejection-frequency
tables on synthetic designs; ``power`` simulates local power curves;
``densities`` tabulates the closed-form spacing densities. Every run
writes RFC-4180 CSVs with 17-significant-digit floats, PNG figures
rendered beside them, and a manifest listing all emitted files.

Values can come from a config file (INI sections named after the
subcommand); command-line flags override file values.
"""

import argparse
import configparser
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .densities import (
    PowerCurve,
    goe3_joint_spacing_pdf,
    goe3_spacing_ratio_pdf,
    goe3_total_spacing_pdf,
    local_power_gaussian,
    local_power_nongaussian_T2,
    wigner_surmise_pdf,
)
from .dgp import DgpConfig, draw_factor_path, draw_fixtures, generate
from .errors import (
    DegenerateProjector,
    IdentificationFailure,
    IngestError,
    InvalidInput,
    InvalidParameter,
    SimulationFailure,
)
from .linalg import second_moment, symmetrize
from .nulldist import (
    IndepErrors,
    SimulatedLaw,
    estimate_eta_q,
    estimate_instr_homo,
    estimate_lambda_hat,
    estimate_omega_nonparam,
    estimate_theta_md,
    pvalue,
    simulate_law_S,
    simulate_law_T,
    subsample_critical_value,
)
from .stats import (
    RATIO_DENOM_TOL,
    InstrumentPanel,
    PanelData,
    iv_fit,
    pca_fit,
    portfolio_aggregates,
    stat_Delta,
    stat_S,
    stat_S_star,
    stat_T,
)

__all__ = [
    "RunConfig",
    "ReportRow",
    "TestReport",
    "DensityGrid",
    "load_panel",
    "load_instruments",
    "run_test_sweep",
    "run_montecarlo",
    "run_power",
    "run_densities",
    "emit_plot_data",
    "main",
]

_MODES = ("test", "montecarlo", "power", "densities")
_STAT_ALIASES = {
    "S": "S",
    "Sstar": "S_star",
    "S_star": "S_star",
    "Tiv": "T_iv",
    "T_iv": "T_iv",
    "Delta": "Delta",
}
_SPACING_METHODS = ("indep", "arch", "nonparam")
_INSTR_METHODS = ("instr_homo", "instr_general")
_VAR_METHODS = _SPACING_METHODS + _INSTR_METHODS
_FAMILIES = ("f2", "f3", "g3", "goe3joint")
_CLI_ERRORS = (InvalidInput, InvalidParameter, IngestError, IdentificationFailure,
               SimulationFailure, DegenerateProjector, OSError)


def _parse_statistics(text) -> tuple:
    names = [p.strip() for p in str(text).split(",") if p.strip()]
    if not names:
        raise InvalidParameter("statistic selection is empty")
    out = []
    for name in names:
        if name not in _STAT_ALIASES:
            raise InvalidParameter(
                f"unknown statistic {name!r}; choose from "
                f"{sorted(set(_STAT_ALIASES))}")
        canon = _STAT_ALIASES[name]
        if canon not in out:
            out.append(canon)
    return tuple(out)


@dataclass
class RunConfig:
    """One run's worth of settings for any of the four modes."""

    mode: str
    statistics: tuple = ("S",)
    k_min: int = 0
    k_max: int = 0
    var_method: str = "indep"
    R: int = 10000
    alpha: float = 0.05
    seed: int = 0
    subsample_m: Optional[int] = None
    subsample_B: int = 1000
    panel_path: Optional[str] = None
    instruments_path: Optional[str] = None
    out_dir: str = "out"
    dgp: Optional[int] = None
    grid_path: Optional[str] = None
    reps: int = 200
    paths: int = 1
    T: Optional[int] = None
    t_minus_k: int = 2
    a_max: float = 8.0
    grid_points: Optional[int] = None
    eta_star: Optional[float] = None
    phi: float = 0.0
    family: Optional[str] = None
    grid_max: Optional[float] = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InvalidParameter(f"mode must be one of {_MODES}, got {self.mode!r}")
        if isinstance(self.statistics, str):
            self.statistics = _parse_statistics(self.statistics)
        else:
            self.statistics = _parse_statistics(",".join(self.statistics))
        if self.k_min < 0 or self.k_max < self.k_min:
            raise InvalidInput(
                f"need 0 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.var_method not in _VAR_METHODS:
            raise InvalidParameter(
                f"variance method must be one of {_VAR_METHODS}, "
                f"got {self.var_method!r}")
        if self.R < 1:
            raise InvalidInput(f"draw count must be positive, got {self.R}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameter(f"alpha must be in (0,1), got {self.alpha}")
        if self.seed < 0:
            raise InvalidInput(f"seed must be non-negative, got {self.seed}")
        if self.subsample_m is not None and self.subsample_m < 2:
            raise InvalidInput(f"subsample size must be >= 2, got {self.subsample_m}")
        if self.subsample_B < 1:
            raise InvalidInput(f"subsample count must be positive, got {self.subsample_B}")
        if self.reps < 1 or self.paths < 1:
            raise InvalidInput("reps and paths must be positive")
        if self.dgp is not None and self.dgp not in (1, 2, 3, 4):
            raise InvalidInput(f"dgp must be 1..4, got {self.dgp}")
        if self.t_minus_k < 2:
            raise InvalidInput(f"t_minus_k must be >= 2, got {self.t_minus_k}")
        if self.a_max <= 0.0:
            raise InvalidParameter(f"a_max must be positive, got {self.a_max}")
        if self.grid_points is not None and self.grid_points < 2:
            raise InvalidInput(f"grid_points must be >= 2, got {self.grid_points}")
        if self.eta_star is not None and self.eta_star <= 0.0:
            raise InvalidParameter(f"eta_star must be positive, got {self.eta_star}")
        if not 0.0 <= self.phi <= 1.0:
            raise InvalidParameter(f"phi must be in [0,1], got {self.phi}")
        if self.family is not None and self.family not in _FAMILIES:
            raise InvalidParameter(
                f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.mode == "test":
            if self.panel_path is None:
                raise InvalidInput("test mode needs a panel file")
            _require_file(self.panel_path, "panel")
            if self.instruments_path is not None:
                _require_file(self.instruments_path, "instruments")
        if self.mode == "montecarlo":
            if self.dgp is None:
                raise InvalidInput("montecarlo mode needs a dgp number")
            if self.grid_path is None:
                raise InvalidInput("montecarlo mode needs a grid file")
            _require_file(self.grid_path, "grid")
        if self.mode == "densities" and self.family is None:
            raise InvalidParameter("densities mode needs a family")


def _require_file(path, kind):
    if not os.path.isfile(path):
        raise IngestError(f"{kind} file not found: {path}")


@dataclass(frozen=True)
class ReportRow:
    """One tested (statistic, k) cell of the sweep."""

    statistic: str
    k: int
    value: float
    critical_value: float
    p_value: float
    R: int
    method: str
    warnings: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.p_value <= 1.0:
            raise InvalidInput(
                f"p-value must lie in (0,1], got {self.p_value}")


@dataclass(frozen=True)
class TestReport:
    """Sweep results plus the eigenvalue structure of the data matrices."""

    rows: tuple
    eigenvalues: dict
    spacings: dict
    ratios: dict
    statistics: tuple
    k_min: int
    k_max: int
    alpha: float

    def __post_init__(self):
        have = {(r.statistic, r.k) for r in self.rows}
        for name in self.statistics:
            for k in range(self.k_min, self.k_max + 1):
                if (name, k) not in have:
                    raise InvalidInput(
                        f"report is missing statistic {name} at k={k}")


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_id_table(path, kind):
    """Parse an asset_id-keyed CSV into (ids, header, matrix)."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot open {kind} file {path}: {exc}")
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{kind} file {path} is empty")
        if not header or header[0] != "asset_id":
            raise IngestError(
                f"{kind} header must start with 'asset_id', got {header[:1]}")
        if len(header) < 2:
            raise IngestError(f"{kind} header has no value columns")
        ids, data, seen = [], [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"{kind} row {lineno} has {len(row)} cells, "
                    f"expected {len(header)}")
            rid = row[0].strip()
            if not rid:
                raise IngestError(f"missing asset_id at {kind} row {lineno}")
            if rid in seen:
                raise IngestError(
                    f"duplicate asset_id {rid!r} at {kind} row {lineno}")
            seen.add(rid)
            vals = np.empty(len(header) - 1)
            for j, cell in enumerate(row[1:], start=1):
                cell = cell.strip()
                if not cell:
                    raise IngestError(
                        f"missing value at {kind} row {lineno}, "
                        f"column {header[j]!r} (asset {rid!r})")
                try:
                    vals[j - 1] = float(cell)
                except ValueError:
                    raise IngestError(
                        f"non-numeric value {cell!r} at {kind} row {lineno}, "
                        f"column {header[j]!r}")
                if not math.isfinite(vals[j - 1]):
                    raise IngestError(
                        f"non-finite value {cell!r} at {kind} row {lineno}, "
                        f"column {header[j]!r}")
            ids.append(rid)
            data.append(vals)
        if not data:
            raise IngestError(f"{kind} file {path} has no data rows")
        return ids, header, np.vstack(data)


def load_panel(path) -> PanelData:
    """Read a balanced panel CSV with header asset_id,t1,...,tT."""
    ids, _, y = _read_id_table(path, "panel")
    try:
        return PanelData(y=y, asset_ids=ids)
    except InvalidInput as exc:
        raise IngestError(f"panel file {path}: {exc}")


def load_instruments(path, panel: PanelData) -> InstrumentPanel:
    """Read instruments (header asset_id,z1,...,zK) aligned to a panel.

    The id sets must match exactly; rows are reordered to panel order.
    """
    ids, _, z = _read_id_table(path, "instruments")
    if panel.asset_ids is None:
        raise InvalidInput("panel has no asset ids to align instruments with")
    have, want = set(ids), set(panel.asset_ids)
    if have != want:
        diff = sorted(have.symmetric_difference(want))
        shown = ", ".join(repr(d) for d in diff[:10])
        more = "" if len(diff) <= 10 else f" (and {len(diff) - 10} more)"
        raise IngestError(
            f"instrument ids do not match panel ids; unmatched: {shown}{more}")
    pos = {rid: i for i, rid in enumerate(ids)}
    z = z[[pos[rid] for rid in panel.asset_ids]]
    try:
        return InstrumentPanel(z=z, asset_ids=list(panel.asset_ids))
    except InvalidInput as exc:
        raise IngestError(f"instruments file {path}: {exc}")


def _read_grid(path):
    """Read a montecarlo grid CSV with columns among n, T, kappa, c."""
    allowed = {"n", "T", "kappa", "c"}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"grid file {path} is empty")
        unknown = [h for h in header if h not in allowed]
        if unknown:
            raise IngestError(
                f"grid columns must be among {sorted(allowed)}, got {unknown}")
        if "n" not in header:
            raise IngestError("grid file needs an 'n' column")
        cells = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"grid row {lineno} has {len(row)} cells, "
                    f"expected {len(header)}")
            cell = {}
            for name, raw in zip(header, row):
                raw = raw.strip()
                try:
                    cell[name] = int(raw) if name in ("n", "T") else float(raw)
                except ValueError:
                    raise IngestError(
                        f"non-numeric grid value {raw!r} at row {lineno}, "
                        f"column {name!r}")
            cells.append(cell)
        if not cells:
            raise IngestError(f"grid file {path} has no rows")
        return cells


# ---------------------------------------------------------------------------
# Test sweep


def _child_seed(*keys) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def _method_for(stat_name, var_method):
    if stat_name in ("S", "S_star"):
        if var_method not in _SPACING_METHODS:
            raise InvalidParameter(
                f"variance method {var_method!r} does not apply to spacing "
                f"statistics; choose from {_SPACING_METHODS}")
        return var_method
    if stat_name == "T_iv":
        return var_method if var_method in _INSTR_METHODS else "instr_general"
    return "subsample"


def _estimate_spacing_spec(fit, method):
    if method == "indep":
        eta, q, _ = estimate_eta_q(fit)
        return IndepErrors(eta=eta, q=q)
    if method == "arch":
        return estimate_theta_md(fit, fit.T, fit.k)
    return estimate_omega_nonparam(fit)


def _spacing_cell(panel, k, method, R, alpha, seed, want_Sstar, V_y):
    """Value, critical value and p-value of the spacing statistics at one k."""
    fit = pca_fit(panel, k)
    spec = _estimate_spacing_spec(fit, method)
    law_S, law_Sstar, _ = simulate_law_S(spec, panel.T, k, fit.Q_hat, R, seed)
    out = {}
    value = math.sqrt(panel.n) * stat_S(V_y, k)
    out["S"] = (value, law_S.critical_value(alpha), pvalue(value, law_S))
    if want_Sstar:
        if law_Sstar is None:
            raise InvalidInput(
                f"spacing-ratio statistic undefined at k={k} (needs k <= T-3)")
        value = stat_S_star(V_y, k)
        out["S_star"] = (value, law_Sstar.critical_value(alpha),
                         pvalue(value, law_Sstar))
    return out


def _instr_cell(panel, instruments, k, method, R, alpha, seed, V_xi):
    iv = iv_fit(panel, instruments, k)
    if method == "instr_homo":
        spec = estimate_instr_homo(iv, instruments)
    else:
        spec = estimate_lambda_hat(iv, instruments)
    law = simulate_law_T(spec, panel.T, k, instruments.K, R, seed)
    value = panel.n * stat_T(V_xi, k)
    return value, law.critical_value(alpha), pvalue(value, law)


def _delta_cell(panel, k, m_sub, B, alpha, seed, V_y):
    crit, draws = subsample_critical_value(panel, k, m_sub, B, alpha, seed)
    value = stat_Delta(V_y, k, panel.n)
    law = SimulatedLaw(draws=np.sort(draws), R=B, seed=seed)
    return value, crit, pvalue(value, law)


def _with_context(stat_name, k, fn):
    try:
        return fn()
    except _CLI_ERRORS as exc:
        raise exc.__class__(f"statistic {stat_name} at k={k}: {exc}") from exc


def _spacing_ratio_table(vals):
    sp = vals[:-1] - vals[1:]
    num, den = sp[:-1], sp[1:]
    out = np.full(num.shape, math.inf)
    ok = den >= RATIO_DENOM_TOL
    out[ok] = num[ok] / den[ok]
    return out


def _validate_sweep_ranges(config, T, K):
    k_max = config.k_max
    if "S" in config.statistics and k_max > T - 2:
        raise InvalidInput(f"k_max must be <= T-2 = {T - 2} for statistic S")
    if "S_star" in config.statistics and k_max > T - 3:
        raise InvalidInput(
            f"k_max must be <= T-3 = {T - 3} for the spacing-ratio statistic")
    if "T_iv" in config.statistics:
        if K is None:
            raise InvalidInput("statistic T_iv needs an instruments file")
        if k_max >= K:
            raise InvalidInput(f"k_max must be < K = {K} for statistic T_iv")
        if k_max >= T:
            raise InvalidInput(f"k_max must be < T = {T} for statistic T_iv")
    if "Delta" in config.statistics:
        if config.k_min < 1:
            raise InvalidInput("the subsampling statistic needs k >= 1")
        if k_max > T - 1:
            raise InvalidInput(f"k_max must be <= T-1 = {T - 1} for Delta")


def run_test_sweep(config: RunConfig, panel: Optional[PanelData] = None,
                   instruments: Optional[InstrumentPanel] = None) -> TestReport:
    """Run every selected statistic at every k in the configured range.

    The factor fit and the variance spec are re-estimated at each k; null
    laws are simulated with seeds derived from (seed, k) so reports are
    reproducible byte for byte.
    """
    if panel is None:
        panel = load_panel(config.panel_path)
    if instruments is None and config.instruments_path is not None:
        instruments = load_instruments(config.instruments_path, panel)
    n, T = panel.n, panel.T
    K = instruments.K if instruments is not None else None
    _validate_sweep_ranges(config, T, K)

    V_y = second_moment(panel.y)
    V_xi = None
    if instruments is not None:
        _, V_xi = portfolio_aggregates(panel, instruments)

    want_S = "S" in config.statistics
    want_Sstar = "S_star" in config.statistics
    rows = []
    for k in range(config.k_min, config.k_max + 1):
        if want_S or want_Sstar:
            method = _method_for("S", config.var_method)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                cells = _with_context(
                    "S/S_star", k,
                    lambda: _spacing_cell(panel, k, method, config.R,
                                          config.alpha,
                                          _child_seed(config.seed, k, 0),
                                          want_Sstar, V_y))
            notes = _warning_notes(caught)
            for name in ("S", "S_star"):
                if name in cells and name in config.statistics:
                    value, crit, p = cells[name]
                    rows.append(ReportRow(name, k, value, crit, p, config.R,
                                          method, notes))
        if "T_iv" in config.statistics:
            method = _method_for("T_iv", config.var_method)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                value, crit, p = _with_context(
                    "T_iv", k,
                    lambda: _instr_cell(panel, instruments, k, method,
                                        config.R, config.alpha,
                                        _child_seed(config.seed, k, 1), V_xi))
            rows.append(ReportRow("T_iv", k, value, crit, p, config.R, method,
                                  _warning_notes(caught)))
        if "Delta" in config.statistics:
            m_sub = config.subsample_m
            if m_sub is None:
                m_sub = max(2, n // 4)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                value, crit, p = _with_context(
                    "Delta", k,
                    lambda: _delta_cell(panel, k, m_sub, config.subsample_B,
                                        config.alpha,
                                        _child_seed(config.seed, k, 2), V_y))
            rows.append(ReportRow("Delta", k, value, crit, p,
                                  config.subsample_B, "subsample",
                                  _warning_notes(caught)))

    eigenvalues = {"V_y": np.linalg.eigvalsh(symmetrize(V_y))[::-1]}
    if V_xi is not None:
        eigenvalues["V_xi"] = np.linalg.eigvalsh(symmetrize(V_xi))[::-1]
    spacings = {name: vals[:-1] - vals[1:] for name, vals in eigenvalues.items()}
    ratios = {name: _spacing_ratio_table(vals)
              for name, vals in eigenvalues.items()}
    return TestReport(rows=tuple(rows), eigenvalues=eigenvalues,
                      spacings=spacings, ratios=ratios,
                      statistics=config.statistics, k_min=config.k_min,
                      k_max=config.k_max, alpha=config.alpha)


def _warning_notes(caught) -> tuple:
    notes = [f"{w.category.__name__}: {w.message}" for w in caught]
    return tuple(dict.fromkeys(notes))


# ---------------------------------------------------------------------------
# Monte Carlo tables


def run_montecarlo(config: RunConfig) -> list:
    """Replicate rejection-frequency tables over a (n, T, kappa, c) grid.

    Loadings, variances and other cross-sectional quantities are drawn
    once per factor path and held fixed across repetitions; the factor
    path is drawn once per path index. Writes the table CSV, a figure,
    and a manifest; returns the written file paths.
    """
    cells = _read_grid(config.grid_path)
    os.makedirs(config.out_dir, exist_ok=True)
    table = []
    for ci, cell in enumerate(cells):
        dcfg = DgpConfig(dgp=config.dgp, n=cell["n"],
                         T=cell.get("T", config.T), kappa=cell.get("kappa", 0.0),
                         c=cell.get("c", 1.0), seed=config.seed)
        _validate_mc_ranges(config, dcfg)
        per_path = {}
        warning_count = 0
        for p in range(config.paths):
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, ci, p, 0]))
            fixtures = draw_fixtures(dcfg, rng)
            F = draw_factor_path(dcfg, rng)
            rejections = {}
            for rep in range(config.reps):
                rep_rng = np.random.default_rng(
                    np.random.SeedSequence([config.seed, ci, p, 1, rep]))
                draw = generate(dcfg, rep_rng, F_fixed=F, fixtures=fixtures)
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    rep_rej = _mc_decisions(config, dcfg, draw, ci, p, rep)
                warning_count += len(caught)
                for key, rejected in rep_rej.items():
                    rejections[key] = rejections.get(key, 0) + int(rejected)
            for key, count in rejections.items():
                per_path.setdefault(key, []).append(count / config.reps)
        for (stat_name, k), rates in sorted(per_path.items()):
            rates = np.asarray(rates)
            sd = "" if config.paths == 1 else float(np.std(rates, ddof=1))
            table.append({
                "n": dcfg.n, "T": dcfg.T, "kappa": dcfg.kappa, "c": dcfg.c,
                "statistic": stat_name, "k": k,
                "rejection": float(np.mean(rates)), "rejection_sd": sd,
                "reps": config.reps, "paths": config.paths,
                "warning_count": warning_count,
            })

    header = ["n", "T", "kappa", "c", "statistic", "k", "rejection",
              "rejection_sd", "reps", "paths", "warning_count"]
    csv_path = os.path.join(config.out_dir, "montecarlo.csv")
    _write_csv(csv_path, header, [[row[h] for h in header] for row in table])

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    by_series = {}
    for idx, row in enumerate(table):
        by_series.setdefault((row["statistic"], row["k"]), []).append(
            (idx, row["rejection"]))
    for (stat_name, k), points in sorted(by_series.items()):
        xs, ys = zip(*points)
        ax.plot(xs, ys, marker="o", label=f"{stat_name}, k={k}")
    ax.axhline(config.alpha, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("table row")
    ax.set_ylabel("rejection frequency")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = os.path.join(config.out_dir, "montecarlo.png")
    _save_fig(fig, png_path)

    entries = [
        _table_entry("montecarlo.csv", {
            "n": "cross-section size", "T": "periods",
            "kappa": "factor-strength decay exponent",
            "c": "factor-strength scale", "statistic": "statistic name",
            "k": "tested factor count",
            "rejection": "rejection frequency at level alpha",
            "rejection_sd": "std of per-path rejection rates (empty if one path)",
            "reps": "repetitions per path", "paths": "factor paths",
            "warning_count": "estimation warnings seen across repetitions",
        }),
        _figure_entry("montecarlo.png",
                      "rejection frequency by table row, one line per "
                      "(statistic, k)"),
    ]
    manifest = _write_manifest(config.out_dir, entries)
    return [csv_path, png_path, manifest]


def _validate_mc_ranges(config, dcfg):
    T = dcfg.T
    K = dcfg.K if config.dgp == 4 else None
    if "S" in config.statistics and config.k_max > T - 2:
        raise InvalidInput(f"k_max must be <= T-2 = {T - 2} for statistic S")
    if "S_star" in config.statistics and config.k_max > T - 3:
        raise InvalidInput(
            f"k_max must be <= T-3 = {T - 3} for the spacing-ratio statistic")
    if "T_iv" in config.statistics:
        if config.dgp != 4:
            raise InvalidInput("statistic T_iv needs design 4 (instruments)")
        if config.k_max >= K:
            raise InvalidInput(f"k_max must be < K = {K} for statistic T_iv")
    if "Delta" in config.statistics and config.k_min < 1:
        raise InvalidInput("the subsampling statistic needs k >= 1")


def _mc_decisions(config, dcfg, draw, ci, p, rep):
    """Rejection decisions {(statistic, k): bool} for one repetition."""
    panel = draw.panel
    V_y = second_moment(panel.y)
    V_xi = None
    if draw.instruments is not None:
        _, V_xi = portfolio_aggregates(panel, draw.instruments)
    out = {}
    want_S = "S" in config.statistics
    want_Sstar = "S_star" in config.statistics
    for k in range(config.k_min, config.k_max + 1):
        if want_S or want_Sstar:
            method = _method_for("S", config.var_method)
            cells = _spacing_cell(panel, k, method, config.R, config.alpha,
                                  _child_seed(config.seed, ci, p, 2, rep, k, 0),
                                  want_Sstar, V_y)
            for name in ("S", "S_star"):
                if name in cells and name in config.statistics:
                    value, crit, _ = cells[name]
                    out[(name, k)] = value > crit
        if "T_iv" in config.statistics:
            method = _method_for("T_iv", config.var_method)
            value, crit, _ = _instr_cell(
                panel, draw.instruments, k, method, config.R, config.alpha,
                _child_seed(config.seed, ci, p, 2, rep, k, 1), V_xi)
            out[("T_iv", k)] = value > crit
        if "Delta" in config.statistics:
            m_sub = config.subsample_m
            if m_sub is None:
                m_sub = max(2, panel.n // 4)
            value, crit, _ = _delta_cell(
                panel, k, m_sub, config.subsample_B, config.alpha,
                _child_seed(config.seed, ci, p, 2, rep, k, 2), V_y)
            out[("Delta", k)] = value > crit
    return out


# ---------------------------------------------------------------------------
# Power curves and density grids


def run_power(config: RunConfig) -> dict:
    """Simulate the configured local power curves, keyed by output name."""
    points = 41 if config.grid_points is None else config.grid_points
    a_grid = np.linspace(0.0, config.a_max, points)
    stat_choice = "S"
    for name in config.statistics:
        if name in ("S", "S_star"):
            stat_choice = name
            break
    curves = {}
    curves["power_gaussian"] = local_power_gaussian(
        config.t_minus_k, config.alpha, a_grid, config.R,
        _child_seed(config.seed, 0), statistic=stat_choice)
    if config.eta_star is not None:
        if config.t_minus_k != 2 or stat_choice != "S":
            raise InvalidParameter(
                "the excess-kurtosis power curve is defined for the spacing "
                "statistic with t_minus_k = 2")
        curves["power_nongaussian"] = local_power_nongaussian_T2(
            config.eta_star, config.phi, config.alpha, a_grid, config.R,
            _child_seed(config.seed, 1))
    return curves


@dataclass(frozen=True)
class DensityGrid:
    """A tabulated density: one or two axes plus values on their grid."""

    family: str
    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidParameter(f"unknown density family {self.family!r}")
        axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        expected = tuple(ax.shape[0] for ax in axes)
        if len(axes) not in (1, 2) or self.values.shape != expected:
            raise InvalidInput(
                f"values shape {self.values.shape} does not match axes {expected}")
        object.__setattr__(self, "axes", axes)


_FAMILY_DEFAULT_MAX = {"f2": 8.0, "f3": 12.0, "g3": 10.0, "goe3joint": 8.0}
_FAMILY_PDF = {
    "f2": wigner_surmise_pdf,
    "f3": goe3_total_spacing_pdf,
    "g3": goe3_spacing_ratio_pdf,
}


def run_densities(config: RunConfig) -> dict:
    """Tabulate the requested closed-form density, keyed by output name."""
    family = config.family
    gmax = config.grid_max
    if gmax is None:
        gmax = _FAMILY_DEFAULT_MAX[family]
    if gmax <= 0.0:
        raise InvalidParameter(f"grid_max must be positive, got {gmax}")
    if family == "goe3joint":
        points = 200 if config.grid_points is None else config.grid_points
        ax = np.linspace(0.0, gmax, points)
        values = goe3_joint_spacing_pdf(ax[:, None], ax[None, :])
        grid = DensityGrid(family=family, axes=(ax, ax), values=values)
    else:
        points = 401 if config.grid_points is None else config.grid_points
        ax = np.linspace(0.0, gmax, points)
        grid = DensityGrid(family=family, axes=(ax,),
                           values=np.asarray(_FAMILY_PDF[family](ax)))
    return {f"density_{family}": grid}


# ---------------------------------------------------------------------------
# File emission


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _save_fig(fig, path):
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _table_entry(name, columns):
    return {"name": name, "kind": "table", "columns": columns}


def _figure_entry(name, description):
    return {"name": name, "kind": "figure", "description": description}


def _write_manifest(outdir, entries):
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"files": entries}, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def _emit_report(report: TestReport, outdir, entries) -> list:
    files = []

    path = os.path.join(outdir, "report.csv")
    _write_csv(path,
               ["statistic", "k", "value", "critical_value", "p_value", "R",
                "method", "warnings"],
               [[r.statistic, r.k, r.value, r.critical_value, r.p_value, r.R,
                 r.method, "; ".join(r.warnings)] for r in report.rows])
    entries.append(_table_entry("report.csv", {
        "statistic": "statistic name", "k": "tested factor count",
        "value": "scaled statistic value",
        "critical_value": "simulated critical value at level alpha",
        "p_value": "simulated p-value", "R": "null draws",
        "method": "variance method", "warnings": "estimation warnings",
    }))
    files.append(path)

    path = os.path.join(outdir, "pvalues.csv")
    _write_csv(path, ["statistic", "k", "p_value"],
               [[r.statistic, r.k, r.p_value] for r in report.rows])
    entries.append(_table_entry("pvalues.csv", {
        "statistic": "statistic name", "k": "tested factor count",
        "p_value": "simulated p-value"}))
    files.append(path)

    tables = [
        ("eigenvalues.csv", report.eigenvalues, "eigenvalue",
         "eigenvalues in decreasing order"),
        ("spacings.csv", report.spacings, "spacing",
         "consecutive eigenvalue spacings"),
        ("ratios.csv", report.ratios, "ratio",
         "ratios of consecutive spacings"),
    ]
    for fname, mapping, column, meaning in tables:
        path = os.path.join(outdir, fname)
        rows = []
        for name in sorted(mapping):
            for j, val in enumerate(mapping[name], start=1):
                rows.append([name, j, float(val)])
        _write_csv(path, ["matrix", "position", column], rows)
        entries.append(_table_entry(fname, {
            "matrix": "source matrix (V_y or V_xi)",
            "position": "1-based position", column: meaning}))
        files.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    for name in sorted(report.eigenvalues):
        vals = report.eigenvalues[name]
        axes[0].plot(np.arange(1, vals.size + 1), vals, marker="o", label=name)
        sp = report.spacings[name]
        axes[1].plot(np.arange(1, sp.size + 1), sp, marker="s", label=name)
    axes[0].set_xlabel("position")
    axes[0].set_ylabel("eigenvalue")
    axes[0].legend(fontsize=8)
    axes[1].set_xlabel("position")
    axes[1].set_ylabel("spacing")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "eigenvalues.png")
    _save_fig(fig, path)
    entries.append(_figure_entry("eigenvalues.png",
                                 "scree and spacing plots of the data matrices"))
    files.append(path)

    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for name in report.statistics:
        pts = [(r.k, r.p_value) for r in report.rows if r.statistic == name]
        ks, ps = zip(*sorted(pts))
        ax.plot(ks, ps, marker="o", label=name)
    ax.axhline(report.alpha, color="gray", linestyle=":", linewidth=1,
               label=f"alpha = {report.alpha:g}")
    ax.set_xlabel("k")
    ax.set_ylabel("p-value")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "pvalues.png")
    _save_fig(fig, path)
    entries.append(_figure_entry("pvalues.png", "p-values against tested k"))
    files.append(path)
    return files


def _emit_power_curve(name, curve: PowerCurve, outdir, entries) -> list:
    files = []
    path = os.path.join(outdir, f"{name}.csv")
    _write_csv(path, ["a", "power"],
               [[a, p] for a, p in zip(curve.grid, curve.power)])
    entries.append(_table_entry(f"{name}.csv", {
        "a": "shift magnitude", "power": (
            f"rejection frequency of {curve.statistic} at level "
            f"{curve.alpha:g}, dimension {curve.T_minus_k}, {curve.R} draws")}))
    files.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(curve.grid, curve.power, marker="o")
    ax.axhline(curve.alpha, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("shift magnitude a")
    ax.set_ylabel("power")
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    path = os.path.join(outdir, f"{name}.png")
    _save_fig(fig, path)
    entries.append(_figure_entry(f"{name}.png",
                                 f"local power curve ({curve.statistic})"))
    files.append(path)
    return files


def _emit_density_grid(name, grid: DensityGrid, outdir, entries) -> list:
    files = []
    path = os.path.join(outdir, f"{name}.csv")
    if len(grid.axes) == 1:
        label = "r" if grid.family == "g3" else "s"
        _write_csv(path, [label, "pdf"],
                   [[x, v] for x, v in zip(grid.axes[0], grid.values)])
        entries.append(_table_entry(f"{name}.csv", {
            label: "evaluation point", "pdf": f"{grid.family} density value"}))
    else:
        rows = []
        ax0, ax1 = grid.axes
        for i, s1 in enumerate(ax0):
            for j, s2 in enumerate(ax1):
                rows.append([s1, s2, grid.values[i, j]])
        _write_csv(path, ["s1", "s2", "pdf"], rows)
        entries.append(_table_entry(f"{name}.csv", {
            "s1": "first spacing", "s2": "second spacing",
            "pdf": "joint density value"}))
    files.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if len(grid.axes) == 1:
        ax.plot(grid.axes[0], grid.values)
        ax.set_xlabel("r" if grid.family == "g3" else "s")
        ax.set_ylabel("density")
    else:
        mesh = ax.contour(grid.axes[0], grid.axes[1], grid.values.T, levels=12)
        ax.clabel(mesh, inline=True, fontsize=6)
        ax.set_xlabel("s1")
        ax.set_ylabel("s2")
    fig.tight_layout()
    path = os.path.join(outdir, f"{name}.png")
    _save_fig(fig, path)
    entries.append(_figure_entry(f"{name}.png", f"{grid.family} density"))
    files.append(path)
    return files


def emit_plot_data(obj, outdir) -> list:
    """Write plot-ready CSVs and rendered figures for a result object.

    Accepts a TestReport, a PowerCurve, a DensityGrid, or a dict of
    name -> PowerCurve | DensityGrid. A manifest.json listing every
    emitted file is written last; returns all written paths.
    """
    os.makedirs(outdir, exist_ok=True)
    entries = []
    files = []
    if isinstance(obj, TestReport):
        files += _emit_report(obj, outdir, entries)
    elif isinstance(obj, PowerCurve):
        files += _emit_power_curve("power_curve", obj, outdir, entries)
    elif isinstance(obj, DensityGrid):
        files += _emit_density_grid(f"density_{obj.family}", obj, outdir, entries)
    elif isinstance(obj, dict):
        for name in obj:
            item = obj[name]
            if isinstance(item, PowerCurve):
                files += _emit_power_curve(name, item, outdir, entries)
            elif isinstance(item, DensityGrid):
                files += _emit_density_grid(name, item, outdir, entries)
            else:
                raise InvalidInput(
                    f"cannot emit plot data for {type(item).__name__}")
    else:
        raise InvalidInput(f"cannot emit plot data for {type(obj).__name__}")
    files.append(_write_manifest(outdir, entries))
    return files


# ---------------------------------------------------------------------------
# Argument parsing and config-file merging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfactors",
        description="Rank tests for latent factor structures from trailing "
                    "eigenvalue spacings of a panel's second-moment matrix.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test a panel CSV over a range of k")
    t.add_argument("--panel", help="panel CSV (header asset_id,t1,...,tT)")
    t.add_argument("--instruments", help="instrument CSV (asset_id,z1,...,zK)")
    t.add_argument("--k-min", type=int, dest="k_min")
    t.add_argument("--k-max", type=int, dest="k_max")
    t.add_argument("--stat", help="comma list among S,Sstar,Tiv,Delta")
    t.add_argument("--var-method", dest="var_method",
                   help="indep | arch | nonparam | instr_homo | instr_general")
    t.add_argument("--draws", type=int, help="null-law simulation draws")
    t.add_argument("--alpha", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--subsample-m", type=int, dest="subsample_m")
    t.add_argument("--subsample-B", type=int, dest="subsample_B")
    t.add_argument("--out", help="output directory")
    t.add_argument("--config", help="INI config file with a [test] section")

    m = sub.add_parser("montecarlo", help="rejection-frequency tables on a "
                                          "synthetic design")
    m.add_argument("--dgp", type=int, help="design number 1..4")
    m.add_argument("--grid", help="CSV of grid cells (columns among n,T,kappa,c)")
    m.add_argument("--reps", type=int)
    m.add_argument("--paths", type=int, help="independent factor paths")
    m.add_argument("--T", type=int, dest="T")
    m.add_argument("--stat")
    m.add_argument("--k-min", type=int, dest="k_min")
    m.add_argument("--k-max", type=int, dest="k_max")
    m.add_argument("--var-method", dest="var_method")
    m.add_argument("--draws", type=int)
    m.add_argument("--alpha", type=float)
    m.add_argument("--subsample-m", type=int, dest="subsample_m")
    m.add_argument("--subsample-B", type=int, dest="subsample_B")
    m.add_argument("--seed", type=int)
    m.add_argument("--out")
    m.add_argument("--config")

    p = sub.add_parser("power", help="simulate local power curves")
    p.add_argument("--t-minus-k", type=int, dest="t_minus_k")
    p.add_argument("--alpha", type=float)
    p.add_argument("--a-max", type=float, dest="a_max")
    p.add_argument("--grid-points", type=int, dest="grid_points")
    p.add_argument("--eta-star", type=float, dest="eta_star",
                   help="excess-kurtosis scale; adds a second curve")
    p.add_argument("--phi", type=float)
    p.add_argument("--stat")
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")

    d = sub.add_parser("densities", help="tabulate closed-form spacing densities")
    d.add_argument("--family", help="f2 | f3 | g3 | goe3joint")
    d.add_argument("--grid-max", type=float, dest="grid_max")
    d.add_argument("--grid-points", type=int, dest="grid_points")
    d.add_argument("--out")
    d.add_argument("--config")
    return parser


def _load_file_section(path, mode):
    if path is None:
        return {}
    _require_file(path, "config")
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise IngestError(f"cannot parse config file {path}: {exc}")
    if not parser.has_section(mode):
        return {}
    return dict(parser.items(mode))


# (config field, file key / arg attribute, cast, default)
_MODE_FIELDS = {
    "test": [
        ("panel_path", "panel", str, None),
        ("instruments_path", "instruments", str, None),
        ("k_min", "k_min", int, 0),
        ("k_max", "k_max", int, 0),
        ("statistics", "stat", str, "S"),
        ("var_method", "var_method", str, "indep"),
        ("R", "draws", int, 10000),
        ("alpha", "alpha", float, 0.05),
        ("seed", "seed", int, 0),
        ("subsample_m", "subsample_m", int, None),
        ("subsample_B", "subsample_B", int, 1000),
        ("out_dir", "out", str, "out"),
    ],
    "montecarlo": [
        ("dgp", "dgp", int, None),
        ("grid_path", "grid", str, None),
        ("reps", "reps", int, 200),
        ("paths", "paths", int, 1),
        ("T", "T", int, None),
        ("statistics", "stat", str, "S"),
        ("k_min", "k_min", int, 0),
        ("k_max", "k_max", int, 0),
        ("var_method", "var_method", str, "indep"),
        ("R", "draws", int, 10000),
        ("alpha", "alpha", float, 0.05),
        ("subsample_m", "subsample_m", int, None),
        ("subsample_B", "subsample_B", int, 1000),
        ("seed", "seed", int, 0),
        ("out_dir", "out", str, "out"),
    ],
    "power": [
        ("t_minus_k", "t_minus_k", int, 2),
        ("alpha", "alpha", float, 0.05),
        ("a_max", "a_max", float, 8.0),
        ("grid_points", "grid_points", int, None),
        ("eta_star", "eta_star", float, None),
        ("phi", "phi", float, 0.0),
        ("statistics", "stat", str, "S"),
        ("R", "draws", int, 10000),
        ("seed", "seed", int, 0),
        ("out_dir", "out", str, "out"),
    ],
    "densities": [
        ("family", "family", str, None),
        ("grid_max", "grid_max", float, None),
        ("grid_points", "grid_points", int, None),
        ("out_dir", "out", str, "out"),
    ],
}


def config_from_args(args) -> RunConfig:
    """Build a RunConfig from parsed flags plus an optional config file."""
    mode = args.command
    filevals = _load_file_section(getattr(args, "config", None), mode)
    kwargs = {"mode": mode}
    for config_field, key, cast, default in _MODE_FIELDS[mode]:
        value = getattr(args, key, None)
        if value is None and key in filevals:
            raw = filevals[key]
            try:
                value = cast(raw)
            except ValueError:
                raise InvalidParameter(
                    f"config key {key!r} has invalid value {raw!r}")
        if value is None:
            value = default
        kwargs[config_field] = value
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if config.mode == "test":
            report = run_test_sweep(config)
            files = emit_plot_data(report, config.out_dir)
        elif config.mode == "montecarlo":
            files = run_montecarlo(config)
        elif config.mode == "power":
            files = emit_plot_data(run_power(config), config.out_dir)
        else:
            files = emit_plot_data(run_densities(config), config.out_dir)
    except _CLI_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
