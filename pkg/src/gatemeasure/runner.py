"""Execute scenario configs and assemble run reports.

Reports are plain dicts ready for ``json.dump``.  Gate labels in reports are
1-based (gate ``1`` is ``v_1``); the Python API underneath is zero-based.
"""
from __future__ import annotations

import time

import numpy as np

from . import ensemble, gates, qla
from .config import ConfigError, ScenarioConfig, array_to_pairs
from .errors import BoundViolation
from .presets import preset_apparatus

INDEPENDENCE_TOL = 1e-10


def build_base(cfg: ScenarioConfig) -> gates.Apparatus:
    return preset_apparatus(cfg.mode, cfg.N, cfg.m, seed=cfg.seed, hbar=cfg.hbar,
                            h_system=cfg.h_system_diagonal(), custom=cfg.custom_matrix())


def build_model(cfg: ScenarioConfig):
    """Return ``(base_apparatus, measured_model)`` for a config."""
    base = build_base(cfg)
    if cfg.entangled is not None:
        return base, ensemble.build_entangled_apparatus(base, cfg.entangled.dim2)
    if cfg.subspaces is not None:
        projectors = ensemble.projectors_from_groups(cfg.zero_based_groups(), cfg.N)
        return base, ensemble.build_subspace_apparatus(projectors, base.Hhat, cfg.m, cfg.hbar)
    return base, base


def _base_report(command: str, cfg: ScenarioConfig) -> dict:
    return {"command": command, "config": cfg.model_dump(mode="json")}


def _fill_stats(report: dict, stats: ensemble.RunStatistics) -> None:
    report["closeness"] = list(stats.closeness_ref)
    report["outcomes"] = [j + 1 for j in stats.outcomes] if stats.outcomes is not None else None
    report["counts"] = list(stats.counts)
    report["final_energies"] = list(stats.final_energies) if stats.final_energies is not None else None
    report["max_deviation"] = stats.max_deviation
    report["bound_B"] = stats.bound_B
    report["bound_upper"] = stats.bound_upper
    if stats.bound_B is not None:
        envelope = max(abs(stats.bound_B), stats.bound_upper) + stats.offset
        report["deviation_envelope"] = envelope
        report["frequency_errors"] = (
            (np.abs(stats.frequencies() - np.asarray(stats.closeness_ref))).tolist() if stats.n else
            [0.0] * len(stats.counts))


def simulate(cfg: ScenarioConfig, rows: list | None = None) -> dict:
    """Run ``cfg.steps`` repeated measurements on one ledger.

    When ``rows`` is a list, one ``(step, chosen, c, rho, deviation)`` record
    per measurement is appended to it (chosen is 1-based).
    """
    t0 = time.perf_counter()
    report = _base_report("simulate", cfg)
    _, model = build_model(cfg)
    ledger = gates.EnergyLedger(cfg.energies())

    def on_step(step, chosen, c, rho, dev):
        rows.append((step, chosen + 1, list(c), list(rho), dev))

    perturb = (cfg.perturb.magnitude, cfg.perturb.period) if cfg.perturb else None
    stats = ensemble.run_repeated(model, ledger, cfg.state_vector(), cfg.steps, perturb=perturb,
                                  seed=cfg.seed, record=True,
                                  on_step=on_step if rows is not None else None)
    _fill_stats(report, stats)
    if cfg.entangled is not None:
        report["reduced_born_weights"] = ensemble.reduced_born_weights(cfg.state_vector(), cfg.N).tolist()
    if isinstance(model, ensemble.SubspaceApparatus) and model.eigenvalues is not None:
        report["eigenvalues"] = list(model.eigenvalues)
    report["wall_time"] = time.perf_counter() - t0
    return report


def born_check(cfg: ScenarioConfig, iid: bool = False) -> dict:
    """Repeated run with the prefix bounds enforced; adds a verdict and optional i.i.d. baseline."""
    t0 = time.perf_counter()
    report = _base_report("born-check", cfg)
    _, model = build_model(cfg)
    ledger = gates.EnergyLedger(cfg.energies())
    perturb = (cfg.perturb.magnitude, cfg.perturb.period) if cfg.perturb else None
    stats = ensemble.run_repeated(model, ledger, cfg.state_vector(), cfg.steps, perturb=perturb,
                                  seed=cfg.seed, record=True)
    _fill_stats(report, stats)
    report["passed"] = ensemble.born_limit_check(stats)
    if iid:
        base = ensemble.iid_reference(stats.closeness_ref, cfg.steps, cfg.seed)
        report["iid_counts"] = list(base.counts)
        report["iid_max_deviation"] = base.max_deviation
        report["iid_frequency_errors"] = (
            np.abs(base.frequencies() - np.asarray(base.closeness_ref)).tolist() if cfg.steps else
            [0.0] * len(base.counts))
    report["wall_time"] = time.perf_counter() - t0
    if not report["passed"]:
        raise BoundViolation("final frequencies fall outside the deterministic envelope")
    return report


def independence(cfg: ScenarioConfig) -> dict:
    t0 = time.perf_counter()
    report = _base_report("independence", cfg)
    app = build_base(cfg)
    H = cfg.h_system_matrix()
    if H is None:
        raise ConfigError("field 'h_system': required by the independence check")
    r = gates.independence_residual(app, H)
    report["residuals"] = r.tolist()
    report["tolerance"] = INDEPENDENCE_TOL
    report["compatible"] = gates.is_independence_compatible(r, INDEPENDENCE_TOL)
    report["verdict"] = ("independence-compatible" if report["compatible"]
                         else "not independence-compatible")
    report["wall_time"] = time.perf_counter() - t0
    return report


def trace_ops(cfg: ScenarioConfig, times, h: float = 1e-4) -> dict:
    """Branch-operator identities at each requested time."""
    t0 = time.perf_counter()
    report = _base_report("trace-ops", cfg)
    app = build_base(cfg)
    scale = max(1.0, qla.max_norm(app.Hhat)) ** 2
    rows = []
    for t in times:
        Ut = qla.evolution_operator(app.Hhat, t, app.hbar)
        total = sum(gates.u_hat_j(app, j, t) for j in range(app.N))
        rows.append({
            "t": float(t),
            "sum_residual": qla.max_norm(total - Ut),
            "schrodinger_residuals": [gates.schrodinger_residual(app, j, t, h) for j in range(app.N)],
            "traced_schrodinger_residuals": [gates.schrodinger_residual(app, j, t, h, traced=True)
                                             for j in range(app.N)],
        })
    report["h"] = h
    report["residual_scale"] = scale
    report["times"] = rows
    report["wall_time"] = time.perf_counter() - t0
    return report


def entangle(cfg: ScenarioConfig, fresh_ledgers: bool = False) -> dict:
    t0 = time.perf_counter()
    report = _base_report("entangle", cfg)
    if cfg.entangled is None:
        raise ConfigError("field 'entangled': required by the entangle command")
    _, model = build_model(cfg)
    xi = cfg.state_vector()
    ledger = gates.EnergyLedger(cfg.energies())
    stats, _ = ensemble.run_entangled(model, ledger, xi, cfg.steps,
                                      fresh_ledgers=fresh_ledgers, record=True)
    _fill_stats(report, stats)
    report["fresh_ledgers"] = fresh_ledgers
    report["reduced_born_weights"] = ensemble.reduced_born_weights(xi, cfg.N).tolist()
    report["partner_states"] = {
        str(j + 1): array_to_pairs(qla.partial_inner_left(qla.basis_vector(j, cfg.N), xi))
        for j in range(cfg.N)
    }
    report["wall_time"] = time.perf_counter() - t0
    return report
