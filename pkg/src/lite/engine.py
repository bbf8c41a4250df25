"""Run orchestration: the two-level evolution loop and its artifacts.

Each step enlarges the effective window, advances all subsystem states by one
accepted adaptive step, measures transport observables, trims excess
infinite-temperature sites, and then either raises the evolution level or
dispatches the information minimization, exactly one of the two.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dynamics import (
    NegativityError,
    StiffnessError,
    enlarge_window,
    manage_window,
    maybe_escalate,
    rk45_step,
)
from .hamiltonian import HamiltonianSpec, LindbladSpec, mixed_field_ising, xx_dephasing
from .lattice import LatticeState, info_lattice, local_information_values, reduce_level, total_information
from .minimizer import MinimizationEvent, minimize_window
from .observables import TransportRecord, magnetization_bump_initial, thermal_bump_initial, transport_record
from .oracle import FullState, exact_evolve, lattice_state_from_full
from .linalg import embed, hermitize


def build_model(cfg: RunConfig) -> tuple[HamiltonianSpec, LindbladSpec | None, str]:
    chain = cfg.chain_length if cfg.chain_length else None
    if cfg.model == "ising":
        return mixed_field_ising(cfg.j, cfg.h_t, cfg.h_l, chain_length=chain), None, "energy"
    spec, lind = xx_dephasing(cfg.j, cfg.gamma, chain_length=chain)
    return spec, lind, "magnetization"


def initial_state(cfg: RunConfig, spec: HamiltonianSpec) -> LatticeState:
    if cfg.model == "ising":
        return thermal_bump_initial(spec, cfg.beta, cfg.bump_width)
    return magnetization_bump_initial(cfg.bump_polarization, cfg.bump_width)


@dataclass
class RunResult:
    records: list[TransportRecord]
    events: list[MinimizationEvent]
    final_state: LatticeState
    steps: int
    snapshots: list[tuple[float, list[dict]]] = field(default_factory=list)


def run_evolution(
    cfg: RunConfig,
    spec: HamiltonianSpec,
    lindblad: LindbladSpec | None,
    state: LatticeState,
    charge: str,
) -> RunResult:
    """Drive the evolution loop to t_final."""
    q_max_frac = cfg.q_max_percent / 100.0 if cfg.minimization else None
    records: list[TransportRecord] = []
    events: list[MinimizationEvent] = []
    snapshots: list[tuple[float, list[dict]]] = []

    # Raise the starting level until the top carries no information.
    while True:
        state, escalated = maybe_escalate(state, spec, cfg.q_lstar, cfg.lmax)
        if not escalated:
            break

    records.append(transport_record(state, spec, charge))
    if cfg.snapshot_stride:
        snapshots.append((state.time, info_lattice(state).records()))

    dt = cfg.dt_init
    steps = 0
    while state.time < cfg.t_final - 1e-12:
        state = enlarge_window(state, spec.range)
        res = rk45_step(
            state,
            spec,
            lindblad,
            rk_tol=cfg.rk_error,
            dt=min(dt, cfg.t_final - state.time),
            dt_min=cfg.dt_min,
            alpha=cfg.alpha,
        )
        state, dt = res.state, res.dt_next
        steps += 1

        if steps % cfg.output_stride == 0 or state.time >= cfg.t_final - 1e-12:
            records.append(transport_record(state, spec, charge))
            if cfg.snapshot_stride and (steps // cfg.output_stride) % cfg.snapshot_stride == 0:
                snapshots.append((state.time, info_lattice(state).records()))

        state = manage_window(state, cfg.p_boundary)

        state, escalated = maybe_escalate(state, spec, cfg.q_lstar, cfg.lmax)
        if not escalated and state.level == cfg.lmax and q_max_frac is not None:
            i_tot = total_information(state)
            i_top = float(local_information_values(state)[0].sum())
            if i_top >= q_max_frac * i_tot:
                reduced = reduce_level(state, cfg.lmin)
                reduced = manage_window(reduced, cfg.p_boundary, keep=cfg.lmin + 1)
                state, event = minimize_window(
                    reduced, spec, w_tol=cfg.w, damping=cfg.damping
                )
                state = replace(state, info_baseline=i_tot)
                events.append(event)
    return RunResult(records, events, state, steps, snapshots)


def write_artifacts(outdir: Path, cfg: RunConfig, result: RunResult) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "transport.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mbar", "var", "D", "charge", "itot"])
        for rec in result.records:
            writer.writerow(
                [
                    repr(rec.time),
                    repr(rec.mean),
                    repr(rec.variance),
                    repr(rec.diffusion_coefficient),
                    repr(rec.total_charge),
                    repr(rec.total_information),
                ]
            )
    with open(outdir / "events.jsonl", "w") as fh:
        for ev in result.events:
            fh.write(
                json.dumps(
                    {
                        "time": ev.time,
                        "sites_minimized": ev.sites_minimized,
                        "info_removed": ev.info_removed,
                        "max_residual": ev.max_residual,
                        "max_grad_norm": ev.max_grad_norm,
                        "all_converged": ev.all_converged,
                    }
                )
                + "\n"
            )
    if result.snapshots:
        snapdir = outdir / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for t, recs in result.snapshots:
            with open(snapdir / f"info_lattice_t{t:012.6f}.json", "w") as fh:
                json.dump(recs, fh)
    import numpy

    from . import __version__

    manifest = {
        "config": cfg.to_dict(),
        "versions": {"lite": __version__, "numpy": numpy.__version__},
        "steps": result.steps,
        "minimization_events": len(result.events),
        "final_time": result.final_state.time,
        "final_level": result.final_state.level,
        "final_window": list(result.final_state.window),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def run(cfg: RunConfig, outdir: str | Path) -> RunResult:
    """Full run: build the model, evolve, write artifacts."""
    spec, lindblad, charge = build_model(cfg)
    state = initial_state(cfg, spec)
    result = run_evolution(cfg, spec, lindblad, state, charge)
    write_artifacts(Path(outdir), cfg, result)
    return result


# --- oracle comparison -------------------------------------------------------


def tilted_product_state(sites: int) -> FullState:
    """Deterministic full-rank product state used by the oracle comparison."""
    from .hamiltonian import SX, SY, SZ

    factors = []
    for m in range(sites):
        vec = 0.5 * (
            np.eye(2)
            + 0.45 * SX
            + 0.25 * ((-1) ** m) * SZ
            + 0.15 * SY
        )
        factors.append(vec)
    rho = np.array([[1.0]], dtype=complex)
    for f in factors:
        rho = np.kron(rho, f)
    return FullState(sites, rho)


@dataclass
class OracleComparison:
    times: list[float]
    max_deviation: float
    per_time: list[float]


def compare_with_oracle(cfg: RunConfig) -> OracleComparison:
    """Evolve a finite chain with the subsystem engine and exactly; report the
    largest single-site Pauli-expectation deviation on a time grid."""
    if not cfg.chain_length:
        raise ValueError("compare-oracle needs chain_length in [model]")
    sites = cfg.chain_length
    spec, lindblad, _ = build_model(cfg)
    full0 = tilted_product_state(sites)
    state = lattice_state_from_full(full0, 0)
    lmax = min(cfg.lmax, sites - 1)

    from .hamiltonian import SX, SY, SZ

    paulis = [SX, SY, SZ]
    t_grid = [k * cfg.t_final / 10 for k in range(1, 11)]
    devs: list[float] = []
    dt = cfg.dt_init
    t_prev = 0.0
    for t_target in t_grid:
        while state.time < t_target - 1e-12:
            while True:
                state, escalated = maybe_escalate(state, spec, cfg.q_lstar, lmax)
                if not escalated:
                    break
            res = rk45_step(
                state,
                spec,
                lindblad,
                rk_tol=cfg.rk_error,
                dt=min(dt, t_target - state.time),
                dt_min=cfg.dt_min,
                alpha=cfg.alpha,
            )
            state, dt = res.state, res.dt_next
        exact = exact_evolve(full0, spec, t_target, lindblad)
        margs = state.site_marginals()
        worst = 0.0
        for m in range(sites):
            exact_m = exact.block(m, 0)
            for pauli in paulis:
                a = float(np.real(np.trace(pauli @ margs[m])))
                b = float(np.real(np.trace(pauli @ exact_m)))
                worst = max(worst, abs(a - b))
        devs.append(worst)
        t_prev = t_target
    return OracleComparison(times=t_grid, max_deviation=max(devs), per_time=devs)
