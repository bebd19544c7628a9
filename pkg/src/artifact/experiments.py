"""End-to-end experiment runners used by the command line.

Each runner takes a merged parameter dict, a seed and an output directory,
writes CSV/JSON artifacts there and returns a ``RunResult``.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels as ch
from . import homodyne as hd
from . import labcalc as lc
from . import states as st
from . import tomography as tm
from .fock import FockSpace, partial_trace, to_json_dict


class ConfigError(ValueError):
    pass


class NumericFailure(RuntimeError):
    pass


# default parameter blocks; the type of each default fixes how overrides parse
SCHEMAS = {
    "vampire": {
        "n_photons": 2, "t_ref": 0.06, "bg_ratio": 0.05, "t_min": 0.005, "t_max": 0.15, "n_t": 30,
        "bg_max": 0.1, "n_bg": 20, "samples": 20000,
    },
    "distill": {
        "zeta": 0.16, "channel_transmission": 0.05, "gains": "4,8,12", "detection_eff": 0.3, "cutoff": 6,
        "n_phase": 61, "daq": True, "daq_blocks": 120, "daq_block_size": 500, "daq_noise": 0.05,
        "phase_bins": 24,
    },
    "qpt": {
        "process": "beamsplitter", "cutoff": 4, "report_cutoff": 2, "energy": 0.9, "deltas": "0.67,2.64,5.29",
        "records_per_setting": 5000, "identity_window": 100, "max_iterations": 200, "tolerance": 1e-7,
        "phase_invariant": True, "bin_width": 0.05, "phase_bins": 64,
    },
    "labcalc": {"beta2": 2.8e-25},
    "statetomo": {"dataset": "", "cutoff": 6, "max_iterations": 200, "tolerance": 1e-7},
}

SAMPLING = {"vampire", "distill", "qpt"}


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


def merge_params(experiment: str, *layers: dict) -> dict:
    """Defaults overlaid by each layer in turn; unknown keys are rejected."""
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    schema = SCHEMAS[experiment]
    out = dict(schema)
    for layer in layers:
        for k, v in layer.items():
            if k not in schema:
                raise ConfigError(f"unknown key {k!r} for {experiment}; known: {', '.join(sorted(schema))}")
            out[k] = _coerce(k, v, schema[k])
    return out


def _floats(s) -> list:
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {s!r}") from None


@dataclass
class RunResult:
    experiment: str
    metrics: dict
    artifacts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    wall_clock: float = 0.0


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return str(path)


# -- vampire -------------------------------------------------------------------------------

def run_vampire(p: dict, seed: int, out: Path) -> RunResult:
    n = p["n_photons"]
    if n not in (1, 2):
        raise ConfigError("n_photons must be 1 or 2")
    if not (0 < p["t_min"] < p["t_max"] < 1 and p["n_t"] >= 2 and p["n_bg"] >= 2 and p["bg_max"] >= 0):
        raise ConfigError("invalid (t, bg) grid")
    taps = np.linspace(p["t_min"], p["t_max"], p["n_t"])
    bgs = np.linspace(0, p["bg_max"], p["n_bg"])
    fmap = ch.vampire_fidelity_map(n, taps, bgs, p["t_ref"])
    art = {"fidelity_map": _write_csv(out / "fidelity_map.csv", ["t", "bg_ratio", "fidelity"],
                                      [(t, b, fmap[i, j]) for i, t in enumerate(taps) for j, b in enumerate(bgs)])}
    click, no_click, p_click = ch.vampire_branches(n, p["t_ref"])
    ideal = partial_trace(click, [0]).diagonal()
    naive = ch.naive_local_prediction(n).diagonal()
    rows = [(k, ideal[k] if k < ideal.size else 0.0, naive[k] if k < naive.size else 0.0)
            for k in range(max(ideal.size, naive.size))]
    art["populations"] = _write_csv(out / "populations.csv", ["n", "conditioned", "naive_local"], rows)
    rng = np.random.default_rng(seed)
    mixed = ch.vampire_output(n, p["t_ref"], p["bg_ratio"], p["t_ref"])
    edges = np.linspace(-5, 5, 101)
    hist = {}
    for name, rho in (("vampire", mixed), ("no_click", no_click)):
        s = hd.sample(partial_trace(rho, [0]), [0.0], p["samples"], seed=rng)
        hist[name] = np.histogram(s.values[:, 0], edges)[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    art["histograms"] = _write_csv(out / "histograms.csv", ["x", "vampire", "no_click"],
                                   zip(centers, hist["vampire"], hist["no_click"]))
    metrics = {
        "fidelity_ref": ch.vampire_fidelity(n, p["t_ref"], p["bg_ratio"], p["t_ref"]),
        "fidelity_t0.07": ch.vampire_fidelity(n, 0.07, p["bg_ratio"], p["t_ref"]),
        "fidelity_t_min": ch.vampire_fidelity(n, p["t_min"], p["bg_ratio"], p["t_ref"]),
        "click_probability": p_click,
        "conditioned_populations": [float(v) for v in ideal],
        "naive_populations": [float(v) for v in naive],
        "grid_shape": [int(taps.size), int(bgs.size)],
    }
    return RunResult("vampire", metrics, art)


# -- distillation --------------------------------------------------------------------------

def daq_variance_curve(rho, rng, blocks=120, block_size=500, noise=0.05, n_bins=24, sweep_turns=3.0):
    """Simulated acquisition of a two-mode state under a drifting sum phase.

    Quadratures are drawn block by block while theta1 + theta2 follows a
    quadratic drift, rendered as detector traces, re-extracted, calibrated
    against vacuum, and phase-tagged from a fit to the block covariance.
    Returns bin centres, binned sum variances and diagnostics.
    """
    t = np.arange(blocks) / blocks
    true_phase = 2 * np.pi * sweep_turns * t + 0.8 * t ** 2 + rng.uniform(0, 2 * np.pi)
    q = np.empty((blocks * block_size, 2))
    for k in range(blocks):
        s = hd.sample(rho, [true_phase[k], 0.0], block_size, seed=rng)
        q[k * block_size:(k + 1) * block_size] = s.values
    shape = hd.gaussian_response(3.0, 12.0)
    vac = rng.normal(scale=np.sqrt(0.5), size=20000)
    chans = []
    for m in range(2):
        tr = hd.synth_traces(q[:, m], shape, noise, seed=rng)
        vt = hd.synth_traces(vac, shape, noise, seed=rng)
        chans.append(hd.vacuum_normalize(hd.extract_quadratures(tr), hd.extract_quadratures(vt)))
    q1, q2 = chans
    cov = hd.correlator(q1, q2, block_size)
    model = hd.fit_phase(cov, t, model="quadratic")
    # the covariance of (Q1, Q2) follows -A cos(theta1 + theta2) for these states
    sign = np.sign(hd.two_mode_sum_variance(rho, 0.0, 0.0) - hd.two_mode_sum_variance(rho, np.pi, 0.0))
    est = model.phase(t) + (np.pi if sign < 0 else 0.0)
    err = np.angle(np.exp(1j * (est - true_phase)))
    phases = np.repeat(est, block_size)
    centers, groups = hd.bin_by_phase((q1 + q2) / np.sqrt(2), phases, n_bins)
    var = np.array([g.var() if g.size > 1 else np.nan for g in groups])
    return centers, var, {"phase_rms_error": float(np.sqrt(np.mean(err ** 2))),
                          "phase_fit_r2_residual": model.residual_rms}


def run_distill(p: dict, seed: int, out: Path) -> RunResult:
    gains = _floats(p["gains"])
    if not 0 < p["channel_transmission"] <= 1 or not 0 < p["detection_eff"] <= 1:
        raise ConfigError("transmissions must lie in (0, 1]")
    if any(g < 1 for g in gains):
        raise ConfigError("infeasible gain: amplifier transmission would exceed 1")
    rng = np.random.default_rng(seed)
    loss = st.LossSpec.from_power(1.0, p["channel_transmission"])
    metrics = {"gains": gains, "per_gain": {}}
    art = {}
    curves = []
    for g in gains:
        spec = None if g == 1 else ch.CatalysisSpec.from_gain(g)
        rep = ch.distill(p["zeta"], loss, spec, detection_eff=p["detection_eff"], cutoff=p["cutoff"],
                         n_phase=p["n_phase"])
        entry = {
            "success_probability": rep.success_probability,
            "min_variance": rep.min_variance,
            "input_min_variance": rep.input_min_variance,
            "attenuated_min_variance": rep.attenuated_min_variance,
            "restored_ratio": rep.min_variance / rep.input_min_variance,
            "log_negativity_before": rep.log_negativity_before,
            "log_negativity_after": rep.log_negativity_after,
            "fidelity": rep.fidelity,
            "gain": rep.gain,
            "phase_conventions": rep.phase_conventions,
        }
        curves.append(rep.variance)
        if p["daq"]:
            centers, var, diag = daq_variance_curve(rep.state, rng, p["daq_blocks"], p["daq_block_size"],
                                                    p["daq_noise"], p["phase_bins"])
            entry["daq_min_variance"] = float(np.nanmin(var))
            entry.update(diag)
            art[f"daq_g{g:g}"] = _write_csv(out / f"daq_variance_g{g:g}.csv", ["theta_sum", "variance"],
                                            zip(centers, var))
        metrics["per_gain"][f"{g:g}"] = entry
    theta = np.linspace(0, 2 * np.pi, p["n_phase"])
    art["variance"] = _write_csv(out / "variance_vs_phase.csv", ["theta_sum"] + [f"g{g:g}" for g in gains],
                                 [(th, *[c[i] for c in curves]) for i, th in enumerate(theta)])
    return RunResult("distill", metrics, art)


# -- process tomography ----------------------------------------------------------------------

def _process_matrix(name: str) -> np.ndarray:
    if name == "beamsplitter":
        return ch.EOM_SPLITTER.U
    if name == "identity":
        return np.eye(2, dtype=complex)
    raise ConfigError(f"unknown process {name!r}; use beamsplitter or identity")


def interleaved_probe_data(U, alphas, delta, count, window, rng, sweep_turns=4.0):
    """Process records with LO phases retrieved from interleaved identity windows.

    Identity and process windows of ``window`` pulses alternate.  The phase of
    the stronger probe mode is fitted to the identity-window means; channel
    phases follow from the fixed offset ``delta`` and are interpolated onto
    the process pulses.  Returns (values, phases, rms phase error).
    """
    alphas = np.asarray(alphas, complex)
    n_win = int(np.ceil(count / window))
    total = 2 * n_win * window
    t = np.arange(total) / total
    theta2 = 2 * np.pi * sweep_turns * t + 1.5 * t ** 2 + rng.uniform(0, 2 * np.pi)
    ph = np.stack([theta2 + delta, theta2], axis=1)
    is_ident = (np.arange(total) // window) % 2 == 0
    vals = np.empty((total, 2))
    vals[is_ident] = tm.sample_coherent_output(np.eye(2), alphas, ph[is_ident], rng)
    vals[~is_ident] = tm.sample_coherent_output(U, alphas, ph[~is_ident], rng)
    k = int(np.argmax(np.abs(alphas)))
    idx = np.flatnonzero(is_ident).reshape(n_win, window)
    means = vals[idx, k].mean(axis=1)
    tw = t[idx].mean(axis=1)
    model = hd.fit_phase(means, tw, model="quadratic")
    # fitted cosine argument is theta_k - arg(alpha_k)
    offset = np.angle(alphas[k]) - (delta if k == 0 else 0.0)
    proc = np.flatnonzero(~is_ident)[:count]
    est2 = model.phase(t[proc]) + offset
    err = np.angle(np.exp(1j * (est2 - theta2[proc])))
    est = np.stack([est2 + delta, est2], axis=1)
    return vals[proc], est, float(np.sqrt(np.mean(err ** 2)))


def run_qpt(p: dict, seed: int, out: Path) -> RunResult:
    U = _process_matrix(p["process"])
    if p["report_cutoff"] > p["cutoff"]:
        raise ConfigError("report_cutoff exceeds cutoff")
    rng = np.random.default_rng(seed)
    probes = tm.waveplate_probe_grid(energy=p["energy"])
    deltas = _floats(p["deltas"])
    items, errs = [], []
    for a in probes:
        for d in deltas:
            v, ph, e = interleaved_probe_data(U, a, d, p["records_per_setting"], p["identity_window"], rng)
            items.append(tm.Probe(tuple(a), v, ph, delta=d))
            errs.append(e)
    probe_set = tm.ProbeSet(items)
    cfg = tm.ReconstructionConfig(cutoff=p["cutoff"], report_cutoff=p["report_cutoff"],
                                  max_iterations=p["max_iterations"], tolerance=p["tolerance"],
                                  phase_invariant=p["phase_invariant"], bin_width=p["bin_width"],
                                  phase_bins=p["phase_bins"])
    space = FockSpace(2, p["cutoff"])
    ref = tm.tensor_from_kraus([tm.beamsplitter_unitary(ch.BeamsplitterSpec(U), p["cutoff"]).matrix],
                               space, space)
    try:
        rep = tm.maxlik_process(probe_set, cfg, reference=ref)
    except tm.NonMonotoneLikelihood as exc:
        raise NumericFailure(str(exc)) from exc
    E = rep.result
    _, surv, zeroed = tm.phase_invariant_mask(p["cutoff"], 2)
    fids = {f"fidelity_N{k}": tm.process_fidelity(tm.truncate(E, k), tm.truncate(ref, k), fit_phase=True)
            for k in range(1, p["cutoff"] + 1)}
    diag = [(n1, n2, j1, j2, E.transition_probability((n1, n2), (j1, j2)))
            for n1 in range(3) for n2 in range(3) for j1 in range(3) for j2 in range(3) if n1 + n2 <= 2]
    art = {
        "tensor": str(out / "process_tensor.json"),
        "likelihood": _write_csv(out / "likelihood.csv", ["iteration", "log_likelihood"], enumerate(rep.log_likelihood)),
        "transitions": _write_csv(out / "transition_probabilities.csv", ["n1", "n2", "j1", "j2", "probability"], diag),
    }
    with open(art["tensor"], "w") as fh:
        json.dump(E.to_json_dict(), fh)
    metrics = {
        "fidelity": rep.fidelity,
        **fids,
        "hom_element": E.transition_probability((1, 1), (1, 1)),
        "iterations": rep.iterations,
        "converged": rep.converged,
        "trace_residual": rep.trace_residual,
        "mask_surviving": surv,
        "mask_zeroed": zeroed,
        "mask_total": surv + zeroed,
        "records": probe_set.total_records,
        "phase_rms_error": float(np.sqrt(np.mean(np.square(errs)))),
        "notes": rep.notes,
    }
    return RunResult("qpt", metrics, art)


# -- labcalc and state tomography --------------------------------------------------------------

def run_labcalc(p: dict, seed: int, out: Path) -> RunResult:
    rows = lc.table(pdc_beta2=p["beta2"])
    path = out / "labcalc.csv"
    path.write_text(lc.table_csv(rows))
    return RunResult("labcalc", {r["name"]: r["value"] for r in rows}, {"table": str(path)})


def bundled_vacuum() -> Path:
    return Path(__file__).with_name("data") / "vacuum.jsonl"


def run_statetomo(p: dict, seed: int, out: Path) -> RunResult:
    path = Path(p["dataset"]) if p["dataset"] else bundled_vacuum()
    records = hd.load_records(path)  # DatasetError names the bad line
    cfg = tm.ReconstructionConfig(cutoff=p["cutoff"], max_iterations=p["max_iterations"],
                                  tolerance=p["tolerance"])
    try:
        rep = tm.maxlik_state(records, cfg)
    except tm.NonMonotoneLikelihood as exc:
        raise NumericFailure(str(exc)) from exc
    rho = rep.result
    if not rho.is_physical():
        raise NumericFailure("reconstructed state is not positive semidefinite")
    dest = out / "density_matrix.json"
    with open(dest, "w") as fh:
        json.dump(to_json_dict(rho), fh)
    vac = (0,) * rho.space.modes
    metrics = {
        "records": len(records),
        "vacuum_weight": rho.population(*vac),
        "populations": [float(v) for v in rho.diagonal()],
        "iterations": rep.iterations,
        "log_likelihood": rep.log_likelihood[-1],
        "converged": rep.converged,
        "dataset": str(path),
    }
    return RunResult("statetomo", metrics, {"density_matrix": str(dest)})


RUNNERS = {
    "vampire": run_vampire,
    "distill": run_distill,
    "qpt": run_qpt,
    "labcalc": run_labcalc,
    "statetomo": run_statetomo,
}


def run(experiment: str, params: dict, seed: int | None, out: Path) -> RunResult:
    if experiment in SAMPLING and seed is None:
        raise ConfigError(f"{experiment} draws random samples and needs --seed")
    out = Path(out)
    start = time.perf_counter()
    res = RUNNERS[experiment](params, 0 if seed is None else seed, out)
    res.wall_clock = time.perf_counter() - start
    res.config = dict(params)
    res.seed = seed
    return res
