"""Task execution, artifact output, caching and the run manifest.

Data files are byte-deterministic: fixed column order, fixed row order and
floats printed with 12 significant digits.  Results are cached under a
SHA-256 of the canonical config (QSH_CACHE_DIR overrides the location); a
cache hit replays the stored bytes.  One run at a time per output directory,
enforced with an exclusive lock file.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .errors import ConfigError, QshError
from . import circuit, dynamics, edgestates, spectra, topology

MANIFEST_NAME = "run_manifest.json"
LOCK_NAME = ".qshsim.lock"


def fmt_cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _json_cell(x):
    if x is None or isinstance(x, (str, bool)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(fmt_cell(x))


def write_table(path: Path, header, rows, fmt: str):
    """Write one table as CSV or as a JSON record list (both deterministic)."""
    if fmt == "csv":
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join("" if v is None else fmt_cell(v) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        records = [
            {k: _json_cell(v) for k, v in zip(header, row)} for row in rows
        ]
        path.write_text(
            json.dumps(records, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "json"


# ---------------------------------------------------------------------------
# task implementations: each returns {filename: (header, rows)} plus metadata
# ---------------------------------------------------------------------------

def _task_bands(cfg: RunConfig):
    grid = tuple(cfg.task_params["grid"])
    bands = spectra.bulk_bands(cfg.model, grid, threads=cfg.threads)
    rows = []
    for i, kx in enumerate(bands.kx):
        for j, ky in enumerate(bands.ky):
            for b in range(bands.nbands):
                rows.append((kx, ky, b, bands.energies[i, j, b]))
    report = spectra.gap_in_window(
        bands,
        tuple(cfg.task_params.get("window", (1.0, 2.0))),
        cfg.task_params["gap_threshold"],
    )
    meta = {"is_gapped": report.is_gapped, "gap": report.gap, "window": report.window}
    return {"bands": (("kx", "ky", "band_index", "E_t0"), rows)}, meta


def _task_ribbon(cfg: RunConfig):
    ny = int(cfg.task_params["ny"])
    kx_points = int(cfg.task_params["kx_points"])
    bands = spectra.ribbon_bands(cfg.model, ny, kx_points, threads=cfg.threads)
    rows, loc_rows = [], []
    for i, kx in enumerate(bands.kx):
        for b in range(bands.nbands):
            rows.append((kx, b, bands.energies[i, b]))
            loc_rows.append(
                (kx, b, bands.localization[i, b, 0], bands.localization[i, b, 1])
            )
    return {
        "bands": (("kx", "band_index", "E_t0"), rows),
        "localization": (("kx", "band_index", "edge_bottom", "edge_top"), loc_rows),
    }, {"ny": ny}


def _task_phase_diagram(cfg: RunConfig):
    p = cfg.task_params
    tuning = {
        k: (tuple(p[k]) if k == "bulk_grid" else int(p[k]))
        for k in ("bulk_grid", "ny_ribbon", "kx_points")
        if k in p
    }
    pmap = topology.phase_diagram(
        cfg.model.alpha,
        tuple(p["beta_range"]),
        tuple(p["lambda_range"]),
        tuple(p["resolution"]),
        tuple(p["window"]),
        threads=cfg.threads,
        **tuning,
    )
    rows = []
    errors = []
    for i, beta in enumerate(pmap.beta_grid):
        for j, lam in enumerate(pmap.lambda_grid):
            pt = pmap.points[i][j]
            rows.append((beta, lam, pt.phase, pt.nu))
            if pt.error:
                errors.append({"beta": float(beta), "lambda": float(lam), "error": pt.error})
    return {"phase_map": (("beta", "lambda", "phase", "nu"), rows)}, {"point_errors": errors}


def _task_edge_states(cfg: RunConfig):
    p = cfg.task_params
    e_f = float(p["e_f"])
    count = int(p["count"])
    ring = int(p["ring_depth"])
    states = edgestates.edge_eigenstates(cfg.model, e_f, count)
    tables = {}
    summary = []
    for idx, (energy, vec) in enumerate(states):
        dmap = edgestates.site_density(vec, cfg.model.nx, cfg.model.ny)
        rows = [
            (m + 1, n + 1, dmap.density[m, n])
            for n in range(cfg.model.ny)
            for m in range(cfg.model.nx)
        ]
        tables[f"density_{idx:03d}"] = (("m", "n", "density"), rows)
        summary.append(
            (idx, energy, edgestates.edge_weight(dmap, ring))
        )
    tables["states"] = (("state_index", "E_t0", "edge_weight"), summary)
    return tables, {"e_f": e_f, "ring_depth": ring}


def _task_tones(cfg: RunConfig):
    p = cfg.task_params
    units = p.get("units", "t0")
    if units not in ("t0", "MHz"):
        raise ConfigError(f"field 'units': must be t0 or MHz, got {units!r}")
    scale = 1.0 if units == "t0" else p["t0_mhz"]
    plans = circuit.plaquette_plans(cfg.model.alpha, cfg.model.beta)
    rows = []
    for plan in plans:
        bond_label = f"{plan.bond.direction}:{plan.bond.from_cell}->{plan.bond.to_cell}"
        for tone in plan.tones:
            rows.append(
                (
                    bond_label,
                    "-".join(tone.channel),
                    tone.freq * scale,
                    tone.amplitude * scale,
                    tone.phase,
                    tone.sign,
                )
            )
    unit_tag = "t0" if units == "t0" else "MHz"
    header = (
        "bond",
        "channel",
        f"freq_{unit_tag}",
        f"amplitude_{unit_tag}",
        "phase_rad",
        "sign",
    )
    min_freq, min_sep = circuit.addressing_margin(plans)
    meta = {
        "units": units,
        "min_tone_freq_t0": float(min_freq),
        "min_per_bond_separation_t0": float(min_sep),
    }
    return {"tones": (header, rows)}, meta


def _task_rwa_check(cfg: RunConfig):
    p = cfg.task_params
    t_final = float(p.get("t_final", math.pi / 2.0))
    cells = [circuit.DEVICE_CELLS[0], circuit.DEVICE_CELLS[1]]
    plan = circuit.tone_plan(
        circuit.Bond(1, 0, "x"), cells, circuit.x_target_block(cfg.model.alpha, 0)
    )
    u_full = circuit.full_evolve(cells, [plan], t_final, dt=p.get("dt"))
    h_eff = circuit.effective_hamiltonian(cells, [plan])
    u_eff = circuit.effective_propagator(h_eff, t_final)
    fidelity = circuit.rwa_fidelity(u_full, u_eff, cells, t_final)

    detuned = circuit.TonePlan(
        circuit.Bond(1, 0, "x"),
        [circuit.Tone(freq=550.0, amplitude=4.0, phase=0.0, sign=1, channel=("up", "up"))],
    )
    u_det = circuit.full_evolve(cells, [detuned], t_final, dt=p.get("dt"))
    u_rot = circuit.rotating_frame_propagator(u_det, cells, t_final)
    drift = float(np.max(np.abs(np.abs(np.diag(u_rot)) ** 2 - 1.0)))
    rows = [(t_final, fidelity, drift)]
    return {
        "rwa_check": (("T_t0", "fidelity", "detuned_population_change"), rows)
    }, {"fidelity": fidelity, "detuned_population_change": drift}


def _task_lindblad(cfg: RunConfig):
    p = cfg.task_params
    rows_out = dynamics.decay_scan(
        [float(g) for g in p["gammas"]],
        params=cfg.model,
        t_us=float(p["t_us"]),
        dt=float(p["dt"]),
        threads=cfg.threads,
    )
    rows = [
        (r.gamma_t0, r.gamma_khz, r.p1, r.p2, r.p3) for r in rows_out
    ]
    meta = {
        "frame": "rotating (static effective Hamiltonian, secular dissipators)",
        "dt_t0": float(p["dt"]),
        "T_t0": dynamics.duration_from_us(float(p["t_us"])),
        "t_us": float(p["t_us"]),
        "t0_mhz": dynamics.T0_MHZ,
    }
    return {
        "decay_scan": (("gamma_t0", "gamma_kHz_over_2pi", "P1", "P2", "P3"), rows)
    }, meta


_TASK_FN = {
    "bands": _task_bands,
    "ribbon": _task_ribbon,
    "phase_diagram": _task_phase_diagram,
    "edge_states": _task_edge_states,
    "tones": _task_tones,
    "rwa_check": _task_rwa_check,
    "lindblad": _task_lindblad,
}


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _cache_dir(cfg: RunConfig) -> Path:
    root = os.environ.get("QSH_CACHE_DIR")
    base = Path(root) if root else Path(cfg.out_dir) / ".cache"
    return base / cfg.cache_key()


class _Lock:
    def __init__(self, out_dir: Path):
        self.path = out_dir / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise QshError(
                f"output directory is locked by another run: {self.path}"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False


def run(cfg: RunConfig, force: bool = False) -> dict:
    """Execute the configured task; returns the manifest dict."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = _cache_dir(cfg)
    started = time.time()

    with _Lock(out_dir):
        cached = cache.is_dir() and not force
        if cached:
            names = sorted(p.name for p in cache.iterdir() if p.name != MANIFEST_NAME)
            for name in names:
                shutil.copyfile(cache / name, out_dir / name)
            meta = json.loads((cache / MANIFEST_NAME).read_text())["meta"]
        else:
            fn = _TASK_FN[cfg.task]
            tables, meta = fn(cfg)
            names = []
            for stem, (header, rows) in sorted(tables.items()):
                name = f"{stem}.{_ext(cfg.fmt)}"
                write_table(out_dir / name, header, rows, cfg.fmt)
                names.append(name)

        outputs = [
            {
                "name": name,
                "sha256": _sha256_file(out_dir / name),
                "bytes": (out_dir / name).stat().st_size,
            }
            for name in names
        ]
        manifest = {
            "task": cfg.task,
            "config_hash": cfg.cache_key(),
            "config": cfg.normalized,
            "cached": cached,
            "versions": {
                "qshsim": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "timing_s": round(time.time() - started, 3),
            "outputs": outputs,
            "meta": meta,
        }
        (out_dir / MANIFEST_NAME).write_text(
            json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        if not cached:
            cache.mkdir(parents=True, exist_ok=True)
            for name in names:
                shutil.copyfile(out_dir / name, cache / name)
            (cache / MANIFEST_NAME).write_text(
                json.dumps({"meta": meta}, sort_keys=True) + "\n", encoding="utf-8"
            )
    return manifest
