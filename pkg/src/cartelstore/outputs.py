"""
File formats: CSV for every interchange artifact plus a JSON run manifest.

Field CSV: comment header carrying the grid, then ``k,z,value`` rows in
row-major node order.  Floats are written with repr(), which round-trips
IEEE doubles exactly, so load(save(F)) == F bitwise and reruns of a
deterministic command produce byte-identical files.

Trajectory CSV: header row ``t,k,z,p,q``; measure CSV: header row
``k,z,density,log10_density`` with empty cells mapped to the sentinel
LOG10_SENTINEL in the log column.

Every command writes a manifest.json recording the configuration snapshot,
grid, settings, seeds, package version, wall-clock timings and an inventory
of the produced files with sha256 checksums; verify_manifest re-checks the
inventory.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .config import format_config, parse_config_text
from .model import FieldPair, Grid2D, ModelParams, make_grid


def version_string() -> str:
    """Package version, suffixed with the git description when running from
    a checkout."""
    base = f"cartelstore-{__version__}"
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent, capture_output=True, text=True,
            timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{base}+g{desc.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return base

__all__ = [
    "LOG10_SENTINEL",
    "save_field",
    "load_field",
    "save_fields_dir",
    "load_fields_dir",
    "save_trajectory",
    "save_measure",
    "write_manifest",
    "load_manifest",
    "verify_manifest",
    "sha256_file",
]

LOG10_SENTINEL = -999.0


def _fmt(x: float) -> str:
    return repr(float(x))


def save_field(path, name: str, arr: np.ndarray, grid: Grid2D) -> None:
    with open(path, "w") as fh:
        fh.write(f"# cartelstore field {name}\n")
        fh.write(f"# grid N={grid.N} M={grid.M} "
                 f"k_min={_fmt(grid.k[0])} k_max={_fmt(grid.k[-1])} "
                 f"z_min={_fmt(grid.z[0])} z_max={_fmt(grid.z[-1])}\n")
        fh.write("k,z,value\n")
        for i in range(grid.N + 1):
            ki = _fmt(grid.k[i])
            row = arr[i]
            for j in range(grid.M + 1):
                fh.write(f"{ki},{_fmt(grid.z[j])},{_fmt(row[j])}\n")


def load_field(path):
    """Read a field CSV back into (name, array, (N, M))."""
    with open(path) as fh:
        head = fh.readline().strip()
        gridline = fh.readline().strip()
        header = fh.readline().strip()
        if not head.startswith("# cartelstore field ") or header != "k,z,value":
            raise ValueError(f"{path}: not a cartelstore field CSV")
        name = head.removeprefix("# cartelstore field ")
        meta = dict(tok.split("=") for tok in gridline.removeprefix("# grid ").split())
        N, M = int(meta["N"]), int(meta["M"])
        vals = np.empty((N + 1) * (M + 1))
        for idx, line in enumerate(fh):
            vals[idx] = float(line.rsplit(",", 1)[1])
        if idx + 1 != vals.size:
            raise ValueError(f"{path}: expected {vals.size} rows, got {idx + 1}")
    return name, vals.reshape(N + 1, M + 1), (N, M)


FIELD_FILES = ("u.csv", "p.csv", "q_star.csv", "drift_k.csv", "drift_z.csv")


def save_fields_dir(out: Path, grid: Grid2D, fields: FieldPair, policy) -> list[str]:
    """Write the six field CSVs of a solve; returns the file names."""
    out.mkdir(parents=True, exist_ok=True)
    arrays = {
        "u.csv": ("U", fields.U),
        "p.csv": ("P", fields.P),
        "q_star.csv": ("q_star", policy.q_star),
        "drift_k.csv": ("drift_k", policy.drift_k),
        "drift_z.csv": ("drift_z", policy.drift_z),
    }
    written = []
    for fname, (name, arr) in arrays.items():
        save_field(out / fname, name, arr, grid)
        written.append(fname)
    locus = out / "shock_locus.csv"
    with open(locus, "w") as fh:
        fh.write("# cartelstore shock locus\n")
        fh.write("k,z_shock,jump\n")
        for i in range(grid.N + 1):
            fh.write(f"{_fmt(grid.k[i])},{_fmt(policy.shock_z[i])},"
                     f"{_fmt(policy.shock_jump[i])}\n")
    written.append("shock_locus.csv")
    return written


def load_fields_dir(path) -> tuple[ModelParams, Grid2D, FieldPair]:
    """Reload params, grid and (U, P) from a solve output directory."""
    path = Path(path)
    manifest = load_manifest(path)
    params, N, M = parse_config_text(manifest["config"],
                                     source=str(path / "manifest.json"))
    grid = make_grid(params, N, M)
    _, U, shape = load_field(path / "u.csv")
    _, P, shape_p = load_field(path / "p.csv")
    if shape != (N, M) or shape_p != (N, M):
        raise ValueError(f"{path}: field grids do not match the manifest")
    return params, grid, FieldPair(U=U, P=P)


def save_trajectory(path, traj, header_extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(f"# cartelstore trajectory dt={_fmt(traj.dt)} seed={traj.seed}\n")
        for key, val in (header_extra or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("t,k,z,p,q\n")
        for row in zip(traj.t, traj.k, traj.z, traj.p, traj.q):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def save_measure(path, hist, grid: Grid2D) -> None:
    dens = hist.density
    with open(path, "w") as fh:
        fh.write(f"# cartelstore measure T={_fmt(hist.T)} "
                 f"burn_in={_fmt(hist.burn_in)} seed={hist.seed} dt={_fmt(hist.dt)}\n")
        fh.write("k,z,density,log10_density\n")
        for i in range(grid.N + 1):
            ki = _fmt(grid.k[i])
            for j in range(grid.M + 1):
                d = dens[i, j]
                log10 = np.log10(d) if d > 0.0 else LOG10_SENTINEL
                fh.write(f"{ki},{_fmt(grid.z[j])},{_fmt(d)},{_fmt(log10)}\n")


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, command: str, params: ModelParams, N: int, M: int,
                   outputs: list[str], timings: dict, seed=None,
                   extra: dict | None = None, name: str = "manifest.json") -> Path:
    """Write a run manifest.  Commands that may share an output directory use
    distinct manifest names so a later run never clobbers the provenance of
    an earlier one (e.g. simulate into a solve directory)."""
    manifest = {
        "command": command,
        "version": version_string(),
        "config": format_config(params, N, M),
        "grid": {"N": N, "M": M},
        "seed": seed,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "outputs": [{"path": fname, "sha256": sha256_file(out / fname)}
                    for fname in sorted(outputs)],
    }
    if extra:
        manifest.update(extra)
    path = out / name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(out: Path, name: str = "manifest.json") -> dict:
    return json.loads((Path(out) / name).read_text())


def verify_manifest(out: Path, name: str = "manifest.json") -> bool:
    """True iff every file in the manifest inventory exists with a matching
    checksum."""
    out = Path(out)
    manifest = load_manifest(out, name)
    for entry in manifest["outputs"]:
        f = out / entry["path"]
        if not f.is_file() or sha256_file(f) != entry["sha256"]:
            return False
    return True
