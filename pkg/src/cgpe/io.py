"""File formats: profile/branch/report CSVs, snapshot binaries, configs, manifests."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import HarmonicTrap, ModelParams, TabulatedTrap
from .radial import RadialProfile
from .splitstep import Field2D

SNAPSHOT_MAGIC = b"CGPE"
SNAPSHOT_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


# -- radial profiles ----------------------------------------------------------

def save_profile_csv(path, profile: RadialProfile):
    p = profile.params
    header = (f"# mu={float(profile.mu)!r} m={profile.m}"
              f" residual={float(profile.residual_norm)!r}"
              f" alpha={float(p.alpha)!r} sigma={float(p.sigma)!r}"
              f" R={float(p.pump_radius)!r}"
              f" kappa={float(p.kappa)!r} b={float(p.b)!r}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("r,re_phi,im_phi\n")
        for r, phi in zip(profile.r, profile.phi):
            fh.write(f"{float(r)!r},{float(phi.real)!r},{float(phi.imag)!r}\n")


def load_profile_csv(path) -> RadialProfile:
    """Rebuild a profile from CSV; the trap is assumed harmonic."""
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, val = token.split("=", 1)
                        meta[key] = float(val) if key != "m" else int(val)
            elif not line.startswith("r,"):
                rows.append([float(tok) for tok in line.split(",")])
    if not rows or not {"mu", "m", "alpha", "sigma", "R", "kappa", "b"} <= set(meta):
        raise ConfigError(f"{path} is not a radial profile CSV")
    data = np.array(rows)
    params = ModelParams(alpha=meta["alpha"], sigma=meta["sigma"],
                         pump_radius=meta["R"], kappa=meta["kappa"], b=meta["b"])
    return RadialProfile(r=data[:, 0], phi=data[:, 1] + 1j * data[:, 2],
                         mu=meta["mu"], m=int(meta["m"]),
                         residual_norm=meta.get("residual", float("nan")),
                         params=params)


# -- tabular outputs ----------------------------------------------------------

def save_mode_scan_csv(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("m,max_im_omega\n")
        for mode in report.modes:
            fh.write(f"{mode.m},{float(mode.max_im)!r}\n")


def save_spectrum_csv(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("m,re_omega,im_omega\n")
        for mode in report.modes:
            eigs = mode.spectrum if mode.spectrum is not None else mode.leading
            for w in eigs:
                fh.write(f"{mode.m},{float(w.real)!r},{float(w.imag)!r}\n")


def save_curve_csv(path, curve):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("R,max_im_omega\n")
        for pt in curve.points:
            val = "" if pt.max_im is None else repr(float(pt.max_im))
            fh.write(f"{float(pt.R)!r},{val}\n")


def save_branch_csv(path, branch):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,lambda,mu,fold_flag,residual_norm\n")
        for i, pt in enumerate(branch.points):
            mu = "" if pt.mu is None else repr(float(pt.mu))
            fh.write(f"{i},{float(pt.lam)!r},{mu},{int(pt.fold)},"
                     f"{float(pt.residual_norm)!r}\n")


def save_census_csv(path, census):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,winding\n")
        for x, y, k in census.vortices:
            fh.write(f"{float(x)!r},{float(y)!r},{int(k)}\n")


def save_radial_extract_csv(path, sample):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r,mean_abs_psi,az_variance\n")
        for r, m, v in zip(sample.r, sample.mean_abs, sample.az_variance):
            fh.write(f"{float(r)!r},{float(m)!r},{float(v)!r}\n")


def save_timeseries_csv(path, result):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,mass,mu_estimate,max_density\n")
        for row in zip(result.times, result.mass, result.mu, result.max_density):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- snapshot binary ----------------------------------------------------------

def save_snapshot(path, field: Field2D):
    """Bit-exact snapshot: magic, version, nx, ny, domain, time, (re, im) pairs."""
    ax, bx, ay, by = field.domain
    head = SNAPSHOT_MAGIC + struct.pack("<IIIddddd", SNAPSHOT_VERSION,
                                        field.nx, field.ny, ax, bx, ay, by, field.t)
    body = np.ascontiguousarray(field.values.astype("<c16")).tobytes()
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(body)


def load_snapshot(path) -> Field2D:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path} is not a field snapshot")
    version, nx, ny, ax, bx, ay, by, t = struct.unpack("<IIIddddd", raw[4:4 + 52])
    if version != SNAPSHOT_VERSION:
        raise ConfigError(f"unsupported snapshot version {version}")
    values = np.frombuffer(raw[4 + 52:], dtype="<c16", count=nx * ny).reshape(nx, ny)
    return Field2D(values.copy(), (ax, bx, ay, by), t)


# -- configuration ------------------------------------------------------------

MODEL_KEYS = {"alpha", "sigma", "R", "kappa", "b", "trap"}


def parse_config(text: str, base_dir: Path = None) -> dict:
    """Parse the key = value / [section] config format into nested dicts.

    Keys before any section header belong to the model section. Values stay
    strings; numeric conversion happens at point of use.
    """
    sections = {"model": {}}
    current = "model"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        sections[current][key] = val
    return sections


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def load_tabulated_trap(path) -> TabulatedTrap:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"trap table {path} does not exist")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line or line.lower().startswith("r,"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ConfigError(f"trap table {path}: expected two columns")
            rows.append((float(parts[0]), float(parts[1])))
    data = np.array(rows)
    return TabulatedTrap(data[:, 0], data[:, 1], source=str(path))


def params_from_config(config: dict, base_dir: Path = None) -> ModelParams:
    model = dict(config.get("model", {}))
    unknown = set(model) - MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    kwargs = {}
    for key, field_name in (("alpha", "alpha"), ("sigma", "sigma"),
                            ("R", "pump_radius"), ("kappa", "kappa"), ("b", "b")):
        if key in model:
            try:
                kwargs[field_name] = float(model[key])
            except ValueError as exc:
                raise ConfigError(f"model key {key}: {exc}") from exc
    trap_spec = model.get("trap", "harmonic")
    if trap_spec == "harmonic":
        kwargs["trap"] = HarmonicTrap()
    elif trap_spec.startswith("file:"):
        trap_path = Path(trap_spec[5:])
        if base_dir is not None and not trap_path.is_absolute():
            trap_path = base_dir / trap_path
        kwargs["trap"] = load_tabulated_trap(trap_path)
    else:
        raise ConfigError(f"trap must be 'harmonic' or 'file:<path>', got {trap_spec!r}")
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- run manifests ------------------------------------------------------------

def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, experiment: str, config_text: str, settings: dict,
                   artifacts) -> Path:
    """Record the full run configuration and artifact hashes for reruns."""
    out_dir = Path(out_dir)
    entries = {}
    for name in sorted(str(a) for a in artifacts):
        p = Path(name)
        entries[p.name] = sha256_of(p)
    manifest = {
        "experiment": experiment,
        "config": config_text,
        "settings": settings,
        "artifacts": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
