"""End-to-end scenario runner: simulate -> project -> reconstruct -> metrics -> export.

Every stage reads what it needs from the artifact directory when an earlier
stage did not run in the same call, so stages can be invoked one at a time.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ALGORITHMS, STAGES, Scenario, load_scenario
from .data import VoxelGrid
from .exceptions import CarmTomoError, ConfigError, StageError
from .geometry import CArmGeometry, view_angles
from .io import export_slice_pgm, read_stack, read_volume, write_stack, write_volume
from .metrics import asf, default_rois, fwhm, line_profile, mtf, write_csv
from .phantom import (forward_project_analytic, kidney_phantom, load_phantom, sphere_phantom,
                      to_intensity, voxelize)
from .projector import forward_project_rdm, log_normalize, set_threads
from .recon import MLEM, SART, BackProjection, FilteredBackProjection

log = logging.getLogger(__name__)

LINE_INTEGRALS = "line_integrals"
INTENSITIES = "intensities"
RDM_PROJECTIONS = "projections_rdm"
TRUTH = "truth"


def build_geometry(cfg: Scenario, n_views: Optional[int] = None) -> CArmGeometry:
    g = cfg["geometry"]
    n = g["n_views"] if n_views is None else n_views
    try:
        angles = view_angles(n, g["span_deg"])
        return CArmGeometry(g["d_mm"], tuple(angles), g["nu"], g["nv"], g["pitch_mm"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="geometry") from None


def build_phantom(cfg: Scenario):
    p = cfg["phantom"]
    if p["preset"] == "sphere":
        return sphere_phantom(p["radius_mm"], p["mu"])
    if p["preset"] == "kidney":
        return kidney_phantom(p["offset_mm"])
    path = Path(p["file"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    try:
        return load_phantom(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load phantom: {exc}", field="phantom.file") from None


def build_grid(cfg: Scenario) -> VoxelGrid:
    g = cfg["grid"]
    try:
        return VoxelGrid.centered(g["shape"], g["spacing_mm"], g["center_mm"])
    except ValueError as exc:
        raise ConfigError(str(exc), field="grid") from None


def build_estimator(cfg: Scenario, name: str, grid: VoxelGrid):
    if name == "bp":
        return BackProjection(grid=grid)
    if name == "fbp":
        c = cfg["recon.fbp"]
        return FilteredBackProjection(grid=grid, window=c["window"], cutoff=c["cutoff"],
                                      cosine_weight=c["cosine_weight"])
    if name == "sart":
        c = cfg["recon.sart"]
        return SART(grid=grid, iterations=c["iterations"], lambda0=c["lambda0"], decay=c["decay"],
                    nonneg=c["nonneg"])
    c = cfg["recon.mlem"]
    return MLEM(grid=grid, iterations=c["iterations"], initial=c["initial"], floor=c["floor"])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """State shared by the stages of one invocation."""

    def __init__(self, cfg: Scenario, out_dir, seed=None, n_views=None, algorithms=None):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.seed = cfg["run"]["seed"] if seed is None else int(seed)
        self.n_views = n_views
        self.algorithms = tuple(algorithms) if algorithms else cfg["run"]["algorithms"]
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}", field="run.algorithms")
        self.geom = build_geometry(cfg, n_views)
        self.grid = build_grid(cfg)
        self.phantom = build_phantom(cfg)
        self.stacks = {}
        self.volumes = {}
        self.timings = {}
        self.out.mkdir(parents=True, exist_ok=True)
        prior = self.out / "summary.json"
        self.summary = json.loads(prior.read_text()) if prior.exists() else {}

    # -- helpers
    def _stack(self, name):
        if name not in self.stacks:
            self.stacks[name] = read_stack(self.out / name)
        return self.stacks[name]

    def _volume(self, name):
        if name not in self.volumes:
            self.volumes[name] = read_volume(self.out / name)
        return self.volumes[name]

    # artifacts are cached as read back from disk (float32-rounded) so that a
    # staged run and a one-shot run feed identical numbers downstream
    def _put_stack(self, name, stack):
        write_stack(stack, self.out / name)
        self.stacks[name] = read_stack(self.out / name)

    def _put_volume(self, name, vol):
        write_volume(vol, self.out / name)
        self.volumes[name] = read_volume(self.out / name)

    def recon_data(self):
        """Line integrals fed to BP/FBP/SART and counts fed to MLEM."""
        counts = self._stack(INTENSITIES)
        if self.cfg["phantom"]["noise"]:
            return log_normalize(counts), counts
        return self._stack(LINE_INTEGRALS), counts

    def focus_plane(self):
        m = self.cfg["metrics"]
        if m["focus_plane"] is not None:
            return m["focus_plane"]
        ix = self.grid.index_of(m["object_center_mm"])[0]
        return min(max(ix, 0), self.grid.shape[0] - 1)

    # -- stages
    def simulate(self):
        p = self.cfg["phantom"]
        li = forward_project_analytic(self.phantom, self.geom)
        seed = self.seed if p["noise"] else None
        counts = to_intensity(li, p["i0"], seed=seed)
        self._put_stack(LINE_INTEGRALS, li)
        self._put_stack(INTENSITIES, counts)

    def project(self):
        self._put_volume(TRUTH, voxelize(self.phantom, self.grid))
        rdm = forward_project_rdm(self.volumes[TRUTH], self.geom)
        self._put_stack(RDM_PROJECTIONS, rdm)
        rdm = self.stacks[RDM_PROJECTIONS]
        ana = self._stack(LINE_INTEGRALS) if (self.out / f"{LINE_INTEGRALS}.json").exists() else None
        if ana is not None:
            mask = ana.data > 0
            if mask.any():
                err = np.linalg.norm(rdm.data[mask] - ana.data[mask]) / np.linalg.norm(ana.data[mask])
                self.summary["rdm_vs_analytic_rel_rms"] = float(err)

    def reconstruct(self):
        li, counts = self.recon_data()
        for name in self.algorithms:
            t = time.perf_counter()
            est = build_estimator(self.cfg, name, self.grid)
            vol = est.fit(counts if name == "mlem" else li).volume_
            self.timings[f"recon.{name}"] = time.perf_counter() - t
            self._put_volume(f"recon_{name}", vol)
            if name == "mlem":
                self.summary["mlem_log_likelihood"] = est.log_likelihood_

    def metrics(self):
        m = self.cfg["metrics"]
        center = m["object_center_mm"]
        plane = self.focus_plane()
        ix, iy, iz = self.grid.index_of(center)
        per_alg = self.summary.setdefault("algorithms", {})
        for name in self.algorithms:
            vol = self._volume(f"recon_{name}")
            axis = m["profile_axis"]
            row = iz if axis == "y" else iy
            center_idx = iy if axis == "y" else iz
            prof = line_profile(vol, plane, min(max(row, 0), vol.shape[2 if axis == "y" else 1] - 1),
                                axis=axis, center_index=center_idx)
            write_csv(self.out / f"profile_{name}.csv", ("position_mm", "value"),
                      zip(prof.positions, prof.values))
            info = {"argmax": [int(i) for i in np.unravel_index(np.argmax(vol.data), vol.shape)]}
            try:
                info["fwhm_mm"] = fwhm(prof)
            except CarmTomoError as exc:
                info["fwhm_mm"] = None
                info["fwhm_error"] = str(exc)
            try:
                freq, resp = mtf(prof)
                write_csv(self.out / f"mtf_{name}.csv", ("frequency_per_mm", "mtf"), zip(freq, resp))
            except CarmTomoError as exc:
                info["mtf_error"] = str(exc)
            feature, background = default_rois(vol, center, m["feature_roi"], m["background_roi"],
                                               m["background_offset_mm"])
            try:
                curve = asf(vol, plane, feature, background)
                write_csv(self.out / f"asf_{name}.csv", ("offset_mm", "asf"),
                          zip(curve.plane_offsets, curve.values))
                try:
                    info["mean_asf_far"] = curve.mean_beyond(m["asf_min_offset_mm"])
                except ValueError:
                    info["mean_asf_far"] = None
            except CarmTomoError as exc:
                info["asf_error"] = str(exc)
            per_alg[name] = info

    def export(self):
        plane = self.focus_plane()
        fixed = self.cfg["export"]["window"]
        names = [f"recon_{a}" for a in self.algorithms]
        if (self.out / f"{TRUTH}.json").exists():
            names.append(TRUTH)
        for name in names:
            vol = self._volume(name)
            sl = vol.data[plane]
            if fixed is not None:
                window = fixed
            else:
                lo, hi = float(sl.min()), float(sl.max())
                window = (lo, hi) if hi > lo else (lo, lo + 1.0)
            export_slice_pgm(vol, plane, window, self.out / f"slice_{name}.pgm")

    def manifest(self, stages):
        files = sorted(p for p in self.out.iterdir()
                       if p.is_file() and p.suffix in (".raw", ".csv", ".pgm"))
        hashes = {p.name: _sha256(p) for p in files}
        combined = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in sorted(hashes.items())).encode())
        manifest = {
            "config_sha256": self.cfg.hash,
            "seed": self.seed,
            "stages": list(stages),
            "algorithms": list(self.algorithms),
            "n_views": self.geom.n_views,
            "versions": {
                "carmtomo": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "payloads": hashes,
            "payload_sha256": combined.hexdigest(),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (self.out / "summary.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        (self.out / "timings.json").write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n")
        return manifest


def run_scenario(config, out_dir="carmtomo-out", stages: Optional[Sequence[str]] = None, seed=None,
                 threads=None, n_views=None, algorithms=None) -> Path:
    """Run the named stages (default: the config's ``[run] stages``) and
    return the artifact directory."""
    cfg = config if isinstance(config, Scenario) else load_scenario(config)
    stages = tuple(cfg["run"]["stages"] if stages is None else stages)
    if "all" in stages:
        stages = STAGES
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"unknown stage {s!r}", field="run.stages")
    set_threads(threads)
    run = Run(cfg, out_dir, seed=seed, n_views=n_views, algorithms=algorithms)
    for stage in STAGES:
        if stage not in stages:
            continue
        log.info("stage %s", stage)
        t = time.perf_counter()
        try:
            getattr(run, stage)()
        except ConfigError:
            raise
        except (CarmTomoError, ValueError, OSError, IndexError) as exc:
            raise StageError(stage, exc) from exc
        run.timings[stage] = time.perf_counter() - t
    run.manifest(stages)
    return run.out
