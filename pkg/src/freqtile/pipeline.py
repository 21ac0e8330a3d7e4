"""End-to-end run: covering, checks, frame coefficients, norms, compression.

A run is described by one JSON document (:class:`RunConfig`). Every artifact
is written with sorted keys and no timing data, so two runs of the same
configuration produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .anorm import QuasiNormContext
from .bapu import Bapu
from .covering import besov_covering, build_covering, check_admissible, packing_report
from .errors import DomainError
from .frame import FrameGeometry, analyze, parseval_check
from .registry import TestFunctionSpec, default_test_set, registry_instantiate
from .regulation import alpha_regulation, regulation_from_dict
from .spaces import SpaceParams, compression_curve, local_lp_norms, norm_report

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {
    "pou_residual": 1e-10,
    "parseval_tol": 1e-4,
    "recon_error": 1e-4,
    "max_overlap": 64,
}


@dataclass
class RunConfig:
    """Everything a pipeline run needs; see ``README.md`` for the JSON layout."""

    a: list = field(default_factory=lambda: [1.0])
    alpha: Optional[float] = 0.5
    regulation: Optional[dict] = None
    besov: Optional[list] = None
    delta: float = 0.2
    pack_ratio: float = 0.35
    annulus: list = field(default_factory=lambda: [2.0 ** -6, 2.0 ** 6])
    candidate_resolution: int = 32
    N_c: int = 32
    M: int = 128
    grid: int = 128
    order: int = 3
    inner_radius: float = 0.5
    seed: int = 0
    n_verify: int = 10_000
    n_recon: int = 4000
    test_functions: Optional[list] = None
    test_center: Optional[float] = None
    norm_params: list = field(default_factory=lambda: [[2, 2, 0], [1, 1, 0], [2, 1, 1], ["inf", "inf", -1]])
    keep_fractions: list = field(default_factory=lambda: [0.01, 0.05, 0.1, 0.5, 1.0])
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    output_dir: str = "freqtile-out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.thresholds = {**DEFAULT_THRESHOLDS, **(cfg.thresholds or {})}
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Check module preconditions before any compute stage runs."""
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or len(a) not in (1, 2) or np.any(a <= 0):
            raise DomainError("a must be a positive vector of length 1 or 2")
        if self.besov is None:
            if (self.alpha is None) == (self.regulation is None):
                raise DomainError("give exactly one of alpha or regulation")
            if not (0 < self.delta):
                raise DomainError("delta must be positive")
            if not (0 < self.pack_ratio < 1):
                raise DomainError("pack_ratio must lie in (0, 1)")
            lo, hi = self.annulus
            if not (0 < lo < hi):
                raise DomainError("annulus must satisfy 0 < r_min < r_max")
        elif len(self.besov) != 2 or self.besov[0] > self.besov[1]:
            raise DomainError("besov must be [j_min, j_max]")
        FrameGeometry(tuple([1.0] * len(a)), int(self.N_c), int(self.M))
        if self.grid < 128:
            raise DomainError("grid must be >= 128")
        if self.order < 3:
            raise DomainError("bump order must be >= 3")
        for p in self.norm_params:
            SpaceParams(*p)
        for fr in self.keep_fractions:
            if not (0 <= fr <= 1):
                raise DomainError("keep fractions must lie in [0, 1]")
        return self


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_encode) + "\n"


def _encode(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.files = []

    def text(self, name, content: str):
        (self.out / name).write_text(content)
        self.files.append(name)

    def data(self, name, content: bytes):
        (self.out / name).write_bytes(content)
        self.files.append(name)

    def manifest(self):
        digests = {n: hashlib.sha256((self.out / n).read_bytes()).hexdigest() for n in sorted(self.files)}
        self.text("manifest.json", _dump(digests))
        return digests


class Stage:
    """Context manager naming the failing stage in propagated errors."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, et, ev, tb):
        if ev is not None and not getattr(ev, "stage", None):
            try:
                ev.stage = self.name
            except AttributeError:
                pass
        log.info("stage %s done in %.2fs", self.name, time.perf_counter() - self.t0)
        return False


def make_covering(cfg: RunConfig):
    ctx = QuasiNormContext.create(cfg.a)
    if cfg.besov is not None:
        return besov_covering(ctx, int(cfg.besov[0]), int(cfg.besov[1]))
    h = alpha_regulation(ctx, cfg.alpha) if cfg.alpha is not None else regulation_from_dict(ctx, cfg.regulation)
    return build_covering(h, cfg.delta, cfg.pack_ratio, tuple(cfg.annulus), cfg.candidate_resolution,
                          seed=cfg.seed)


def make_test_functions(cfg: RunConfig, cov):
    if cfg.test_functions is None:
        return default_test_set(cov.ctx, cov.covered, cfg.test_center)
    return [registry_instantiate(TestFunctionSpec(t["name"], t.get("params", {})), cov.ctx)
            for t in cfg.test_functions]


def run_pipeline(cfg: RunConfig) -> tuple:
    """Run every stage and write the artifacts into ``cfg.output_dir``.

    Returns ``(ok, summary)`` where ``ok`` is False iff an acceptance
    threshold of the configuration is violated.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    w = _Writer(out)
    th = cfg.thresholds
    checks = {}
    # the output location is not part of the run, so it stays out of the hashed artifacts
    w.text("config.json", _dump({k: v for k, v in cfg.to_dict().items() if k != "output_dir"}))

    with Stage("covering"):
        cov = make_covering(cfg)
        w.text("covering.json", cov.to_json())

    with Stage("admissibility"):
        adm = check_admissible(cov, cfg.n_verify, cfg.seed)
        if cov.shape == "ball":
            adm["packing"] = packing_report(cov)
            checks["packing_disjoint"] = adm["packing"]["violations"] == 0
        checks["covered_fraction"] = adm["covered_fraction"] == 1.0
        checks["max_overlap"] = adm["max_overlap"] <= th["max_overlap"]
        checks["origin_clear"] = adm["min_dist_to_origin"] > 0
        w.text("admissibility.json", _dump(adm))

    bapu = Bapu(cov, cfg.order, inner_radius=cfg.inner_radius)
    with Stage("partition"):
        pou = bapu.verify_pou(cfg.n_verify, cfg.seed)
        checks["pou"] = max(pou["max_psi_residual"], pou["max_phi2_residual"]) <= th["pou_residual"]
        w.text("pou.json", _dump(pou))

    geom = FrameGeometry.for_covering(cov, cfg.N_c, cfg.M)
    fns = make_test_functions(cfg, cov)
    params = [SpaceParams(*p) for p in cfg.norm_params]
    results = []
    curve_rows = []
    for i, f in enumerate(fns):
        with Stage(f"analyze[{i}]"):
            cs = analyze(bapu, geom, f)
            w.data(f"coeffs_{i}.bin", cs.to_bytes())
        with Stage(f"parseval[{i}]"):
            ratio = parseval_check(cs, f)
        with Stage(f"norms[{i}]"):
            local = local_lp_norms(bapu, f, sorted({p.p for p in params}), cfg.grid)
            reports = [norm_report(bapu, f, cs, p, cfg.grid, local).to_dict() for p in params]
        with Stage(f"compression[{i}]"):
            curve = compression_curve(f, cs, bapu, cfg.keep_fractions, cfg.n_recon, cfg.seed)
        errs = [e for _, _, e in curve]
        full = curve[-1][2] if cfg.keep_fractions and cfg.keep_fractions[-1] == 1.0 else None
        res = {"function": f.name, "params": f.params, "l2_oracle": f.l2_norm_oracle, "n_coefficients": len(cs),
               "n_patches": int(len(cs.patch_ids())), "parseval_ratio": ratio, "recon_error": full,
               "monotone": bool(np.all(np.diff(errs) <= 1e-15)), "norms": reports}
        results.append(res)
        curve_rows += [(i, f.name, fr, k, e) for fr, k, e in curve]
        checks[f"parseval[{i}]"] = abs(ratio - 1) <= th["parseval_tol"]
        if full is not None:
            checks[f"recon[{i}]"] = full <= th["recon_error"]
        checks[f"monotone[{i}]"] = res["monotone"]

    w.text("report.json", _dump({"covering_id": cov.covering_id, "n_patches": len(cov), "functions": results}))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["function_index", "function", "keep_fraction", "kept", "reconstruct_error"])
    for row in curve_rows:
        wr.writerow([row[0], row[1], repr(row[2]), row[3], repr(row[4])])
    w.text("compression.csv", buf.getvalue())

    ok = all(checks.values())
    summary = {"ok": ok, "checks": checks, "covering_id": cov.covering_id}
    w.text("summary.json", _dump(summary))
    summary["manifest"] = w.manifest()
    return ok, summary


def selftest_config(output_dir: str) -> RunConfig:
    """The default end-to-end configuration: ``d = 1``, ``alpha = 0.5``."""
    return RunConfig(output_dir=str(output_dir))
