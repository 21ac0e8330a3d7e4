"""Command-line entry point: ``freqtile <command> ...``.

Exit codes: 0 success, 2 validation failure, 3 acceptance-threshold
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .anorm import QuasiNormContext
from .bapu import Bapu
from .covering import besov_covering, build_covering, check_admissible, load_covering, packing_report, save_covering
from .errors import ConstructionError, CoveringMismatch, DomainError
from .frame import CoefficientSet, FrameGeometry, analyze, parseval_check, synthesize
from .pipeline import DEFAULT_THRESHOLDS, RunConfig, _dump, run_pipeline, selftest_config
from .registry import TestFunctionSpec, default_test_set, registry_instantiate
from .regulation import alpha_regulation, regulation_from_dict
from .spaces import SpaceParams, compression_curve, decomposition_norm, local_lp_norms, norm_report, threshold

log = logging.getLogger("freqtile")

EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD, EXIT_IO = 0, 2, 3, 4


class ThresholdFailure(Exception):
    pass


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _emit(obj):
    sys.stdout.write(_dump(obj))


def _function(args, cov):
    """Instantiate ``--fn``/``--params``; ``--fn default:i`` picks from the default test set."""
    name = args.fn
    if name.startswith("default"):
        i = int(name.split(":")[1]) if ":" in name else 0
        fns = default_test_set(cov.ctx, cov.covered)
        if not 0 <= i < len(fns):
            raise DomainError(f"default test set has {len(fns)} functions")
        return fns[i], {"name": name}
    params = json.loads(args.params) if args.params else {}
    return registry_instantiate(TestFunctionSpec(name, params), cov.ctx), {"name": name, "params": params}


def _load_coeffs(path, covering=None):
    cs = CoefficientSet.load(path)
    cov_path = covering or cs.meta.get("covering_path")
    if cov_path is None:
        raise DomainError("no covering given and none recorded in the coefficient file")
    cov = load_covering(cov_path)
    if cov.covering_id != cs.covering_id:
        raise CoveringMismatch("coefficients were produced from a different covering")
    return cs, cov


def _geometry(args, cov):
    return FrameGeometry.for_covering(cov, args.N_c, args.M)


# ---- commands ----

def cmd_covering_build(args):
    ctx = QuasiNormContext.create(_floats(args.aniso))
    if args.besov:
        lo, hi = (int(v) for v in args.besov.split(","))
        cov = besov_covering(ctx, lo, hi)
    else:
        if args.regulation:
            h = regulation_from_dict(ctx, json.loads(Path(args.regulation).read_text()))
        else:
            h = alpha_regulation(ctx, args.alpha)
        cov = build_covering(h, args.delta, args.pack_ratio, tuple(_floats(args.annulus)),
                             args.candidate_resolution, seed=args.seed)
    save_covering(cov, args.output)
    _emit({"covering_id": cov.covering_id, "n_patches": len(cov), "covered": list(cov.covered),
           "output": str(args.output)})


def cmd_covering_check(args):
    cov = load_covering(args.covering)
    rep = check_admissible(cov, args.samples, args.seed)
    ok = rep["covered_fraction"] == 1.0 and rep["min_dist_to_origin"] > 0 \
        and rep["max_overlap"] <= args.max_overlap
    if cov.shape == "ball":
        rep["packing"] = packing_report(cov)
        ok = ok and rep["packing"]["violations"] == 0
    rep["ok"] = bool(ok)
    _emit(rep)
    if not ok:
        raise ThresholdFailure("covering is not admissible at the requested thresholds")


def cmd_bapu_check(args):
    cov = load_covering(args.covering)
    b = Bapu(cov, args.order, inner_radius=args.inner_radius)
    rep = b.verify_pou(args.samples, args.seed)
    if args.heatmap:
        # residual samples for external plotting: one row per point
        rng = np.random.default_rng(args.seed)
        x = cov.sample_covered(rng, args.samples)
        pi, _, psi, phi = b.partition(x)
        r1 = np.bincount(pi, weights=psi, minlength=len(x)) - 1.0
        r2 = np.bincount(pi, weights=phi * phi, minlength=len(x)) - 1.0
        with open(args.heatmap, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"xi{i + 1}" for i in range(cov.d)] + ["psi_residual", "phi2_residual"])
            for row, a, c in zip(x, r1, r2):
                wr.writerow([repr(float(v)) for v in row] + [repr(float(a)), repr(float(c))])
        rep["heatmap"] = str(args.heatmap)
    worst = max(rep["max_psi_residual"], rep["max_phi2_residual"])
    rep["ok"] = bool(worst <= args.tol)
    _emit(rep)
    if not rep["ok"]:
        raise ThresholdFailure(f"partition residual {worst:.3g} above {args.tol:g}")


def cmd_analyze(args):
    cov = load_covering(args.covering)
    f, spec = _function(args, cov)
    b = Bapu(cov, args.order, inner_radius=args.inner_radius)
    cs = analyze(b, _geometry(args, cov), f)
    cs.meta.update({"function": spec, "l2_oracle": f.l2_norm_oracle,
                    "covering_path": str(Path(args.covering).resolve())})
    cs.save(args.output)
    _emit({"output": str(args.output), "n_coefficients": len(cs), "n_patches": int(len(cs.patch_ids())),
           "energy": cs.energy(), "skipped": len(cs.skipped)})


def cmd_synthesize(args):
    cs, cov = _load_coeffs(args.coeffs, args.covering)
    pts = np.array([_floats(p) for p in args.at], dtype=float)
    if pts.shape[1] != cov.d:
        raise DomainError(f"--at needs {cov.d} coordinates")
    vals = synthesize(cs, Bapu(cov, args.order, inner_radius=args.inner_radius), pts)
    _emit([{"xi": p.tolist(), "re": float(v.real), "im": float(v.imag)} for p, v in zip(pts, vals)])


def cmd_parseval(args):
    cs = CoefficientSet.load(args.coeffs)
    l2 = cs.meta.get("l2_oracle")
    if l2 is None:
        raise DomainError("coefficient file carries no l2 oracle")
    ratio = cs.energy() / l2 ** 2 if l2 > 0 else (1.0 if cs.energy() == 0 else float("nan"))
    ok = abs(ratio - 1) <= args.tol
    _emit({"energy": cs.energy(), "l2_oracle": l2, "ratio": ratio, "ok": bool(ok)})
    if not ok:
        raise ThresholdFailure(f"Parseval ratio {ratio:.8g} outside 1 +- {args.tol:g}")


def cmd_norm(args):
    cov = load_covering(args.covering)
    f, _ = _function(args, cov)
    b = Bapu(cov, args.order, inner_radius=args.inner_radius)
    prm = SpaceParams(args.p, args.q, args.beta)
    rep = decomposition_norm(b, f, prm, args.grid)
    _emit(rep.to_dict())


def cmd_compress(args):
    cs = CoefficientSet.load(args.coeffs)
    if (args.keep is None) == (args.tau is None):
        raise DomainError("give exactly one of --keep or --tau")
    keep = args.keep
    if keep is not None:
        keep = keep.strip()
        keep = round(float(keep[:-1]) / 100 * len(cs)) if keep.endswith("%") else int(keep)
    small = threshold(cs, keep=keep, tau=args.tau)
    small.save(args.output)
    _emit({"output": str(args.output), "kept": len(small), "of": len(cs),
           "energy_fraction": small.energy() / cs.energy() if cs.energy() else 1.0})


def cmd_report(args):
    cov = load_covering(args.covering)
    f, spec = _function(args, cov)
    b = Bapu(cov, args.order, inner_radius=args.inner_radius)
    cs = analyze(b, _geometry(args, cov), f)
    prm = SpaceParams(args.p, args.q, args.beta)
    local = local_lp_norms(b, f, (prm.p,), args.grid)
    rep = norm_report(b, f, cs, prm, args.grid, local).to_dict()
    rep["function"] = spec
    rep["parseval_ratio"] = parseval_check(cs, f)
    out = Path(args.output)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    (out / "report.json").write_text(_dump(rep))
    curve = compression_curve(f, cs, b, _floats(args.keep), args.samples, args.seed)
    with open(out / "compression.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["keep_fraction", "kept", "reconstruct_error"])
        for fr, k, e in curve:
            wr.writerow([repr(fr), k, repr(e)])
    _emit({"decomposition_norm": rep["decomposition_norm"], "frame_norm": rep["frame_norm"],
           "ratio": rep["ratio"], "output": str(out)})


def cmd_selftest(args):
    if args.config:
        cfg = RunConfig.load(args.config)
        if args.output:
            cfg.output_dir = str(args.output)
    else:
        cfg = selftest_config(args.output or "freqtile-selftest")
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    ok, summary = run_pipeline(cfg)
    _emit(summary)
    if not ok:
        failed = sorted(k for k, v in summary["checks"].items() if not v)
        raise ThresholdFailure(f"failed checks: {failed}")


# ---- parser ----

def _add_fn(p):
    p.add_argument("--fn", required=True, help="test function family, or default[:i]")
    p.add_argument("--params", help="JSON object of family parameters")


def _add_partition(p):
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--inner-radius", dest="inner_radius", type=float, default=0.5)


def _add_frame(p):
    p.add_argument("--N-c", dest="N_c", type=int, default=32)
    p.add_argument("--M", type=int, default=128)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqtile", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    cov = sub.add_parser("covering", help="build or check coverings").add_subparsers(dest="action", required=True)
    p = cov.add_parser("build")
    p.add_argument("--aniso", default="1", help="comma-separated anisotropy vector")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--regulation", help="JSON file with a custom regulation")
    p.add_argument("--besov", help="j_min,j_max: dyadic box covering instead")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--pack-ratio", dest="pack_ratio", type=float, default=0.35)
    p.add_argument("--annulus", default=f"{2.0 ** -6},{2.0 ** 6}")
    p.add_argument("--candidate-resolution", dest="candidate_resolution", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_covering_build)
    p = cov.add_parser("check")
    p.add_argument("covering")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-overlap", dest="max_overlap", type=int, default=DEFAULT_THRESHOLDS["max_overlap"])
    p.set_defaults(func=cmd_covering_check)

    bp = sub.add_parser("bapu", help="partition of unity checks").add_subparsers(dest="action", required=True)
    p = bp.add_parser("check")
    p.add_argument("covering")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_THRESHOLDS["pou_residual"])
    p.add_argument("--heatmap", help="write per-sample residuals to this CSV")
    _add_partition(p)
    p.set_defaults(func=cmd_bapu_check)

    p = sub.add_parser("analyze", help="frame coefficients of a test function")
    p.add_argument("covering")
    _add_fn(p)
    _add_frame(p)
    _add_partition(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="evaluate the synthesized spectrum")
    p.add_argument("coeffs")
    p.add_argument("--covering")
    p.add_argument("--at", action="append", required=True, help="comma-separated point; repeatable")
    _add_partition(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("parseval", help="coefficient energy against the norm oracle")
    p.add_argument("coeffs")
    p.add_argument("--tol", type=float, default=DEFAULT_THRESHOLDS["parseval_tol"])
    p.set_defaults(func=cmd_parseval)

    def norm_args(p):
        p.add_argument("--p", default="2")
        p.add_argument("--q", default="2")
        p.add_argument("--beta", type=float, default=0.0)
        p.add_argument("--grid", type=int, default=128)

    p = sub.add_parser("norm", help="decomposition-space norm")
    p.add_argument("covering")
    _add_fn(p)
    norm_args(p)
    _add_partition(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("compress", help="keep the largest coefficients")
    p.add_argument("coeffs")
    p.add_argument("--keep", help="number of coefficients to keep, or a percentage like 10%%")
    p.add_argument("--tau", type=float, help="keep every coefficient with |c| >= tau")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("report", help="norm comparison and compression curve")
    p.add_argument("covering")
    _add_fn(p)
    norm_args(p)
    _add_frame(p)
    _add_partition(p)
    p.add_argument("--keep", default="0.01,0.05,0.1,0.5,1.0")
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="run the full pipeline")
    p.add_argument("--config", help="RunConfig JSON; default is the built-in d=1 configuration")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ThresholdFailure as e:
        print(f"freqtile: threshold failure: {e}", file=sys.stderr)
        return EXIT_THRESHOLD
    except OSError as e:
        print(f"freqtile: I/O error{_stage(e)}: {e}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, CoveringMismatch, ConstructionError, ValueError, KeyError) as e:
        print(f"freqtile: invalid input{_stage(e)}: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _stage(e):
    s = getattr(e, "stage", None)
    return f" at stage {s}" if s else ""


if __name__ == "__main__":
    sys.exit(main())
