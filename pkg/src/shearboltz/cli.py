"""Command-line entry point: ``shearboltz <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .harness import output
from .harness.acceptance import run_acceptance
from .harness.config import SCENARIOS, Scenario, load_scenario
from .harness.scenarios import rerun_from_manifest, run_scenario
from .kernels import PRESETS, CollisionKernel, kernel_moments
from .moment_dynamics import MomentMatrix, ResonanceError, build_operator, evolve, stationary_moments
from .spectral import eigenvalues, find_K0, growing_mode, reconstruct_measure


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario INI file")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="64-bit seed")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--third-source", action="store_true",
                   help="use beta/3 as the moment source constant instead of beta")
    p.add_argument("--threads", type=int, help="worker threads for the particle engine")


def _kernel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=PRESETS, default="constant")
    p.add_argument("--kernel-table", type=Path, help="CSV of (x, b(x)) replacing the preset")
    p.add_argument("--gamma", type=float, default=0.0)


def _shear_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--K", type=float, help="shear rate")
    g.add_argument("--K-factor", type=float, help="shear rate as a multiple of K0")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shearboltz", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario (Monte Carlo plus its checks)")
    _common(p)
    p.add_argument("--scenario", choices=SCENARIOS, help="preset to run when no config is given")
    p.add_argument("--n-particles", type=int)
    p.add_argument("--t-end", type=float)

    p = sub.add_parser("moments", help="exact second-moment evolution")
    _common(p)
    _kernel_args(p)
    _shear_args(p)
    p.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0])
    p.add_argument("--m0", type=float, nargs=6, metavar="M",
                   help="initial moments in the order 11 12 13 22 23 33 (default: identity)")

    p = sub.add_parser("spectrum", help="eigenvalues, K0 and the growing mode")
    _common(p)
    _kernel_args(p)
    _shear_args(p)
    p.add_argument("--alpha", type=float, help="explicit kernel constant (with --beta)")
    p.add_argument("--beta", type=float, help="explicit kernel constant (with --alpha)")
    p.add_argument("--grid", type=float, nargs="+", help="sweep K over these multiples of K0")

    p = sub.add_parser("scan-k", help="Monte Carlo sweep across the shear threshold")
    _common(p)
    p.add_argument("--grid", type=float, nargs="+", help="K values as multiples of K0")
    p.add_argument("--n-particles", type=int)

    p = sub.add_parser("selfsim", help="rescaled-speed KS series in the growing regime")
    _common(p)
    p.add_argument("--n-particles", type=int)

    p = sub.add_parser("check", help="run the acceptance suite")
    _common(p)
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")

    p = sub.add_parser("rerun", help="rerun a scenario from its manifest and compare outputs")
    _common(p)
    p.add_argument("manifest", type=Path)
    return ap


def _scenario(args, name: str, **extra) -> Scenario:
    sc = load_scenario(args.config) if args.config else Scenario.preset(name)
    kw = dict(seed=args.seed, out_dir=str(args.out), **extra)
    if args.third_source:
        kw["third_source"] = True
    return sc.with_overrides(**kw)


def _kernel(args) -> CollisionKernel:
    if args.kernel_table:
        return CollisionKernel.from_csv(args.kernel_table, gamma=args.gamma)
    return CollisionKernel.preset(args.kernel, gamma=args.gamma)


def _shear(args, C1, C2) -> float:
    if args.K_factor is not None:
        return args.K_factor * find_K0(C1, C2)
    return 1.0 if args.K is None else args.K


def _report(manifest) -> int:
    print(json.dumps({"verdicts": manifest.verdicts, "passed": manifest.passed}, indent=2, default=str))
    return 0 if manifest.passed else 1


def cmd_simulate(args) -> int:
    if not args.config and not args.scenario:
        raise SystemExit("simulate needs --config or --scenario")
    sc = _scenario(args, args.scenario or "relax_k0", n_particles=args.n_particles, t_end=args.t_end)
    return _report(run_scenario(sc))


def cmd_moments(args) -> int:
    km = kernel_moments(_kernel(args))
    op0 = build_operator(km, 0.0)
    K = _shear(args, op0.C1, op0.C2)
    src = km.beta / 3 if args.third_source else km.beta
    op = build_operator(km, K, source_c=src)
    m0 = MomentMatrix.from_vector(args.m0) if args.m0 else MomentMatrix.identity()
    rows = []
    for t in sorted(args.times):
        M = evolve(op, m0, t)
        rows.append([t, *M.as_vector(), M.min_eigenvalue()])
    cols = ["time", "M11", "M12", "M13", "M22", "M23", "M33", "min_eig"]
    path = output.write_csv(args.out / "moments_ode.csv", "moments_ode", cols, rows)
    try:
        st = stationary_moments(op).as_vector().tolist()
    except ResonanceError:
        st = None
    print(json.dumps({"K": K, "source_c": src, "stationary": st, "csv": str(path)}, indent=2))
    return 0


def cmd_spectrum(args) -> int:
    if (args.alpha is None) != (args.beta is None):
        raise SystemExit("--alpha and --beta go together")
    if args.alpha is not None:
        a, b = args.alpha, args.beta
        C1, C2, l0 = (5 * b - 3 * a) / 2, (b - a) / 2, None
    else:
        km = kernel_moments(_kernel(args))
        op0 = build_operator(km, 0.0)
        C1, C2, l0 = op0.C1, op0.C2, km.b_l1
    args.out.mkdir(parents=True, exist_ok=True)
    if args.grid:
        K0 = find_K0(C1, C2)
        rows = []
        for f in args.grid:
            rep = eigenvalues(C1, C2, f * K0)
            rows.append([f * K0, f, rep.max_real_part, math.nan if rep.mu is None else rep.mu])
        path = output.write_csv(args.out / "spectrum_sweep.csv", "spectrum_sweep",
                                ["K", "K_over_K0", "max_re_lambda", "mu"], rows)
        print(json.dumps({"K0": K0, "csv": str(path)}, indent=2))
        return 0
    K = _shear(args, C1, C2)
    rep = eigenvalues(C1, C2, K)
    d = rep.to_dict()
    d["l0"] = l0
    if rep.mu is not None:
        mode = growing_mode(C1, C2, K)
        rp = reconstruct_measure(mode)
        d["growing_mode"] = mode.eigvec.as_vector().tolist()
        d["reconstruction"] = {"A1": rp.A1, "A2": rp.A2, "A3": rp.A3, "beta_mass": rp.beta_mass}
    output.write_json(args.out / "spectrum.json", d)
    print(json.dumps(d, indent=2))
    return 0


def cmd_scan_k(args) -> int:
    extra = {"n_particles": args.n_particles}
    if args.grid:
        extra["K_grid"] = tuple(args.grid)
    return _report(run_scenario(_scenario(args, "k_sweep", **extra)))


def cmd_selfsim(args) -> int:
    return _report(run_scenario(_scenario(args, "selfsim", n_particles=args.n_particles)))


def cmd_check(args) -> int:
    results = run_acceptance(args.out, seed=args.seed or 0, third_source=args.third_source,
                             only=args.only)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


def cmd_rerun(args) -> int:
    _, same = rerun_from_manifest(args.manifest, args.out)
    for name, eq in same.items():
        print(f"{'same' if eq else 'DIFF'} {name}")
    return 0 if all(same.values()) else 1


_COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "spectrum": cmd_spectrum,
    "scan-k": cmd_scan_k,
    "selfsim": cmd_selfsim,
    "check": cmd_check,
    "rerun": cmd_rerun,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
