"""Command-line front end: ``pseudohinf {analyze,synthesize,simulate,sweep} MODEL ...``.

Exit codes: 0 success, 1 the method's conditions are not met, 2 invalid input.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .modelfile import Model, ModelError, dump_json, load_controller, load_model
from .numlin import eigenvalues
from .pendulum import PendulumError, pendulum_certificate, verify_sector
from .sbrl import SweepGrid, check_gain_condition, check_lagrange_frequency, check_theorem1, lagrange_sweep_table
from .sim import SimConfig, shift_invariance_test, simulate
from .synthesis import (
    RationalitySearchError,
    SynthesisError,
    SynthesisParams,
    close_loop,
    grid_search,
    synthesize,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


def _floats(text: str | None, name: str) -> list[float] | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals or not all(np.isfinite(vals)):
        raise InputError(f"--{name}: expected finite numbers")
    return vals


def _emit(text: str, path: str | None, out) -> str | None:
    if path in (None, "-"):
        out.write(text)
        return None
    Path(path).write_text(text)
    return path


def _spectrum(a: np.ndarray) -> dict:
    s = eigenvalues(a)
    return {"stable": s.stable_count, "unstable": s.unstable_count, "on_axis": s.imaginary_count,
            "max_real_part": s.max_real}


def _grid(args) -> SweepGrid:
    try:
        return SweepGrid(args.wmin, args.wmax, args.points)
    except ValueError as exc:
        raise InputError(f"sweep grid: {exc}") from None


def _params(args, model: Model, need_tau0: bool = True) -> SynthesisParams:
    syn = model.synthesis
    lam = args.lam if args.lam is not None else syn.get("lambda")
    tau = _floats(args.tau, "tau") or syn.get("tau")
    tau0 = args.tau0 if args.tau0 is not None else syn.get("tau0", 1.0 if not need_tau0 else None)
    mu = _floats(getattr(args, "mu", None), "mu") or syn.get("mu")
    if lam is None or tau is None or tau0 is None:
        raise InputError("lambda, tau and tau0 are required (flags or the model's synthesis block)")
    try:
        return SynthesisParams(float(lam), tuple(tau), float(tau0), tuple(mu) if mu else None).with_bank(model.bank)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _loop(model: Model, controller_path: str | None):
    """Closed loop with a controller file, or the open loop ``(A, B1, C1)``."""
    if controller_path is None:
        p = model.plant
        from .systems import ClosedLoop

        return ClosedLoop(p.A, p.B1, p.C1, p.n, model.bank), None
    ctrl, meta = load_controller(controller_path)
    try:
        return close_loop(model.plant, ctrl, model.bank), meta
    except ValueError as exc:
        raise InputError(f"controller does not fit the model: {exc}") from None


# -- subcommands -------------------------------------------------------------------


def cmd_analyze(args, out) -> int:
    model = load_model(args.model)
    cl, _ = _loop(model, args.controller)
    sys_ = cl.lti()
    grid = _grid(args)
    gain = check_gain_condition(sys_, grid)
    cert1 = check_theorem1(sys_)
    report = {"command": "analyze", "version": __version__, "states": cl.n, "spectrum": _spectrum(cl.a)}
    report["pseudo_hurwitz"] = gain.pseudo_hurwitz
    if not gain.pseudo_hurwitz:
        sp = report["spectrum"]
        report["message"] = (f"state matrix has {sp['unstable']} eigenvalue(s) in the open right half-plane "
                             f"and {sp['on_axis']} on the axis; exactly one unstable eigenvalue is required")
    report["gain"] = {"holds": gain.holds, "peak_gain": gain.peak_gain, "peak_omega": gain.peak_omega,
                      "margin": gain.margin, "label": gain.label}
    report["riccati_certificate"] = {"status": cert1.status,
                                     "branch": cert1.branch.value if cert1.branch else None,
                                     "inertia": cert1.inertia.as_tuple() if cert1.inertia else None,
                                     "notes": list(cert1.notes)}
    ok = gain.holds
    if model.bank is not None:
        report["sector"] = [{"index": c.index, "holds": c.passed, "worst_ratio": c.worst_ratio, "worst_z": c.worst_z,
                             "offending_z": list(c.offending)} for c in verify_sector(model.bank)]
        ok_sector = all(c["holds"] for c in report["sector"])
    else:
        ok_sector = True
    if args.lam is not None:
        params = _params(args, model, need_tau0=False)
        shifted = eigenvalues(cl.a + params.lam * np.eye(cl.n))
        lv = check_lagrange_frequency(sys_, params.lam, params.tau, np.diag(params.m_mu), grid)
        report["lagrange"] = {"lambda": params.lam, "tau": list(params.tau), "mu": np.diag(params.m_mu).tolist(),
                              "shifted_pseudo_hurwitz": shifted.stable_count == cl.n - 1
                              and shifted.unstable_count == 1,
                              "holds": lv.holds, "margin": lv.margin, "margin_omega": lv.margin_omega,
                              "peak_weighted_gain": lv.peak_weighted_gain, "label": lv.label}
        ok = report["lagrange"]["holds"] and report["lagrange"]["shifted_pseudo_hurwitz"]
    if args.certificate:
        if model.bank is None:
            raise InputError("--certificate needs a nonlinearities block")
        tau0 = args.tau0 if args.tau0 is not None else model.synthesis.get("tau0")
        if tau0 is None:
            raise InputError("--certificate needs --tau0 or synthesis.tau0")
        try:
            report["certificate"] = pendulum_certificate(cl.a, cl.c, model.bank, float(tau0)).to_dict()
        except PendulumError as exc:
            report["certificate"] = {"error": str(exc)}
            ok = False
    ok = ok and ok_sector
    report["ok"] = bool(ok)
    _emit(dump_json(report), args.report, out)
    return EXIT_OK if ok else EXIT_FAIL


def _result_report(res) -> dict:
    rep = {"theorem": res.theorem, "conditions": [c.to_dict() for c in res.checks]}
    for name in ("X", "Y"):
        sol = getattr(res, name)
        if sol is not None:
            rep[name] = {"inertia": sol.inertia.as_tuple(), "branch": sol.kind.value, "residual": sol.residual_norm}
    if res.rho_xy is not None:
        rep["rho_xy"] = res.rho_xy
    if res.params is not None:
        p = res.params
        rep["params"] = {"lambda": p.lam, "tau": list(p.tau), "tau0": p.tau0, "mu": list(np.diag(p.m_mu))}
    if res.gain is not None:
        rep["sweep"] = {"peak_gain": res.gain.peak_gain, "peak_omega": res.gain.peak_omega,
                        "margin": res.gain.margin, "label": res.gain.label}
    if res.lagrange is not None:
        rep["sweep"] = {"margin": res.lagrange.margin, "margin_omega": res.lagrange.margin_omega,
                        "peak_weighted_gain": res.lagrange.peak_weighted_gain, "label": res.lagrange.label}
    if res.decomposition is not None:
        d = res.decomposition
        rep["decomposition"] = {"flavor": d.flavor, "l": d.l, "T": d.T, "condition": d.condition,
                                "exact": d.T_exact is not None}
    if res.certificate is not None:
        rep["certificate"] = res.certificate.to_dict()
    rep["controller"] = res.controller.to_dict()
    return rep


def cmd_synthesize(args, out) -> int:
    model = load_model(args.model)
    theorem = args.theorem if args.theorem is not None else model.synthesis.get("theorem")
    if theorem is None:
        raise InputError("--theorem is required (or synthesis.theorem in the model)")
    theorem = int(theorem)
    plant = model.plant
    if theorem in (4, 5, 6, 7) and plant.p == 0:
        report = {"command": "synthesize", "theorem": theorem, "ok": False,
                  "conditions": [{"condition": "Assumption 2", "passed": False,
                                  "detail": "plant has no measured output (C2, D21 missing)"}]}
        _emit(dump_json(report), args.report, out)
        return EXIT_FAIL
    report = {"command": "synthesize", "version": __version__}
    try:
        if theorem in (6, 7, 9):
            if model.bank is None:
                raise InputError(f"theorem {theorem} needs a nonlinearities block")
            if args.search:
                res = grid_search(plant, model.bank, theorem, tau0=args.tau0 or model.synthesis.get("tau0", 1.0),
                                  eps=args.eps)
            else:
                res = synthesize(theorem, plant, model.bank, _params(args, model))
        else:
            res = synthesize(theorem, plant)
    except SynthesisError as exc:
        report.update({"theorem": exc.theorem, "ok": False, "failed_condition": exc.condition,
                       "conditions": [c.to_dict() for c in exc.checks]})
        _emit(dump_json(report), args.report, out)
        return EXIT_FAIL
    except (RationalitySearchError, PendulumError) as exc:
        report.update({"theorem": theorem, "ok": False, "error": str(exc)})
        if getattr(exc, "assumption", None):
            report["failed_condition"] = exc.assumption
        _emit(dump_json(report), args.report, out)
        return EXIT_FAIL
    report.update(_result_report(res))
    report["ok"] = True
    if "grid_point" in res.extras:
        report["grid_point"] = res.extras["grid_point"]
    doc = dict(res.controller.to_dict())
    doc["theorem"] = theorem
    if res.params is not None:
        doc["params"] = report["params"]
    if res.certificate is not None:
        doc["certificate"] = res.certificate.to_dict()
    report["controller_file"] = _emit(dump_json(doc), args.out, io.StringIO()) if args.out else None
    _emit(dump_json(report), args.report, out)
    return EXIT_OK


def _fmt(v: float) -> str:
    return "%.17g" % v


def cmd_simulate(args, out) -> int:
    model = load_model(args.model)
    cl, meta = _loop(model, args.controller)
    sim = model.simulation
    x0 = _floats(args.x0, "x0") or sim.get("x0")
    if x0 is None:
        raise InputError("--x0 is required (or simulation.x0 in the model)")
    if len(x0) == model.plant.n and cl.n > len(x0):
        x0 = list(x0) + [0.0] * (cl.n - len(x0))  # controller starts at rest
    if len(x0) != cl.n:
        raise InputError(f"x0 has {len(x0)} entries; the loop has {cl.n} states")
    try:
        cfg = SimConfig(args.t_final if args.t_final is not None else sim.get("t_final", 200.0),
                        args.dt if args.dt is not None else sim.get("dt", 1e-3), tuple(x0), args.stride)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    traj = simulate(cl, cfg)
    report = {"command": "simulate", "version": __version__, "states": cl.n, "t_final": cfg.t_final, "dt": cfg.dt,
              "records": len(traj.times), "sup_norm": traj.sup_norm, "threshold": traj.threshold,
              "bounded": traj.bounded, "diverged": traj.diverged, "truncation_time": traj.truncation_time}
    columns = [traj.times[:, None], traj.states]
    header = ["t"] + [f"x{i + 1}" for i in range(cl.n)]
    if args.shift_test:
        lattice = None
        if meta and "certificate" in meta:
            lattice = np.array(meta["certificate"]["lattice_vector"], dtype=float)
        else:
            tau0 = args.tau0 if args.tau0 is not None else model.synthesis.get("tau0")
            if model.bank is None or tau0 is None:
                raise InputError("--shift-test needs a certificate in the controller file or nonlinearities + tau0")
            try:
                lattice = pendulum_certificate(cl.a, cl.c, model.bank, float(tau0)).lattice_vector
            except PendulumError as exc:
                report["shift_test"] = {"error": str(exc)}
        if lattice is not None:
            if traj.diverged:
                report["shift_test"] = {"error": "trajectory diverged"}
            else:
                shift = shift_invariance_test(cl, lattice, cfg)
                report["shift_test"] = {"max_deviation": shift.max_deviation, "lattice_vector": lattice}
                columns.append(shift.deviation[:, None])
                header.append("deviation")
    data = np.hstack(columns)
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in data]
    report["csv"] = _emit("\n".join(lines) + "\n", args.out, out)
    _emit(dump_json(report), args.report, sys.stderr)
    ok = traj.bounded and "error" not in report.get("shift_test", {})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args, out) -> int:
    model = load_model(args.model)
    cl, _ = _loop(model, args.controller)
    grid = _grid(args)
    m = cl.c.shape[0]
    lam = args.lam if args.lam is not None else model.synthesis.get("lambda", 0.0)
    tau = _floats(args.tau, "tau") or model.synthesis.get("tau") or [1.0] * m
    mu = _floats(args.mu, "mu") or (model.bank.mu.tolist() if model.bank is not None else [1.0] * m)
    if lam < 0 or len(tau) != m or len(mu) != m or min(tau) <= 0 or min(mu) <= 0:
        raise InputError(f"need lambda >= 0 and {m} positive tau and mu entries")
    rows = lagrange_sweep_table(cl.lti(), lam, tau, mu, grid.omegas())
    text = "omega,peak_sv,margin\n" + "".join(f"{_fmt(w)},{_fmt(g)},{_fmt(mg)}\n" for w, g, mg in rows)
    _emit(text, args.out, out)
    return EXIT_OK if rows and max(r[2] for r in rows) < 0 else EXIT_FAIL


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudohinf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, controller_opt=True):
        p.add_argument("model", help="model JSON file")
        if controller_opt:
            p.add_argument("--controller", help="controller JSON file (default: analyze the open loop A, B1, C1)")

    def params(p):
        p.add_argument("--lambda", dest="lam", type=float, help="shift lambda")
        p.add_argument("--tau", help="comma-separated multipliers tau_1..tau_m")
        p.add_argument("--tau0", type=float, help="lattice scale tau0")

    def grid(p):
        p.add_argument("--wmin", type=float, default=1e-4)
        p.add_argument("--wmax", type=float, default=1e4)
        p.add_argument("--points", type=int, default=400)

    p = sub.add_parser("analyze", help="pseudo-Hurwitz, Riccati certificate, gain sweep, sector and lattice checks")
    common(p)
    params(p)
    p.add_argument("--mu", help="comma-separated sector bounds (default: from the model)")
    grid(p)
    p.add_argument("--certificate", action="store_true", help="compute the pendulum-likeness certificate")
    p.add_argument("--report", help="write the JSON report here (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="construct a controller")
    common(p, controller_opt=False)
    p.add_argument("--theorem", type=int, choices=(3, 4, 5, 6, 7, 9))
    params(p)
    p.add_argument("--search", action="store_true", help="grid search over (lambda, tau), with rationality search")
    p.add_argument("--eps", type=float, default=0.05, help="rationality search radius")
    p.add_argument("--out", help="controller JSON file to write")
    p.add_argument("--report", help="write the JSON report here (default stdout)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="simulate the closed loop and write a trajectory CSV")
    common(p)
    p.add_argument("--x0", help="comma-separated initial state (plant states only: controller starts at zero)")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--stride", type=int, default=1, help="record every k-th step")
    p.add_argument("--shift-test", dest="shift_test", action="store_true", help="add the lattice shift deviation")
    p.add_argument("--tau0", type=float)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--report", help="JSON report path (default stderr)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="CSV of the shifted, weighted frequency condition")
    common(p)
    params(p)
    p.add_argument("--mu")
    grid(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except (ModelError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
