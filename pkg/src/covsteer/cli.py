"""``covsteer`` command line: JSON problem in, deterministic JSON result out.

Exit codes: 0 success / affirmative verdict, 1 negative verdict (not
reachable, not controllable, infeasible, no Riccati solution), 2 malformed
JSON, 3 schema or dimension violation, 4 numerical failure.
"""

import argparse
import hashlib
import json
import math
import sys as _sys
import time

import numpy as np

from . import __version__
from .errors import CovsteerError, DimensionError

EXIT_OK, EXIT_NEGATIVE, EXIT_JSON, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3, 4

TASKS = ("gramian", "reachable", "controllable", "steer-sdp", "steer-riccati", "riccati", "simulate", "ellipse")

_NUM = {"type": "number"}
_ROW = {"type": "array", "items": _NUM, "minItems": 1}
_MATRIX = {"anyOf": [_NUM, _ROW, {"type": "array", "items": _ROW, "minItems": 1}]}
_MATSEQ = {"anyOf": [_MATRIX, {"type": "array", "items": {"type": "array", "items": _ROW}, "minItems": 1}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "required": ["kind", "A", "B"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["discrete", "continuous"]},
                "A": _MATSEQ,
                "B": _MATSEQ,
                "D": _MATSEQ,
                "k": {"type": "integer", "minimum": 1},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "grid": {"type": "integer", "minimum": 2},
                "times": {"type": "array", "items": _NUM, "minItems": 2},
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(TASKS)},
                "k": {"type": "integer", "minimum": 1},
                "i": {"type": "integer", "minimum": 0},
                "t": {"type": "number", "minimum": 0},
                "times": {"type": "array", "items": _NUM},
                "sigma0": _MATRIX,
                "sigma_target": _MATRIX,
                "mu0": _MATRIX,
                "mu_target": _MATRIX,
                "pi0": _MATRIX,
                "weights": _MATSEQ,
                "F": {"type": "array", "items": _MATRIX},
                "V": {"type": "array", "items": _MATRIX},
                "N": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "export_problem": {"type": "boolean"},
                "paths_in_csv": {"type": "integer", "minimum": 0},
                "n_sigma": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 3},
                "ellipses": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["sigma", "mu"],
                        "additionalProperties": False,
                        "properties": {"label": {"type": "string"}, "sigma": _MATRIX, "mu": _MATRIX},
                    },
                },
            },
        },
    },
}


class ConfigError(Exception):
    def __init__(self, errors, code=EXIT_SCHEMA):
        super().__init__("; ".join(f"{e['pointer']}: {e['message']}" for e in errors))
        self.errors = errors
        self.code = code


def _pointer(parts):
    return "/" + "/".join(str(p) for p in parts) if parts else ""


def parse_config(text):
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` with ``code`` 2 for malformed JSON and 3 for
    schema or dimension errors; each error carries a JSON pointer.
    """
    import jsonschema

    try:
        cfg = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError([{"pointer": "", "message": f"malformed JSON: {exc}"}], EXIT_JSON) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = list(err.absolute_path)
        if err.validator == "required" and isinstance(err.instance, dict):
            missing = [k for k in err.validator_value if k not in err.instance]
            path = path + missing[:1]
        errors.append({"pointer": _pointer(path), "message": err.message})
    if errors:
        raise ConfigError(errors)
    return cfg


# ---------------------------------------------------------------- building


def _mat(x, ptr, shape=None):
    A = np.array(x, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    if shape is not None and A.shape != tuple(shape):
        raise ConfigError([{"pointer": ptr, "message": f"expected shape {tuple(shape)}, got {A.shape}"}])
    return A


def _vec(x, n, ptr):
    v = np.array(x, dtype=float).ravel()
    if v.size != n:
        raise ConfigError([{"pointer": ptr, "message": f"expected {n} entries, got {v.size}"}])
    return v


def _seq(x, ptr, rows, cols):
    """Constant matrix or sequence of matrices, validated as ``rows x cols``."""
    arr = np.array(x, dtype=float)
    if arr.ndim == 3:
        for j, M in enumerate(arr):
            if M.shape[0] != rows or (cols is not None and M.shape[1] != cols):
                raise ConfigError([{"pointer": f"{ptr}/{j}", "message": f"expected {rows} x {cols}, got {M.shape}"}])
        return arr
    M = _mat(x, ptr)
    if M.shape[0] != rows or (cols is not None and M.shape[1] != cols):
        raise ConfigError([{"pointer": ptr, "message": f"expected {rows} x {cols or 'p'}, got {M.shape}"}])
    return M


def build_system(cfg, grid=None):
    from .csys import ContinuousLtvSystem
    from .dsys import DiscreteLtvSystem

    s = cfg["system"]
    A0 = np.array(s["A"], dtype=float)
    A0 = A0[0] if A0.ndim == 3 else _mat(s["A"], "/system/A")
    n = A0.shape[0]
    A = _seq(s["A"], "/system/A", n, n)
    B = _seq(s["B"], "/system/B", n, None)
    D = _seq(s["D"], "/system/D", n, None) if "D" in s else None
    if s["kind"] == "discrete":
        try:
            return DiscreteLtvSystem(A, B, D)
        except DimensionError as exc:
            raise ConfigError([{"pointer": "/system", "message": str(exc)}]) from None
    g = int(grid or s.get("grid", 400))
    if "times" in s:
        times = np.array(s["times"], dtype=float)
        m = times.size

        def samples(M, name):
            if M is None:
                return None
            M = np.asarray(M)
            if M.ndim == 2:
                return np.broadcast_to(M, (m,) + M.shape)
            if M.shape[0] != m:
                raise ConfigError([{"pointer": f"/system/{name}", "message": f"need {m} samples, got {M.shape[0]}"}])
            return M

        return ContinuousLtvSystem.from_samples(times, samples(A, "A"), samples(B, "B"), samples(D, "D"), grid=g)
    for name, M in (("A", A), ("B", B), ("D", D)):
        if M is not None and np.ndim(M) == 3:
            raise ConfigError([{"pointer": f"/system/{name}", "message": "time-varying continuous coefficients need /system/times"}])
    T = float(s.get("T", 1.0))
    return ContinuousLtvSystem(A, B, D, T=T, grid=g)


def _require(task, key):
    if key not in task:
        raise ConfigError([{"pointer": f"/task/{key}", "message": f"'{key}' is required for this task"}])
    return task[key]


def _need_kind(cfg, kind, name):
    if cfg["system"]["kind"] != kind:
        raise ConfigError([{"pointer": "/system/kind", "message": f"task {name} needs a {kind} system"}])


def _horizon(cfg, task):
    k = task.get("k", cfg["system"].get("k"))
    if k is None:
        raise ConfigError([{"pointer": "/system/k", "message": "horizon k is required for discrete tasks"}])
    return int(k)


# ---------------------------------------------------------------- tasks


def _task_gramian(cfg, task, opts):
    sysm = build_system(cfg, opts.grid)
    if cfg["system"]["kind"] == "discrete":
        from .dsys import ctrl_gramian, reach_gramian
        from .errors import AssumptionError

        k, i = _horizon(cfg, task), int(task.get("i", 0))
        out = {"k": k, "i": i, "G": reach_gramian(sysm, k, i)}
        try:
            out["Ghat"] = ctrl_gramian(sysm, k, i)
        except AssumptionError as exc:
            out["Ghat"] = None
            out["Ghat_unavailable"] = str(exc)
        return out, EXIT_OK
    from .csys import gramians_c

    t = float(task.get("t", 0.0))
    g = gramians_c(sysm, sysm.T, t)
    return {"T": sysm.T, "t": t, "G": g.G, "Ghat": g.Ghat}, EXIT_OK


def _task_reachable(cfg, task, opts):
    _need_kind(cfg, "discrete", "reachable")
    from .dreach import is_reachable_cov, mean_reachable, reach_set_description

    sysm = build_system(cfg)
    n, k = sysm.n, _horizon(cfg, task)
    S0 = _mat(_require(task, "sigma0"), "/task/sigma0", (n, n))
    ST = _mat(_require(task, "sigma_target"), "/task/sigma_target", (n, n))
    tol = opts.tol if opts.tol is not None else task.get("tol", 1e-8)
    cert = reach_set_description(sysm, S0, k)
    v = is_reachable_cov(sysm, S0, k, ST, tol=tol, certificate=cert)
    P, fixed = cert.fixed_entries()
    out = {
        "k": k,
        "tol": tol,
        "member": v.member,
        "residuals": [{"i": r.i, "kind": r.kind, "residual": r.residual} for r in v.residuals],
        "violations": [{"i": r.i, "kind": r.kind, "residual": r.residual} for r in v.violations],
        "equality_projector": P,
        "equality_target": fixed,
    }
    ok = v.member
    if "mu_target" in task:
        mu0 = _vec(task.get("mu0", np.zeros(n)), n, "/task/mu0")
        muT = _vec(task["mu_target"], n, "/task/mu_target")
        out["mean_reachable"] = mean_reachable(sysm, mu0, k, muT, tol=tol)
        ok = ok and out["mean_reachable"]
    return out, EXIT_OK if ok else EXIT_NEGATIVE


def _task_controllable(cfg, task, opts):
    sysm = build_system(cfg, opts.grid)
    if cfg["system"]["kind"] == "discrete":
        from .dreach import cov_controllable

        k = _horizon(cfg, task)
        v = cov_controllable(sysm, k)
        out = {"k": k, "controllable": v.controllable, "failed": v.failed, "failed_step": v.failed_step,
               "cross_check": v.cross_check}
    else:
        from .csys import cov_controllable_c

        v = cov_controllable_c(sysm)
        out = {"T": sysm.T, "grid": sysm.grid, "controllable": v.controllable, "failed": v.failed,
               "failed_time": v.failed_time, "cross_check": v.cross_check}
    return out, EXIT_OK if v.controllable else EXIT_NEGATIVE


def _solve_sdp(cfg, task, sysm):
    from .sdpsteer import build_steering_sdp, recover_policy, solve_steering_sdp

    n, k = sysm.n, _horizon(cfg, task)
    S0 = _mat(_require(task, "sigma0"), "/task/sigma0", (n, n))
    ST = _mat(_require(task, "sigma_target"), "/task/sigma_target", (n, n))
    W = task.get("weights")
    prob = build_steering_sdp(sysm, S0, ST, k, None if W is None else np.array(W, dtype=float))
    sol = solve_steering_sdp(prob)
    pol = recover_policy(sysm, sol) if sol.status == "optimal" else None
    return prob, sol, pol, S0, ST, k


def _task_steer_sdp(cfg, task, opts):
    _need_kind(cfg, "discrete", "steer-sdp")
    from .dsys import propagate_cov

    sysm = build_system(cfg)
    prob, sol, pol, S0, ST, k = _solve_sdp(cfg, task, sysm)
    out = {"k": k, "status": sol.status, "solver_status": sol.solver_status}
    if task.get("export_problem"):
        out["problem"] = prob.to_dict()
    if pol is None:
        return out, EXIT_NEGATIVE
    final = propagate_cov(sysm, S0, pol, k).final
    out.update({
        "objective": sol.objective,
        "primal_residual": sol.primal_residual,
        "F": pol.F,
        "V": pol.V,
        "sigmas": sol.sigmas,
        "propagated_terminal": final,
        "terminal_error_fro": float(np.linalg.norm(final - ST)),
    })
    return out, EXIT_OK


def _task_steer_riccati(cfg, task, opts):
    _need_kind(cfg, "continuous", "steer-riccati")
    from .csteer import NewtonConfig, steer_min_energy
    from .csys import propagate_cov_c

    sysm = build_system(cfg, opts.grid)
    n = sysm.n
    S0 = _mat(_require(task, "sigma0"), "/task/sigma0", (n, n))
    ST = _mat(_require(task, "sigma_target"), "/task/sigma_target", (n, n))
    ncfg = NewtonConfig(tol=opts.tol if opts.tol is not None else task.get("tol", 1e-9),
                        max_iter=task.get("max_iter", 100))
    law = steer_min_energy(sysm, S0, ST, ncfg)
    final = propagate_cov_c(sysm, S0, law.gain)
    return {
        "pi0": law.riccati.pi0,
        "residual": law.residual,
        "iterations": law.iterations,
        "newton_tol": ncfg.tol,
        "propagated_terminal": final,
        "terminal_error_fro": float(np.linalg.norm(final - ST)),
        "grid": sysm.grid,
    }, EXIT_OK


def _task_riccati(cfg, task, opts):
    _need_kind(cfg, "continuous", "riccati")
    from .csteer import riccati_conditions, riccati_solve

    sysm = build_system(cfg, opts.grid)
    n = sysm.n
    P0 = _mat(_require(task, "pi0"), "/task/pi0", (n, n))
    lam_iii, lam_v = riccati_conditions(sysm, P0)
    times = [float(t) for t in task.get("times", [sysm.T])]
    exists = lam_iii > 0
    out = {"exists": exists, "min_eig_I_minus_GhatPi0": lam_iii, "max_eig_sqrtGhat_Pi0_sqrtGhat": lam_v,
           "times": times}
    if not exists:
        return out, EXIT_NEGATIVE
    out["pi"] = [riccati_solve(sysm, P0, t) for t in times]
    return out, EXIT_OK


def _task_simulate(cfg, task, opts):
    from .sim import ensemble_csv

    seed = opts.seed if opts.seed is not None else task.get("seed", 0)
    N = int(task.get("N", 1000))
    sysm = build_system(cfg, opts.grid)
    n = sysm.n
    mu0 = _vec(task.get("mu0", np.zeros(n)), n, "/task/mu0")
    out = {"seed": seed, "N": N}
    if cfg["system"]["kind"] == "discrete":
        from .dsys import DiscretePolicy, propagate_cov
        from .sdpsteer import mean_feedforward
        from .sim import simulate_discrete

        k = _horizon(cfg, task)
        S0 = _mat(_require(task, "sigma0"), "/task/sigma0", (n, n))
        if "sigma_target" in task:
            _, sol, pol, _, _, _ = _solve_sdp(cfg, task, sysm)
            if pol is None:
                out["status"] = sol.status
                return out, EXIT_NEGATIVE
            out["policy_source"] = "steer-sdp"
        elif "F" in task:
            pol = DiscretePolicy([_mat(f, f"/task/F/{j}", (sysm.p, n)) for j, f in enumerate(task["F"])],
                                 [_mat(v, f"/task/V/{j}", (sysm.p, sysm.p)) for j, v in enumerate(task.get("V", []))]
                                 or [np.zeros((sysm.p, sysm.p))] * len(task["F"]))
            out["policy_source"] = "given"
        else:
            pol = DiscretePolicy.zeros(sysm, k)
            out["policy_source"] = "open-loop"
        ff = None
        if "mu_target" in task:
            ff = mean_feedforward(sysm, pol, mu0, _vec(task["mu_target"], n, "/task/mu_target"), k)
        ens = simulate_discrete(sysm, pol, S0, mu0, N, k, seed, feedforward=ff)
        analytic = propagate_cov(sysm, S0, pol, k).sigmas
    else:
        from .csteer import ContinuousSteeringLaw, RiccatiSolution, steer_min_energy
        from .csys import lyapunov_path
        from .sim import simulate_continuous

        S0 = _mat(_require(task, "sigma0"), "/task/sigma0", (n, n))
        if "sigma_target" in task:
            law = steer_min_energy(sysm, S0, _mat(task["sigma_target"], "/task/sigma_target", (n, n)))
            out["policy_source"] = "steer-riccati"
        elif "pi0" in task:
            law = ContinuousSteeringLaw(RiccatiSolution(sysm, _mat(task["pi0"], "/task/pi0", (n, n))))
            out["policy_source"] = "riccati"
        else:
            law = None
            out["policy_source"] = "open-loop"
        ens = simulate_continuous(sysm, law, S0, mu0, N, seed)
        analytic = lyapunov_path(sysm, S0, None if law is None else law.gain)
        out["times"] = ens.times
    out["steps"] = ens.steps
    out["empirical_means"] = ens.means
    out["empirical_covs"] = ens.covs
    out["analytic_covs"] = np.asarray(analytic)
    csv_text = ensemble_csv(ens, range(min(ens.N, int(task.get("paths_in_csv", 10)))))
    return out, EXIT_OK, csv_text


def _task_ellipse(cfg, task, opts):
    from .sim import ellipse_csv, ellipse_data, ellipse_geometry

    n_sigma = float(task.get("n_sigma", 3.0))
    pts = int(task.get("points", 100))
    items = task.get("ellipses")
    if items is None:
        items = [{"label": "ellipse", "sigma": _require(task, "sigma0"), "mu": task.get("mu0", [0.0, 0.0])}]
    out, polys = [], {}
    for j, e in enumerate(items):
        S = _mat(e["sigma"], f"/task/ellipses/{j}/sigma", (2, 2))
        mu = _vec(e["mu"], 2, f"/task/ellipses/{j}/mu")
        label = e.get("label", f"ellipse{j}")
        poly = ellipse_data(S, mu, n_sigma, pts)
        polys[label] = poly
        out.append({"label": label, **ellipse_geometry(S, mu, n_sigma), "polyline": poly})
    return {"n_sigma": n_sigma, "points": pts, "ellipses": out}, EXIT_OK, ellipse_csv(polys)


_DISPATCH = {
    "gramian": _task_gramian,
    "reachable": _task_reachable,
    "controllable": _task_controllable,
    "steer-sdp": _task_steer_sdp,
    "steer-riccati": _task_steer_riccati,
    "riccati": _task_riccati,
    "simulate": _task_simulate,
    "ellipse": _task_ellipse,
}


def execute(command, cfg, opts):
    """Run one task; returns ``(result dict, exit code, csv text or None)``."""
    task = dict(cfg.get("task", {}))
    name = task.pop("name", command)
    if name != command:
        raise ConfigError([{"pointer": "/task/name", "message": f"config is for task {name!r}, not {command!r}"}])
    if command != "ellipse" and "system" not in cfg:
        raise ConfigError([{"pointer": "/system", "message": "'system' is required"}])
    res = _DISPATCH[command](cfg, task, opts)
    if len(res) == 2:
        return res[0], res[1], None
    return res


# ---------------------------------------------------------------- output


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _fmt_float(v):
    if math.isnan(v) or math.isinf(v):
        return json.dumps(str(v))
    s = format(v, ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent=0, step=1):
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    pad = " " * (indent + step)
    end = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent + step, step)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + step, step) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


def build_parser():
    p = argparse.ArgumentParser(prog="covsteer", description="Covariance reachability, controllability and steering.")
    p.add_argument("--version", action="version", version=f"covsteer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in TASKS:
        s = sub.add_parser(name)
        s.add_argument("-c", "--config", default="-", help="JSON config file ('-' for stdin)")
        s.add_argument("--out", help="write the result document here instead of stdout")
        s.add_argument("--csv", help="write path or ellipse data as CSV")
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("--grid", type=int)
        s.add_argument("--timing", action="store_true", help="include wall-clock timing (breaks byte-identity)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.config == "-":
        raw = _sys.stdin.buffer.read()
    else:
        with open(args.config, "rb") as fh:
            raw = fh.read()
    doc = {
        "tool": "covsteer",
        "version": __version__,
        "task": args.command,
        "input_sha256": hashlib.sha256(raw).hexdigest(),
        "overrides": {"seed": args.seed, "tol": args.tol, "grid": args.grid},
    }
    t0 = time.perf_counter()
    csv_text = None
    try:
        cfg = parse_config(raw.decode("utf-8", errors="strict"))
        result, code, csv_text = execute(args.command, cfg, args)
        doc["result"] = result
        doc["status"] = {EXIT_OK: "ok", EXIT_NEGATIVE: "negative"}[code]
    except UnicodeDecodeError as exc:
        code = EXIT_JSON
        doc["status"] = "error"
        doc["errors"] = [{"pointer": "", "message": f"input is not UTF-8: {exc}"}]
    except ConfigError as exc:
        code = exc.code
        doc["status"] = "error"
        doc["errors"] = exc.errors
    except DimensionError as exc:
        code = EXIT_SCHEMA
        doc["status"] = "error"
        doc["errors"] = [{"pointer": "", "message": str(exc), "type": type(exc).__name__}]
    except CovsteerError as exc:
        code = EXIT_NUMERIC
        doc["status"] = "error"
        diag = {k: v for k, v in vars(exc).items() if not k.startswith("_")}
        doc["errors"] = [{"pointer": "", "message": str(exc), "type": type(exc).__name__, "details": diag}]
    except ValueError as exc:  # ragged arrays and similar malformed numeric input
        code = EXIT_SCHEMA
        doc["status"] = "error"
        doc["errors"] = [{"pointer": "", "message": str(exc)}]
    if args.timing:
        doc["timing_seconds"] = time.perf_counter() - t0
    doc["exit_code"] = code
    text = dumps(_plain(doc)) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)
    if args.csv and csv_text is not None:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
