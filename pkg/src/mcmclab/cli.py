"""Command-line front end.

Every command writes one JSON document (or a CSV time series with
``--format csv``) that includes a ``config_echo`` block with all effective
parameters. Feeding that block back through ``--config`` reproduces the run.

Exit codes: 0 success, 2 bad input, 3 certificate failure, 4 minorization
failure, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from math import comb
from pathlib import Path

import numpy as np

from . import __version__
from . import contkernel as ck
from . import lyapunov as ly
from . import markov_core as mc
from . import models as md
from . import sampler as sa
from . import spectral as sp
from .errors import CertificateInvalid, McmcLabError, NotIrreducible, ValidationError
from .io import dumps, read_matrix, read_vector
from .rng import RngStream

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 5


class UsageError(ValidationError):
    pass


# -- commands --------------------------------------------------------------------

def cmd_analyze(args) -> dict:
    P = read_matrix(args.matrix)
    rep = mc.classify(P)
    out = {
        "n": P.n,
        "classes": rep.classes,
        "closed": rep.closed_flags,
        "periods": rep.periods,
        "period": rep.period if rep.irreducible else None,
        "irreducible": rep.irreducible,
        "aperiodic": rep.aperiodic,
        "reversible_alpha": None if rep.reversible_vector is None else rep.reversible_vector.tolist(),
    }
    if rep.irreducible:
        pi = mc.invariant_distribution(P)
        spec = sp.full_spectrum(P)
        out.update(spec.to_dict())
        out["pi"] = pi.tolist()
        out["residual_l1"] = float(np.abs(pi @ P.entries - pi).sum())
    else:
        vals = sp.eigenvalues(P)
        out.update({
            "eigenvalues": [[float(z.real), float(z.imag)] for z in vals],
            "pi": None, "rho": None, "gap": None, "residual_l1": None,
        })
    return out


def _certify_chain(args):
    if args.matrix:
        P = read_matrix(args.matrix)
        H = None
    elif args.model == "ehrenfest-m":
        P = md.magnetization_chain(args.N, args.laziness)
        H = None
    elif args.model == "ising":
        if args.N > 12:
            raise UsageError("the full Ising chain is built for N <= 12 only")
        model = md.IsingModel(args.N, args.beta, args.h)
        P = sa.glauber_matrix(model, sa.AcceptanceRule(args.rule, model.q))
        H = md.ising_energies(model)
    else:
        raise UsageError("give --matrix or --model")
    if args.V == "m2":
        if H is not None:
            V = md.all_configs(args.N).sum(axis=1).astype(float) ** 2
        else:
            N = P.n - 1
            V = md.magnetization_values(N) ** 2
    elif args.V == "energy-gap":
        if H is None:
            raise UsageError("--V energy-gap needs --model ising")
        V = H - H.min()
    else:
        V = read_vector(args.V)
        if V.shape != (P.n,):
            raise UsageError(f"V has {V.size} entries, chain has {P.n} states")
    return P, V


def cmd_certify(args) -> dict:
    P, V = _certify_chain(args)
    if (args.c is None) != (args.d is None):
        raise UsageError("give both --c and --d, or neither")
    if args.c is not None:
        base = ly.check_drift(P, V, args.c, args.d)
    else:
        base = ly.fit_geometric_drift(P, V, args.quantile)
    R = args.R
    if R is None:
        # Twice the smallest admissible level for the T-step constants.
        dT = ly.accelerate_drift(base, args.T)
        R = 4.0 * dT.d / dT.c
    pipe = ly.certify(P, V, R, args.T, args.alpha0, args.gamma0, drift=base)
    audit = ly.contraction_audit(pipe.chain, pipe.drift, pipe.minor, pipe.cert,
                                 args.trials, RngStream(args.seed), raise_on_fail=False)
    out = pipe.to_dict()
    out["base_drift"] = {"c": base.c, "d": base.d}
    out["T"] = args.T
    out["audit"] = {
        "pairs": audit.pairs,
        "worst_random": audit.worst_random,
        "worst_point_pair": audit.worst_point_pair,
        "gamma_bar": audit.gamma_bar,
        "passed": audit.passed,
    }
    if not audit.passed:
        raise _Failed(out, CertificateInvalid("contraction audit failed"))
    return out


class _Failed(Exception):
    """Carries a partial report together with the error that ends the run."""

    def __init__(self, report, error):
        super().__init__(str(error))
        self.report, self.error = report, error


def _start_config(kind: str, N: int) -> np.ndarray:
    return {"plus": md.plus_config, "minus": md.minus_config,
            "alternating": md.alternating_config}[kind](N)


def cmd_ising(args):
    model = md.IsingModel(args.n, args.beta, args.h, args.q)
    rule = sa.AcceptanceRule(args.rule, model.q)
    count = model.N <= 16
    csv_out = args.format == "csv"
    run = sa.glauber_run(model, _start_config(args.start, model.N), args.steps, rule,
                         RngStream(args.seed), count_states=count, trace=True)
    if csv_out:
        rows = [("step", "magnetization", "energy")]
        idx = np.arange(args.every - 1, args.steps, args.every)
        rows += [(int(t + 1), int(run.mtrace[t]), repr(float(run.htrace[t]))) for t in idx]
        return rows
    out = {
        "steps": args.steps,
        "final_magnetization": run.magnetization,
        "final_energy": run.energy,
        "mean_magnetization": float(run.mtrace.mean()) if args.steps else 0.0,
        "mean_energy": float(run.htrace.mean()) if args.steps else 0.0,
    }
    if count:
        law = md.gibbs_law(model)
        X = md.all_configs(model.N)
        l1 = sa.empirical_l1(run.counts, law)
        out["exact_mean_magnetization"] = float(law @ X.sum(axis=1))
        out["exact_mean_energy"] = float(law @ md.ising_energies(model))
        out["empirical_vs_exact_l1"] = l1
    return out


def cmd_ehrenfest(args):
    P = md.ehrenfest_matrix(args.n)
    path = sa.simulate_chain(P, args.start, args.steps, RngStream(args.seed))
    if args.format == "csv":
        rows = [("step", "state")]
        rows += [(int(t + 1), int(path[t])) for t in range(args.every - 1, args.steps, args.every)]
        return rows
    law = np.array([comb(args.n, k) for k in range(args.n + 1)], dtype=float) / 2.0 ** args.n
    freq = np.bincount(path, minlength=args.n + 1) / max(1, args.steps)
    returns = np.nonzero(path == args.start)[0]
    gaps = np.diff(np.concatenate(([-1], returns)))
    return {
        "steps": args.steps,
        "occupation": freq.tolist(),
        "invariant": law.tolist(),
        "occupation_l1": float(np.abs(freq - law).sum()),
        "exact_mean_return_time": float(1.0 / law[args.start]),
        "empirical_mean_return_time": float(gaps.mean()) if gaps.size else None,
        "returns": int(returns.size),
    }


def _interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"interval must be 'lo,hi', got {text!r}") from exc
    return lo, hi


def cmd_ar1(args):
    kernel = ck.parse_kernel(args.kernel)
    stream = RngStream(args.seed)
    out: dict = {"kernel": kernel.name, "params": kernel.params}
    if kernel.name == "ar1":
        model = ck.Ar1Model(kernel.params["a"], kernel.params["sigma"])
        grid = ck.discretize(kernel, args.L or model.default_halfwidth(), args.grid)
        drift = ck.ar1_drift(model)
        minor = ck.ar1_minorization(model, args.R)
        cert = ly.hairer_mattingly_constants(drift, minor)
        inv = ck.ar1_invariant(model)
        dens = ck.grid_invariant_density(grid)
        if args.format == "csv":
            rows = [("x", "grid_density", "invariant_density")]
            rows += [(repr(float(x)), repr(float(p)), repr(float(q)))
                     for x, p, q in zip(grid.nodes, dens, inv.pdf(grid.nodes))]
            return rows
        sim = ck.ar1_simulate(model, args.steps, rng=stream.substream(0))
        out.update({
            "drift": {"c": drift.c, "d": drift.d,
                      "grid_generator_error": ck.ar1_generator_error(model, grid)},
            "minorization": {"R": minor.R, "K": list(minor.K), "alpha": minor.alpha,
                             "alpha_closed_form": minor.alpha_closed_form},
            "constants": cert.to_dict(),
            "invariant_variance": {
                "closed_form": inv.variance,
                "grid": float(np.sum(dens * grid.weights * grid.nodes ** 2)),
                "simulation": float(sim.var()) if sim.size > 1 else None,
            },
            "grid": {"M": grid.M, "L": grid.L, "max_defect": float(grid.defects.max()),
                     "max_core_defect": float(grid.defects[grid.core()].max()),
                     "invariant_density_error": float(np.max(np.abs(dens - inv.pdf(grid.nodes))))},
        })
    elif args.format == "csv":
        raise UsageError("csv output for this kernel is not available")
    A = _interval(args.A)
    rep = ck.harris_diagnostics(kernel, args.x0, A, args.cap, args.replicas, stream.substream(1))
    out["harris"] = {
        "A": list(A), "x0": args.x0, "cap": rep.cap, "replicas": rep.replicas,
        "hit_fraction": rep.hit_fraction, "mean_hitting_estimate": rep.mean_hitting_estimate,
        "censored": rep.censored, "censored_fraction": rep.censored_fraction,
    }
    return out


def cmd_mc_volume(args):
    ineqs = []
    if args.inequalities:
        ineqs = sa.parse_inequalities(Path(args.inequalities).read_text())
    if args.ball is not None:
        ineqs.append(sa.ball([0.5] * args.dim, args.ball))
    rep = sa.mc_volume(args.dim, ineqs, args.samples, RngStream(args.seed), args.eps, args.delta)
    out = rep.to_dict()
    out["eps"] = args.eps
    return out


def cmd_textgen(args):
    try:
        text = Path(args.corpus).read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read corpus: {exc}") from exc
    model = md.corpus_fit(text, args.alphabet, args.smoothing)
    generated = md.corpus_generate(model, args.length, RngStream(args.seed))
    return {"length": len(generated), "alphabet_size": len(model.alphabet), "text": generated}


# -- parser ------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, csv_ok: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv") if csv_ok else ("json",), default="json",
                   help="output format" + (" (csv gives a time series)" if csv_ok else ""))
    p.add_argument("--config", default=None,
                   help="JSON file with a config_echo block (or its contents) to reuse")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcmclab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="structure, invariant law and spectrum of a matrix")
    p.add_argument("--matrix", required=True, help="CSV or JSON {n, rows} matrix file")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("certify", help="drift + minorization + explicit convergence constants")
    p.add_argument("--matrix", default=None, help="CSV or JSON matrix file")
    p.add_argument("--model", choices=("ehrenfest-m", "ising"), default=None)
    p.add_argument("--N", type=int, default=16, help="spins for --model (default 16)")
    p.add_argument("--laziness", type=float, default=0.0, help="holding probability for ehrenfest-m")
    p.add_argument("--beta", type=float, default=1.0, help="inverse temperature for ising")
    p.add_argument("--h", type=float, default=0.5, help="field for ising")
    p.add_argument("--rule", choices=("metropolis", "heatbath"), default="metropolis")
    p.add_argument("--V", default="m2", help="m2, energy-gap or a vector file")
    p.add_argument("--c", type=float, default=None, help="declared drift rate (checked, not fitted)")
    p.add_argument("--d", type=float, default=None, help="declared drift constant")
    p.add_argument("--quantile", type=float, default=0.05, help="core fraction used by the drift fit")
    p.add_argument("--R", type=float, default=None, help="level of K = {V < R}")
    p.add_argument("--T", type=int, default=1, help="acceleration (use P^T)")
    p.add_argument("--alpha0", type=float, default=None)
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--trials", type=int, default=200, help="random pairs in the contraction audit")
    _common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("ising", help="Glauber dynamics for the Ising model on a circle")
    p.add_argument("--n", type=int, default=8, help="number of spins")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.5)
    p.add_argument("--q", type=float, default=None, help="flip rate (default 1/n)")
    p.add_argument("--rule", choices=("metropolis", "heatbath"), default="metropolis")
    p.add_argument("--steps", type=int, default=100000)
    p.add_argument("--start", choices=("plus", "minus", "alternating"), default="plus")
    p.add_argument("--every", type=int, default=1, help="CSV stride")
    _common(p, csv_ok=True)
    p.set_defaults(func=cmd_ising)

    p = sub.add_parser("ehrenfest", help="simulate the Ehrenfest urn")
    p.add_argument("--n", type=int, default=10, help="number of balls")
    p.add_argument("--steps", type=int, default=100000)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--every", type=int, default=1, help="CSV stride")
    _common(p, csv_ok=True)
    p.set_defaults(func=cmd_ehrenfest)

    p = sub.add_parser("ar1", help="continuous kernels: AR(1) certificates, grid and Harris checks")
    p.add_argument("--kernel", default="ar1:a=0.5,sigma=1",
                   help='preset, e.g. "ar1:a=0.5,sigma=1", "gaussian-walk:sigma=1", '
                        '"noisy-map:logistic,r=3.7,sigma=0.1"')
    p.add_argument("--grid", type=int, default=513, help="grid nodes")
    p.add_argument("--L", type=float, default=None, help="grid half-width (default 8 invariant std)")
    p.add_argument("--R", type=float, default=None, help="minorization level (default 4 sigma^2/(1-a^2))")
    p.add_argument("--steps", type=int, default=100000, help="simulation length")
    p.add_argument("--replicas", type=int, default=1000, help="replicas for Harris diagnostics")
    p.add_argument("--cap", type=int, default=1000, help="step cap for Harris diagnostics")
    p.add_argument("--x0", type=float, default=3.0)
    p.add_argument("--A", default="-1,1", help="target interval lo,hi")
    _common(p, csv_ok=True)
    p.set_defaults(func=cmd_ar1)

    p = sub.add_parser("mc-volume", help="hit-or-miss volume in the unit cube")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--ball", type=float, default=None, help="radius of a ball centred in the cube")
    p.add_argument("--inequalities", default=None, help="JSON list of affine/ball constraints")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--eps", type=float, default=1e-3, help="failure probability of the interval")
    p.add_argument("--delta", type=float, default=None, help="target precision for the planner")
    _common(p)
    p.set_defaults(func=cmd_mc_volume)

    p = sub.add_parser("textgen", help="fit a letter chain on a corpus and generate text")
    p.add_argument("--corpus", required=True, help="UTF-8 text file")
    p.add_argument("--length", type=int, default=500)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--alphabet", default=md.DEFAULT_ALPHABET,
                   help="preset name (latin60, lower27) or explicit symbols")
    _common(p)
    p.set_defaults(func=cmd_textgen)
    return parser


COMMANDS = {"analyze", "certify", "ising", "ehrenfest", "ar1", "mc-volume", "textgen"}


def _apply_config(parser: argparse.ArgumentParser, argv, args):
    """Re-parse with values from a config_echo block as defaults."""
    doc = json.loads(Path(args.config).read_text())
    doc = doc.get("config_echo", doc)
    if doc.get("command", args.command) != args.command:
        raise UsageError(f"config is for {doc['command']!r}, not {args.command!r}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    sub.set_defaults(**{k: v for k, v in doc.items() if k in known and k not in ("config", "out")})
    return parser.parse_args(argv)


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out")}


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(rows) -> str:
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _error_doc(exc: BaseException, args=None, report=None) -> dict:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc),
                     "exit_code": getattr(exc, "exit_code", EXIT_INPUT)}}
    if report is not None:
        doc["report"] = report
    if args is not None:
        doc["config_echo"] = _echo(args)
    return doc


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        result = args.func(args)
        if isinstance(result, list):
            _emit(_csv_text(result), args.out)
        else:
            result["config_echo"] = _echo(args)
            _emit(dumps(result), args.out)
        return EXIT_OK
    except _Failed as failed:
        _emit(dumps(_error_doc(failed.error, args, failed.report)), args.out)
        return failed.error.exit_code
    except McmcLabError as exc:
        _emit(dumps(_error_doc(exc, args)), args.out)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        _emit(dumps(_error_doc(exc, args)), args.out)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        doc = _error_doc(exc, args)
        doc["error"]["exit_code"] = EXIT_NUMERIC
        _emit(dumps(doc), args.out)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
