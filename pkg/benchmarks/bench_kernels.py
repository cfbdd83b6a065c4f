"""Compiled vs pure-numpy kernels.

Times the tape sweeps on the pusher-slider dynamics tape (batched over the
elements of a 50-element grid) and the staged KKT factorization on a
block-tridiagonal matrix of the size the transcription produces.  Both paths are
importable in one process: the ``*_nb`` kernels are always compiled, and the
module-level dispatch only picks the default.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mpcc_opt.autodiff import kernels
from mpcc_opt.autodiff.derivatives import _identity_seeds
from mpcc_opt.ipsolver.kkt import KKTSystem
from mpcc_opt.problems.pusher import pusher_goal_ocp
from mpcc_opt.transcription import build_nlp, initial_guess_vector, make_mode


def best_of(f, repeat):
    f()  # warm-up (and compilation for the numba path)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        times.append(time.perf_counter() - t)
    return min(times)


def tape_cases(n_e=50):
    defn = pusher_goal_ocp(n_e=n_e)
    nlp, layout = build_nlp(defn, make_mode("per-pair-barrier"))
    z = initial_guess_vector(defn, layout)
    block = max(nlp.constraint_blocks, key=lambda b: b.tape.n_nodes * b.n_inst)
    tape = block.tape
    X = np.ascontiguousarray(block.points(z).T)
    W = np.ones((tape.n_out, X.shape[1]))
    args = (tape.op, tape.a0, tape.a1, tape.val)
    cases = {}
    for name, fwd, tan, rev, sec in (
        ("numba", kernels.forward_nb, kernels.tangent_nb, kernels.reverse_nb, kernels.second_order_nb),
        ("numpy", kernels.forward_np, kernels.tangent_np, kernels.reverse_np, kernels.second_order_np),
    ):
        V = fwd(*args, X)
        Vd = tan(*args, V, _identity_seeds(tape.n_in, X.shape[1]))
        cases[name] = {
            "forward": lambda fwd=fwd: fwd(*args, X),
            "tangent": lambda tan=tan, V=V: tan(*args, V, _identity_seeds(tape.n_in, X.shape[1])),
            "reverse": lambda rev=rev, V=V: rev(*args, V, tape.outputs, W, tape.n_in),
            "second_order": lambda sec=sec, V=V, Vd=Vd: sec(*args, V, Vd, tape.outputs, W, tape.n_in),
        }
    return tape, X.shape[1], cases


def kkt_case(n_stage=50, n_var=14, n_con=10, n_border=2, seed=0):
    """Random quasi-definite KKT: per stage a PD Hessian block and a Jacobian block
    coupled to the previous stage, plus a few border unknowns."""
    rng = np.random.default_rng(seed)
    s = n_var + n_con
    n = n_stage * s + n_border
    stage = np.concatenate([np.repeat(np.arange(n_stage), s), np.full(n_border, -1)])
    K = np.zeros((n, n))
    for b in range(n_stage):
        o = b * s
        M = rng.standard_normal((n_var, n_var))
        K[o:o + n_var, o:o + n_var] = M @ M.T + n_var * np.eye(n_var)
        J = rng.standard_normal((n_con, n_var))
        K[o + n_var:o + s, o:o + n_var] = J
        K[o:o + n_var, o + n_var:o + s] = J.T
        K[o + n_var:o + s, o + n_var:o + s] = -1e-8 * np.eye(n_con)
        if b:
            P = rng.standard_normal((n_con, n_var))
            K[o + n_var:o + s, o - s:o - s + n_var] = P
            K[o - s:o - s + n_var, o + n_var:o + s] = P.T
    Bv = rng.standard_normal((n_border, n - n_border)) * (rng.random((n_border, n - n_border)) < 0.05)
    K[n - n_border:, :n - n_border] = Bv
    K[:n - n_border, n - n_border:] = Bv.T
    K[n - n_border:, n - n_border:] = np.eye(n_border)
    rows, cols = np.nonzero(K)
    return stage, rows, cols, K[rows, cols], rng.standard_normal(n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    tape, batch, cases = tape_cases()
    print(f"tape {tape.name!r}: {tape.n_nodes} nodes, {tape.n_in} inputs, batch {batch}")
    print(f"{'kernel':<14}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for k in cases["numba"]:
        a = best_of(cases["numba"][k], args.repeat)
        b = best_of(cases["numpy"][k], args.repeat)
        print(f"{k:<14}{1e3 * a:>12.3f}{1e3 * b:>12.3f}{b / a:>10.1f}")

    stage, rows, cols, vals, rhs = kkt_case()
    print(f"\nKKT: n = {stage.size}, {vals.size} nonzeros, {stage.max() + 1} stages")
    systems = {name: KKTSystem(stage, rows, cols, use_numba=flag) for name, flag in (("numba", True), ("numpy", False))}
    sol = {}
    res = {}
    for name, kkt in systems.items():
        def run(kkt=kkt):
            kkt.factor(vals)
            return kkt.solve(rhs)

        res[name] = best_of(run, args.repeat)
        sol[name] = run()
    print(f"{'factor+solve':<14}{1e3 * res['numba']:>12.3f}{1e3 * res['numpy']:>12.3f}"
          f"{res['numpy'] / res['numba']:>10.1f}")
    print(f"max |x_numba - x_numpy| = {np.abs(sol['numba'] - sol['numpy']).max():.2e}")


if __name__ == "__main__":
    main()
