"""Walk the functional inequalities along one blow-up run.

Runs the oscillatory scenario (n=1, mu=0.5, nu^2=0.25, delta=-0.75) at two
grids, prints F, G, L, H and the Hoelder ratio at a few times, then the
margin of every inequality in the chain.

    python demos/inequality_chain.py [--dx 0.01] [--eps 0.2]
"""
import argparse

import numpy as np

from blowuplab.functionals import compute_trace
from blowuplab.solver import SolverConfig, make_initial_data, run
from blowuplab.special import ModelParams, TestFunctionParams
from blowuplab.verifier import check_proof_chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dx", type=float, default=0.01)
    ap.add_argument("--eps", type=float, default=0.2)
    args = ap.parse_args()

    model = ModelParams(1, 0.5, 0.25, 2.0)
    params = TestFunctionParams.build(model, 1.0)  # eta = eta_1
    print(f"delta = {model.delta:g}, d = {params.d:g}, eta_1 = {params.eta:.4g}, "
          f"theta = {params.theta:g}")

    traces = []
    for k in range(2):
        cfg = SolverConfig(dx=args.dx, t_max=200.0).refined(k)
        traj = run(make_initial_data(model, args.eps), model, cfg, params)
        traces.append(compute_trace(traj, params))
        print(f"dx = {cfg.dx:g}: blow-up detected at t = {traj.outcome.t_detect:.4f} "
              f"({traj.outcome.criterion})")

    tr = traces[-1]
    print(f"\nC0 = {tr.C0:.4g}, C1 = {tr.C1:.4g}; L(1) = eps C0/24 = {tr.epsilon * tr.C0 / 24:.4g}")
    print(f"{'t':>8} {'F':>11} {'G':>11} {'L':>11} {'H':>11} {'hoelder':>9}")
    for t in np.linspace(0, tr.times[-1], 9):
        i = int(np.searchsorted(tr.times, t))
        i = min(i, tr.times.size - 1)
        L = tr.L[i] if tr.L is not None else np.nan
        H = tr.H[i] if tr.H is not None else np.nan
        print(f"{tr.times[i]:8.3f} {tr.F[i]:11.4g} {tr.G[i]:11.4g} {L:11.4g} {H:11.4g} "
              f"{tr.holder_ratio[i]:9.4g}")

    print("\ninequality chain (margin >= 0 means the inequality holds):")
    for r in check_proof_chain(traces, params, model):
        print(f"  {r.check_id:<28} {r.status:<5} {r.margin:11.4g}  {r.refinement_trend}")


if __name__ == "__main__":
    main()
