#!/usr/bin/env python3
"""Offline oracle for the weighted group-lasso objective.

Generates a small 3-condition Poisson instance, solves

    min_theta  sum_cells T*exp(x.theta) - M*(x.theta) + k * sum_g w_g ||theta_g||_2

with a general-purpose conic solver, and writes the instance together with the
optimal objective to tests/data/group_lasso_instance.json. The C++ test reads
that file; rerun this script only to regenerate the fixture.
"""
import argparse
import json

import cvxpy as cp
import numpy as np

D = 3          # conditions
M_COV = 2      # covariates, k = M_COV + 1
K = M_COV + 1
GROUPS = D + 1


def indicator(row, group):
    own = row >> (D - 1)
    u = row & ((1 << (D - 1)) - 1)
    if group == 0:
        return 1.0
    if group == 1:
        return float(own)
    bit = D - 2 - (group - 2)
    return float((u >> bit) & 1)


def design(row, z):
    return np.concatenate([indicator(row, g) * z for g in range(GROUPS)])


def make_instance(seed):
    rng = np.random.default_rng(seed)
    truth = rng.normal(0.0, 0.4, size=(D, GROUPS, K))
    truth[:, 0, 0] = np.log(0.5)
    truth[0, 3, :] = 0.0   # a few absent edges
    truth[2, 2, :] = 0.0
    strata = []
    for _ in range(6):
        z = np.concatenate([[1.0], rng.integers(0, 2, size=M_COV).astype(float)])
        exposure = rng.uniform(0.0, 4.0, size=(1 << D, D))
        exposure[rng.uniform(size=exposure.shape) < 0.3] = 0.0
        counts = np.zeros_like(exposure)
        for i in range(D):
            for r in range(1 << D):
                if exposure[r, i] > 0:
                    rate = np.exp(design(r, z) @ truth[i].reshape(-1))
                    counts[r, i] = rng.poisson(rate * exposure[r, i])
        strata.append({"z": z.tolist(), "exposure": exposure.tolist(), "counts": counts.tolist()})
    return strata


def child_cells(strata, child):
    xs, ts, ms = [], [], []
    for s in strata:
        z = np.array(s["z"])
        for r in range(1 << D):
            t = s["exposure"][r][child]
            if t > 0:
                xs.append(design(r, z))
                ts.append(t)
                ms.append(s["counts"][r][child])
    return np.array(xs), np.array(ts), np.array(ms)


def solve(strata, weights):
    total = 0.0
    solution = []
    for i in range(D):
        x, t, m = child_cells(strata, i)
        theta = cp.Variable(GROUPS * K)
        eta = x @ theta
        pen = sum(weights[i][g] * cp.norm(theta[g * K:(g + 1) * K], 2) for g in range(GROUPS) if weights[i][g] > 0)
        obj = cp.sum(cp.multiply(t, cp.exp(eta))) - m @ eta + K * pen
        prob = cp.Problem(cp.Minimize(obj))
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12, max_iter=500)
        total += prob.value
        solution.append(theta.value.tolist())
    return total, solution


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--lam", type=float, default=3.0)
    ap.add_argument("-o", "--output", default="tests/data/group_lasso_instance.json")
    args = ap.parse_args()

    strata = make_instance(args.seed)
    _, mle = solve(strata, np.zeros((D, GROUPS)))
    weights = np.zeros((D, GROUPS))
    for i in range(D):
        th = np.array(mle[i]).reshape(GROUPS, K)
        for g in range(1, GROUPS):
            weights[i, g] = args.lam / max(np.linalg.norm(th[g]), 1e-8)
    objective, solution = solve(strata, weights)
    with open(args.output, "w") as fh:
        json.dump({
            "conditions": D,
            "covariates": M_COV,
            "lambda": args.lam,
            "strata": strata,
            "weights": weights.tolist(),
            "objective": objective,
            "solution": solution,
        }, fh, indent=1)
        fh.write("\n")
    print(f"objective {objective:.12f}")
    for i, th in enumerate(solution):
        norms = np.linalg.norm(np.array(th).reshape(GROUPS, K), axis=1)
        print(i, np.round(norms, 6))


if __name__ == "__main__":
    main()
