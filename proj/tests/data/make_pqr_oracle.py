"""Reference objectives for small penalized quantile regression problems.

Each instance minimizes sum_i rho_tau(y_i - x_i'b) + (lam / 2) b'Pb with a
generic conic solver (Clarabel through cvxpy) at tight tolerances. The
instances and optimal objective values are written to pqr_oracle.json.
"""
import json
import pathlib

import cvxpy as cp
import numpy as np

HERE = pathlib.Path(__file__).resolve().parent


def difference_penalty(p):
    order = 2 if p >= 3 else 1
    d = np.diff(np.eye(p), n=order, axis=0)
    return d.T @ d


def solve(x, y, tau, lam, pen):
    n, p = x.shape
    b = cp.Variable(p)
    r = y - x @ b
    loss = cp.sum(cp.maximum(tau * r, (tau - 1) * r))
    obj = loss + (lam / 2) * cp.quad_form(b, cp.psd_wrap(pen)) if lam > 0 else loss
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12, max_iter=500)
    if prob.status != cp.OPTIMAL:
        raise RuntimeError(prob.status)
    beta = b.value
    res = y - x @ beta
    exact = float(np.sum(np.maximum(tau * res, (tau - 1) * res)) + 0.5 * lam * beta @ pen @ beta)
    return exact, beta


def main():
    rng = np.random.default_rng(4242)
    cases = []
    for k in range(100):
        n = int(rng.integers(5, 31))
        p = int(rng.integers(1, 6))
        tau = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9, float(rng.uniform(0.05, 0.95))]))
        lam = float(k % 2)
        x = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))]) if p > 1 else np.ones((n, 1))
        if k % 5 == 0:
            # ties in the design
            x = x[rng.integers(0, max(n // 3, 1), n)]
        y = x @ rng.normal(size=p) + rng.standard_t(3, size=n)
        pen = difference_penalty(p)
        value, beta = solve(x, y, tau, lam, pen)
        cases.append({"tau": tau, "lambda": lam, "x": x.tolist(), "y": y.tolist(), "penalty": pen.tolist(),
                      "objective": value, "beta": beta.tolist()})
    with open(HERE / "pqr_oracle.json", "w") as f:
        json.dump({"cases": cases}, f)


if __name__ == "__main__":
    main()
