"""Dense cross-checks of the operator identities on random instances.

Each check pits the sparse/iterative implementation path against a dense
LAPACK-backed computation on instances small enough that the dense side
is unquestionably trustworthy.  The battery backs the oracle-suite
command; the individual checks are also driven directly by the test
suite.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .formcore import (OperatorBundle, build_operator_bundle, dense_operator_norm,
                       dual_norm_V, factorization_check, neumann_margin, norm_H,
                       norm_V, solve_variational)
from .linsolve import SingularMatrix
from .policy import DEFAULT_POLICY, NumericPolicy
from .randinst import TAGS, RandomInstance, gen_instance

__all__ = [
    "check_factorization",
    "check_lax_milgram",
    "check_c_bound",
    "check_apriori",
    "check_neumann",
    "check_kernel",
    "run_oracle_battery",
]


def _dense_inv_norm_H(bundle: OperatorBundle) -> float:
    K = np.linalg.inv(np.eye(bundle.n) + bundle.cv_dense())
    return dense_operator_norm(K, bundle.space.gram_H, bundle.space.gram_H)


def check_factorization(inst: RandomInstance, bundle: OperatorBundle) -> float:
    """Relative defect of system = A1 (I + C^V); also enforces kernel
    equality on singular instances.  Returns the defect."""
    rep = factorization_check(bundle, inst.sp)
    if rep.kernel_angle is not None and rep.kernel_angle > 1e-8:
        raise AssertionError(f"kernel angle {rep.kernel_angle:.3e}")
    return rep.relative_defect


def check_lax_milgram(inst: RandomInstance) -> tuple[float, float]:
    """Dense V->V* norms of T and T^-1 against the stored constants.

    Returns (||T|| - C_t, ||T^-1|| - 1/c_t); both must be <= 1e-8.
    """
    A1 = inst.fs.A1.toarray()
    gv = inst.sp.gram_V.toarray()
    # ||T||: V -> V*, the V* Gram is gram_V^{-1}
    t_norm = np.sqrt(scipy.linalg.eigh(
        _herm(A1.conj().T @ np.linalg.solve(gv, A1)), gv,
        subset_by_index=[inst.n - 1, inst.n - 1], eigvals_only=True)[0])
    inv_norm = 1.0 / np.sqrt(scipy.linalg.eigh(
        _herm(A1.conj().T @ np.linalg.solve(gv, A1)), gv,
        subset_by_index=[0, 0], eigvals_only=True)[0])
    return float(t_norm - inst.fs.C_t), float(inv_norm - 1.0 / inst.fs.c_t)


def check_c_bound(inst: RandomInstance, bundle: OperatorBundle,
                  n_vectors: int = 50, seed: int = 0) -> float:
    """Worst slack of ||C x||_V <= (M/c) ||x||_H over random x (<= 1e-8 ok)."""
    rng = np.random.default_rng(seed)
    bound = inst.fs.M_tm / inst.fs.c_t
    worst = -np.inf
    for _ in range(n_vectors):
        x = rng.standard_normal(inst.n) + 1j * rng.standard_normal(inst.n)
        lhs = norm_V(bundle.apply_cv(x), inst.sp)
        rhs = bound * norm_H(x, inst.sp)
        worst = max(worst, lhs - rhs)
    return float(worst)


def check_apriori(inst: RandomInstance, bundle: OperatorBundle,
                  n_rhs: int = 50, seed: int = 0) -> float:
    """Worst relative slack of the solution bound over random functionals.

    ||u||_V <= (1/c_t) ||(I+C^V)^{-1}||_V ||phi||_V* must hold with
    relative slack <= 1e-8.
    """
    rng = np.random.default_rng(seed)
    inv_norm_V = bundle.inv_id_plus_cv_norm_V()
    worst = -np.inf
    for _ in range(n_rhs):
        phi = rng.standard_normal(inst.n) + 1j * rng.standard_normal(inst.n)
        sol = solve_variational(bundle, phi)
        bound = inv_norm_V / inst.fs.c_t * dual_norm_V(phi, inst.sp)
        worst = max(worst, norm_V(sol.u, inst.sp) / bound - 1.0)
    return float(worst)


def check_neumann(inst: RandomInstance, bundle: OperatorBundle) -> float | None:
    """When the margin certifies, dense ||(I+C)^{-1}||_H minus the
    geometric-series bound (<= 1e-8 ok); None when the margin is >= 1."""
    margin = neumann_margin(inst.fs, inst.sp)
    if margin >= 1.0:
        return None
    actual = _dense_inv_norm_H(bundle)
    return float(actual - 1.0 / (1.0 - margin))


def check_kernel(inst: RandomInstance, bundle: OperatorBundle) -> float | None:
    rep = factorization_check(bundle, inst.sp)
    return rep.kernel_angle


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def run_oracle_battery(n_instances: int = 200, max_dim: int = 32, seed: int = 0,
                       policy: NumericPolicy = DEFAULT_POLICY) -> dict:
    """Run every identity check over a mixed battery of random instances.

    Returns a JSON-ready report: per-check worst numbers, counts, and a
    list of failures (empty iff 'pass' is true).
    """
    rng = np.random.default_rng(seed)
    failures: list[dict] = []
    worst = {"factorization_defect": 0.0, "t_norm_slack": -np.inf,
             "t_inv_slack": -np.inf, "c_bound_slack": -np.inf,
             "apriori_slack": -np.inf, "neumann_slack": -np.inf,
             "kernel_angle": 0.0}
    counts = {"instances": 0, "neumann_certified": 0, "singular": 0}

    for i in range(n_instances):
        tag = TAGS[i % len(TAGS)]
        n = int(rng.integers(2, max_dim + 1))
        inst = gen_instance(n, tag, seed=seed + 1000 * i, policy=policy)
        counts["instances"] += 1
        singular = tag == "singular-system"
        try:
            bundle = build_operator_bundle(inst.fs, inst.sp, policy=policy,
                                           require_invertible=False)
            defect = check_factorization(inst, bundle)
            worst["factorization_defect"] = max(worst["factorization_defect"], defect)
            if defect > 1e-10:
                failures.append({"instance": i, "check": "factorization", "value": defect})

            s1, s2 = check_lax_milgram(inst)
            worst["t_norm_slack"] = max(worst["t_norm_slack"], s1)
            worst["t_inv_slack"] = max(worst["t_inv_slack"], s2)
            if s1 > 1e-8 or s2 > 1e-8:
                failures.append({"instance": i, "check": "lax_milgram", "value": max(s1, s2)})

            s3 = check_c_bound(inst, bundle, seed=seed + i)
            worst["c_bound_slack"] = max(worst["c_bound_slack"], s3)
            if s3 > 1e-8:
                failures.append({"instance": i, "check": "c_bound", "value": s3})

            if singular:
                counts["singular"] += 1
                angle = check_kernel(inst, bundle)
                if angle is not None:
                    worst["kernel_angle"] = max(worst["kernel_angle"], angle)
                    if angle > 1e-8:
                        failures.append({"instance": i, "check": "kernel", "value": angle})
            else:
                s4 = check_apriori(inst, bundle, seed=seed + i)
                worst["apriori_slack"] = max(worst["apriori_slack"], s4)
                if s4 > 1e-8:
                    failures.append({"instance": i, "check": "apriori", "value": s4})
                s5 = check_neumann(inst, bundle)
                if s5 is not None:
                    counts["neumann_certified"] += 1
                    worst["neumann_slack"] = max(worst["neumann_slack"], s5)
                    if s5 > 1e-8:
                        failures.append({"instance": i, "check": "neumann", "value": s5})
        except (AssertionError, SingularMatrix) as exc:
            failures.append({"instance": i, "check": "exception", "value": str(exc)})

    worst = {k: (None if v == -np.inf else float(v)) for k, v in worst.items()}
    return {"counts": counts, "worst": worst, "failures": failures,
            "pass": not failures, "seed": seed, "n_instances": n_instances,
            "max_dim": max_dim}
