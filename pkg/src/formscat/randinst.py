"""Random finite-dimensional instances with controlled constants.

The generated space pairs and form sets exercise every operator identity
densely: coercive forms (real part exactly the V Gram), inf-sup-only
forms with a prescribed smallest generalized singular value, and
rank-deficient systems with a known kernel.  Dimensions are capped at 64
so the dense oracles backing the tests stay sub-second.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .formcore import FormSet, SpacePair, form_norm, inf_sup_constant, make_space_pair
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = ["TAGS", "RandomInstance", "gen_instance"]

TAGS = ("coercive", "inf-sup-only", "singular-system")

MAX_DIM = 64


@dataclass(eq=False)
class RandomInstance:
    n: int
    tag: str
    seed: int
    sp: SpacePair
    fs: FormSet
    sigma_min: float | None = None     # inf-sup-only: prescribed smallest singular value
    target_margin: float | None = None  # Neumann margin the coupling matrix was scaled to


def _crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(_crandn(rng, n, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _hermitian_sqrt(G: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (G + G.conj().T))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T


def gen_instance(n: int, tag: str, seed: int,
                 sigma_min: float | None = None,
                 margin: float | None = None,
                 policy: NumericPolicy = DEFAULT_POLICY) -> RandomInstance:
    """Deterministic instance from (n, tag, seed).

    sigma_min (inf-sup-only tag) prescribes the smallest generalized
    singular value of the principal form; margin scales the coupling
    matrix so that gamma*M/c hits the given Neumann margin exactly
    (default: drawn in [0.15, 1.8], mixing certifiable and
    non-certifiable instances).
    """
    if not 2 <= n <= MAX_DIM:
        raise ValueError(f"need 2 <= n <= {MAX_DIM}, got {n}")
    if tag not in TAGS:
        raise ValueError(f"tag must be one of {TAGS}, got {tag!r}")
    rng = np.random.default_rng(seed)

    B1 = _crandn(rng, n, n)
    B2 = _crandn(rng, n, n)
    gram_V = B1.conj().T @ B1 + n * np.eye(n)
    gram_H = B2.conj().T @ B2 + n * np.eye(n)
    space = make_space_pair(gram_V, gram_H, policy=policy)

    coercivity_c = None
    if tag == "inf-sup-only":
        sigma_min = 0.3 if sigma_min is None else float(sigma_min)
        if sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        sig = np.empty(n)
        sig[0] = sigma_min
        sig[1:] = rng.uniform(1.2 * sigma_min, sigma_min + 2.0, n - 1)
        F = _hermitian_sqrt(gram_V)
        A1 = F @ (_unitary(rng, n) * sig) @ _unitary(rng, n) @ F
    else:
        # coercive recipe: Re(v^H A1 v) = v^H gram_V v exactly
        N = _crandn(rng, n, n)
        skew = 0.5 * (N - N.conj().T)
        skew *= 0.5 * np.linalg.norm(gram_V) / max(np.linalg.norm(skew), 1e-300)
        A1 = gram_V + skew
        coercivity_c = 1.0

    if tag == "singular-system":
        z = _crandn(rng, n)
        z /= np.linalg.norm(z)
        Cmat = -A1 @ np.outer(z, z.conj())
        target_margin = None
    else:
        if margin is None:
            margin = float(rng.uniform(0.15, 1.8))
        if margin <= 0:
            raise ValueError("margin must be positive")
        C0 = _crandn(rng, n, n)
        c_for_scale = coercivity_c if coercivity_c is not None else sigma_min
        # dense form norm of C0 between H and V (construction-side scaling only)
        P = C0.conj().T @ np.linalg.solve(gram_V, C0)
        m0 = np.sqrt(scipy.linalg.eigh(0.5 * (P + P.conj().T), gram_H,
                                       eigvals_only=True)[-1])
        Cmat = C0 * (margin * c_for_scale / (space.gamma * m0))
        target_margin = margin

    c_t = coercivity_c if coercivity_c is not None else inf_sup_constant(A1, space, policy=policy)
    fs = FormSet(
        A1=_tocsr(A1),
        Cmat=_tocsr(Cmat),
        c_t=float(c_t),
        C_t=form_norm(A1, space.gram_V, space.gram_V, policy=policy),
        M_tm=form_norm(Cmat, space.gram_H, space.gram_V, policy=policy),
    )
    return RandomInstance(n=n, tag=tag, seed=seed, sp=space, fs=fs,
                          sigma_min=sigma_min if tag == "inf-sup-only" else None,
                          target_margin=target_margin)


def _tocsr(M: np.ndarray):
    import scipy.sparse as sp
    return sp.csr_matrix(np.asarray(M, dtype=np.complex128))
