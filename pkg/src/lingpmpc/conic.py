"""Dense interior-point solver for small convex conic programs.

Problem class:

    minimize    0.5 z'Pz + q'z
    subject to  A_eq z = b_eq
                lb <= z <= ub                  (entries may be +-inf)
                ||F_i z + g_i|| <= c_i'z + d0_i   (second-order cones)

The solver is a primal-dual path-following method with Nesterov-Todd
scaling and Mehrotra correction over the product of a nonnegative orthant
(box bounds and affine inequality rows) and second-order cones.  Equalities
stay explicit in the KKT system, which is factorized densely each iteration.
Problem sizes are expected to be at most a few hundred variables, so no
sparsity is exploited.

Cones whose ``F`` has zero rows degenerate to affine inequalities
``0 <= c'z + d0`` and are folded into the orthant block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .exceptions import InputContractError


@dataclass(frozen=True)
class SocConstraint:
    """Second-order cone constraint ||F z + g|| <= c'z + d0."""

    F: np.ndarray
    g: np.ndarray
    c: np.ndarray
    d0: float

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if F.size == 0:
            F = F.reshape(0, c.size)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d0", float(self.d0))
        if self.F.shape[0] != self.g.size:
            raise InputContractError("cone F rows and g length must match")
        if self.F.shape[1] != self.c.size:
            raise InputContractError("cone F columns and c length must match")

    def margin(self, z: np.ndarray) -> float:
        """c'z + d0 - ||Fz + g||; non-negative iff satisfied."""
        return float(self.c @ z + self.d0 - np.linalg.norm(self.F @ z + self.g))


@dataclass
class ConicProgram:
    """Convex subproblem data.  ``lb``/``ub`` default to unbounded."""

    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    cones: list[SocConstraint] = field(default_factory=list)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        d = self.q.size
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if self.P.shape != (d, d):
            raise InputContractError(f"P must be ({d}, {d})")
        scale = max(1.0, float(np.max(np.abs(self.P))) if d else 1.0)
        if np.max(np.abs(self.P - self.P.T), initial=0.0) > 1e-8 * scale:
            raise InputContractError("P must be symmetric")
        if d and float(np.linalg.eigvalsh(self.P)[0]) < -1e-9 * scale:
            raise InputContractError("P must be positive semidefinite")
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
            if self.A_eq.shape != (self.b_eq.size, d):
                raise InputContractError("A_eq/b_eq dimensions inconsistent")
        elif self.b_eq is not None:
            raise InputContractError("b_eq given without A_eq")
        self.lb = (
            np.full(d, -np.inf) if self.lb is None
            else np.asarray(self.lb, dtype=float).ravel()
        )
        self.ub = (
            np.full(d, np.inf) if self.ub is None
            else np.asarray(self.ub, dtype=float).ravel()
        )
        if self.lb.size != d or self.ub.size != d:
            raise InputContractError("lb/ub must have length d")
        if np.any(self.lb > self.ub):
            raise InputContractError("lb <= ub must hold componentwise")
        for cone in self.cones:
            if cone.c.size != d:
                raise InputContractError("cone dimension mismatch with d")

    @property
    def dim(self) -> int:
        return self.q.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z)

    def max_violation(self, z: np.ndarray) -> float:
        """Largest constraint violation at z (0 when feasible)."""
        viol = 0.0
        if self.A_eq is not None:
            viol = float(np.max(np.abs(self.A_eq @ z - self.b_eq), initial=0.0))
        viol = max(viol, float(np.max(self.lb - z, initial=0.0)))
        viol = max(viol, float(np.max(z - self.ub, initial=0.0)))
        for cone in self.cones:
            viol = max(viol, -min(0.0, cone.margin(z)))
        return viol

    def to_json(self) -> str:
        """Debug dump with dense row-major matrices."""
        doc = {
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "A_eq": None if self.A_eq is None else self.A_eq.tolist(),
            "b_eq": None if self.A_eq is None else self.b_eq.tolist(),
            "lb": self.lb.tolist(),
            "ub": self.ub.tolist(),
            "cones": [
                {"F": c.F.tolist(), "g": c.g.tolist(), "c": c.c.tolist(), "d0": c.d0}
                for c in self.cones
            ],
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "ConicProgram":
        doc = json.loads(text)
        cones = [
            SocConstraint(np.asarray(c["F"]), np.asarray(c["g"]),
                          np.asarray(c["c"]), c["d0"])
            for c in doc["cones"]
        ]
        return ConicProgram(
            P=np.asarray(doc["P"], dtype=float),
            q=np.asarray(doc["q"], dtype=float),
            A_eq=None if doc["A_eq"] is None else np.asarray(doc["A_eq"], dtype=float),
            b_eq=None if doc["A_eq"] is None else np.asarray(doc["b_eq"], dtype=float),
            lb=np.asarray(doc["lb"], dtype=float),
            ub=np.asarray(doc["ub"], dtype=float),
            cones=cones,
        )


@dataclass(frozen=True)
class SolverSettings:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float


@dataclass(frozen=True)
class ConicSolution:
    z: np.ndarray
    objective: float
    status: str               # "optimal" | "max_iter" | "infeasible"
    residuals: Residuals
    iterations: int = 0


# ---------------------------------------------------------------------------
# Cone geometry over the product (orthant of size m_orth) x (SOC blocks).
# ---------------------------------------------------------------------------

class _ConeSpace:
    def __init__(self, m_orth: int, soc_dims: list[int]):
        self.m_orth = m_orth
        self.soc_dims = soc_dims
        self.dim = m_orth + sum(soc_dims)
        self.degree = m_orth + len(soc_dims)
        self._slices = []
        start = m_orth
        for dsz in soc_dims:
            self._slices.append(slice(start, start + dsz))
            start += dsz

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.m_orth] = 1.0
        for sl in self._slices:
            e[sl.start] = 1.0
        return e

    def margin(self, v: np.ndarray) -> float:
        vals = [np.min(v[: self.m_orth], initial=np.inf)]
        for sl in self._slices:
            blk = v[sl]
            vals.append(blk[0] - np.linalg.norm(blk[1:]))
        return float(min(vals))

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        """sup {alpha >= 0 : v + alpha dv in cone} for strictly interior v."""
        alpha = np.inf
        vo, do = v[: self.m_orth], dv[: self.m_orth]
        neg = do < 0
        if np.any(neg):
            alpha = float(np.min(vo[neg] / -do[neg]))
        for sl in self._slices:
            b, d = v[sl], dv[sl]
            a2 = d[0] ** 2 - d[1:] @ d[1:]
            a1 = 2.0 * (b[0] * d[0] - b[1:] @ d[1:])
            a0 = b[0] ** 2 - b[1:] @ b[1:]
            root = np.inf
            if abs(a2) < 1e-14:
                if a1 < 0:
                    root = -a0 / a1
            else:
                disc = a1 * a1 - 4.0 * a2 * a0
                if disc >= 0:
                    sq = np.sqrt(disc)
                    for r in ((-a1 - sq) / (2 * a2), (-a1 + sq) / (2 * a2)):
                        if r > 1e-16:
                            root = min(root, r)
            if d[0] < 0:
                root = min(root, b[0] / -d[0])
            alpha = min(alpha, root)
        return alpha

    def jmul(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.m_orth] = u[: self.m_orth] * v[: self.m_orth]
        for sl in self._slices:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1 : sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        return out

    def jdiv(self, lmbda: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Solve lmbda o v = b for v."""
        out = np.empty(self.dim)
        out[: self.m_orth] = b[: self.m_orth] / lmbda[: self.m_orth]
        for sl in self._slices:
            lam, rhs = lmbda[sl], b[sl]
            det = lam[0] ** 2 - lam[1:] @ lam[1:]
            v0 = (lam[0] * rhs[0] - lam[1:] @ rhs[1:]) / det
            out[sl.start] = v0
            out[sl.start + 1 : sl.stop] = (rhs[1:] - v0 * lam[1:]) / lam[0]
        return out


class _NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda (W symmetric)."""

    def __init__(self, cone: _ConeSpace, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        mo = cone.m_orth
        self.w_orth = np.sqrt(s[:mo] / z[:mo])
        self.blocks = []      # (eta, H, Hinv) per SOC block
        for sl in cone._slices:
            sb, zb = s[sl], z[sl]
            a2 = sb[0] ** 2 - sb[1:] @ sb[1:]
            b2 = zb[0] ** 2 - zb[1:] @ zb[1:]
            if a2 <= 0 or b2 <= 0:
                raise FloatingPointError("iterate left the cone interior")
            a, b = np.sqrt(a2), np.sqrt(b2)
            sbar, zbar = sb / a, zb / b
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = sbar.copy()
            wbar[0] += zbar[0]
            wbar[1:] -= zbar[1:]
            wbar /= 2.0 * gamma
            v = wbar.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * (wbar[0] + 1.0))
            H = 2.0 * np.outer(v, v)
            H[0, 0] -= 1.0
            H[1:, 1:] += np.eye(sl.stop - sl.start - 1)
            Hinv = H.copy()
            Hinv[0, 1:] *= -1.0
            Hinv[1:, 0] *= -1.0
            self.blocks.append((np.sqrt(a / b), H, Hinv))
        self.lmbda = self.mul_w(z)

    def mul_w(self, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.cone.dim)
        mo = self.cone.m_orth
        out[:mo] = self.w_orth * v[:mo]
        for sl, (eta, H, _) in zip(self.cone._slices, self.blocks):
            out[sl] = eta * (H @ v[sl])
        return out

    def mul_winv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.cone.dim)
        mo = self.cone.m_orth
        out[:mo] = v[:mo] / self.w_orth
        for sl, (eta, _, Hinv) in zip(self.cone._slices, self.blocks):
            out[sl] = (Hinv @ v[sl]) / eta
        return out

    def w2_matrix(self) -> np.ndarray:
        mo = self.cone.m_orth
        W2 = np.zeros((self.cone.dim, self.cone.dim))
        W2[np.arange(mo), np.arange(mo)] = self.w_orth**2
        for sl, (eta, H, _) in zip(self.cone._slices, self.blocks):
            W2[sl, sl] = (eta * eta) * (H @ H)
        return W2


# ---------------------------------------------------------------------------
# Standard-form assembly.
# ---------------------------------------------------------------------------

def _standard_form(prog: ConicProgram):
    """Build (G, h, cone) so feasibility reads G z + s = h, s in cone."""
    d = prog.dim
    rows, hs = [], []
    for i in range(d):
        if np.isfinite(prog.ub[i]):
            row = np.zeros(d)
            row[i] = 1.0
            rows.append(row)
            hs.append(prog.ub[i])
    for i in range(d):
        if np.isfinite(prog.lb[i]):
            row = np.zeros(d)
            row[i] = -1.0
            rows.append(row)
            hs.append(-prog.lb[i])
    for cone in prog.cones:
        if cone.F.shape[0] == 0:
            rows.append(-cone.c)
            hs.append(cone.d0)
    m_orth = len(rows)
    soc_dims = []
    for cone in prog.cones:
        if cone.F.shape[0] == 0:
            continue
        rows.append(-cone.c)
        hs.append(cone.d0)
        rows.extend(-cone.F)
        hs.extend(cone.g)
        soc_dims.append(1 + cone.F.shape[0])
    G = np.asarray(rows, dtype=float).reshape(len(rows), d)
    h = np.asarray(hs, dtype=float)
    return G, h, _ConeSpace(m_orth, soc_dims)


def _solve_unconstrained(prog: ConicProgram, settings: SolverSettings) -> ConicSolution:
    """Equality-constrained (or fully unconstrained) QP via one KKT solve."""
    d = prog.dim
    p = 0 if prog.A_eq is None else prog.b_eq.size
    M = np.zeros((d + p, d + p))
    M[:d, :d] = prog.P
    rhs = np.concatenate([-prog.q, np.zeros(p)])
    if p:
        M[:d, d:] = prog.A_eq.T
        M[d:, :d] = prog.A_eq
        rhs[d:] = prog.b_eq
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    z = sol[:d]
    rd = prog.P @ z + prog.q
    if p:
        rd = rd + prog.A_eq.T @ sol[d:]
        rp = float(np.linalg.norm(prog.A_eq @ z - prog.b_eq))
        rp /= max(1.0, float(np.linalg.norm(prog.b_eq)))
    else:
        rp = 0.0
    dres = float(np.linalg.norm(rd)) / max(1.0, float(np.linalg.norm(prog.q)))
    ok = rp <= settings.tol_feas and dres <= max(settings.tol_feas, 1e-9)
    return ConicSolution(
        z=z,
        objective=prog.objective(z),
        status="optimal" if ok else "max_iter",
        residuals=Residuals(primal=rp, dual=dres, gap=0.0),
        iterations=1,
    )


def solve(
    prog: ConicProgram,
    settings: SolverSettings | None = None,
    x_init: np.ndarray | None = None,
) -> ConicSolution:
    """Solve the conic program to the requested KKT tolerances."""
    settings = settings or SolverSettings()
    G, h, cone = _standard_form(prog)
    if cone.dim == 0:
        return _solve_unconstrained(prog, settings)

    d = prog.dim
    p = 0 if prog.A_eq is None else prog.b_eq.size
    m = cone.dim
    A = prog.A_eq if p else np.zeros((0, d))
    b = prog.b_eq if p else np.zeros(0)
    nK = d + p + m
    sl_x, sl_y, sl_z = slice(0, d), slice(d, d + p), slice(d + p, nK)

    M = np.zeros((nK, nK))
    M[sl_x, sl_x] = prog.P
    M[sl_x, sl_y] = A.T
    M[sl_y, sl_x] = A
    M[sl_x, sl_z] = G.T
    M[sl_z, sl_x] = G

    e = cone.identity()
    norm_b = max(1.0, float(np.linalg.norm(b)))
    norm_h = max(1.0, float(np.linalg.norm(h)))
    norm_q = max(1.0, float(np.linalg.norm(prog.q)))

    def factor(W2: np.ndarray):
        M[sl_z, sl_z] = -W2
        reg = 0.0
        base = M
        while True:
            try:
                lu = lu_factor(base, check_finite=False)
                if np.any(~np.isfinite(lu[0])):
                    raise ValueError
                break
            except (ValueError, np.linalg.LinAlgError):
                reg = 1e-10 if reg == 0.0 else reg * 100.0
                if reg > 1e-5:
                    return None
                base = M.copy()
                base[sl_x, sl_x] += reg * np.eye(d)
                base[sl_y, sl_y] -= reg * np.eye(p)
                base[sl_z, sl_z] -= reg * np.eye(m)

        def kkt_solve(rhs: np.ndarray) -> np.ndarray:
            sol = lu_solve(lu, rhs, check_finite=False)
            # one round of iterative refinement against the unregularized KKT
            sol += lu_solve(lu, rhs - M @ sol, check_finite=False)
            return sol

        return kkt_solve

    # -- initialization: one solve with identity scaling, shift into the cone
    init_solver = factor(np.eye(m))
    if init_solver is None:
        raise InputContractError("KKT system is structurally singular")
    rhs0 = np.concatenate([-prog.q, b, h])
    sol0 = init_solver(rhs0)
    x = x_init.astype(float).copy() if x_init is not None else sol0[sl_x].copy()
    y = sol0[sl_y].copy()
    zhat = sol0[sl_z].copy()
    s = h - G @ x if x_init is not None else -zhat.copy()
    t = cone.margin(s)
    if t < 1e-8:
        s = s + (1.0 - t) * e
    z = zhat.copy()
    t = cone.margin(z)
    if t < 1e-8:
        z = z + (1.0 - t) * e

    best = None
    pres_hist = []
    stalls = 0

    for it in range(settings.max_iter):
        rx = prog.P @ x + prog.q + G.T @ z + A.T @ y
        ry = A @ x - b
        rz = G @ x + s - h
        gap = float(s @ z)
        pcost = prog.objective(x)
        pres = max(
            float(np.linalg.norm(ry)) / norm_b,
            float(np.linalg.norm(rz)) / norm_h,
        )
        dres = float(np.linalg.norm(rx)) / norm_q
        relgap = gap / max(1.0, abs(pcost))
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x.copy(), pres, dres, relgap, it)
        pres_hist.append(pres)

        if pres <= settings.tol_feas and dres <= settings.tol_feas and relgap <= settings.tol_gap:
            return ConicSolution(
                z=x, objective=pcost, status="optimal",
                residuals=Residuals(pres, dres, relgap), iterations=it,
            )

        # primal infeasibility heuristic: complementarity converged but the
        # primal residual stopped improving
        if it >= 50 and pres > 1e-6 and pres > 0.9 * pres_hist[it - 25]:
            return ConicSolution(
                z=best[1], objective=prog.objective(best[1]), status="infeasible",
                residuals=Residuals(best[2], best[3], best[4]), iterations=it,
            )

        try:
            scaling = _NTScaling(cone, s, z)
        except FloatingPointError:
            break
        kkt = factor(scaling.w2_matrix())
        if kkt is None:
            break
        lmbda = scaling.lmbda
        mu = gap / cone.degree

        def direction(bs: np.ndarray):
            v = cone.jdiv(lmbda, bs)
            rhs = np.concatenate([-rx, -ry, -rz - scaling.mul_w(v)])
            sol = kkt(rhs)
            ux, uy, uz = sol[sl_x], sol[sl_y], sol[sl_z]
            us = scaling.mul_w(v - scaling.mul_w(uz))
            return ux, uy, uz, us

        # predictor
        bs_aff = -cone.jmul(lmbda, lmbda)
        dxa, dya, dza, dsa = direction(bs_aff)
        if not np.all(np.isfinite(dxa)):
            break
        alpha_aff = min(1.0, cone.max_step(s, dsa), cone.max_step(z, dza))
        gap_aff = float((s + alpha_aff * dsa) @ (z + alpha_aff * dza))
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3

        # corrector
        bs = (
            bs_aff
            - cone.jmul(scaling.mul_winv(dsa), scaling.mul_w(dza))
            + sigma * mu * e
        )
        dx, dy, dz, ds = direction(bs)
        if not np.all(np.isfinite(dx)):
            break
        alpha = 0.99 * min(cone.max_step(s, ds), cone.max_step(z, dz))
        alpha = min(1.0, alpha)
        if alpha < 1e-10:
            stalls += 1
            if stalls >= 2:
                break
        else:
            stalls = 0
        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds

    score, xb, pres, dres, relgap, _ = best
    status = "infeasible" if pres > 1e-6 else "max_iter"
    return ConicSolution(
        z=xb, objective=prog.objective(xb), status=status,
        residuals=Residuals(pres, dres, relgap), iterations=len(pres_hist),
    )
