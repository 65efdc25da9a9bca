"""Depth refinement from cross-view correspondences.

Given pairs linking source pixels to target-view positions, the solver
adjusts per-pixel depth so that transformed source points reproject onto
their targets, with a gradient regularizer that keeps the depth surface
close to the initial estimate. The problem is sparse nonlinear least
squares: each reprojection residual depends on a single depth unknown and
each regularizer residual on at most two, solved with Levenberg-Marquardt.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import (
    InsufficientCorrespondencesError,
    InvalidConfigError,
    InvalidInputError,
    SolverDivergedError,
)
from .geometry import CameraIntrinsics, DepthMap, RigidTransform


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched point pairs (source pixel, target pixel, confidence in [0,1])."""

    source: np.ndarray      # (N, 2) u,v in the source image
    target: np.ndarray      # (N, 2) i,j in the target image
    confidence: np.ndarray  # (N,)

    def __post_init__(self):
        s = np.asarray(self.source, dtype=np.float64)
        t = np.asarray(self.target, dtype=np.float64)
        c = np.asarray(self.confidence, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != 2 or t.shape != s.shape or c.shape != (s.shape[0],):
            raise InvalidInputError("correspondence arrays must be (N,2),(N,2),(N,)")
        if c.size and (c.min() < 0 or c.max() > 1):
            raise InvalidInputError("confidences must lie in [0, 1]")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "confidence", c)

    def __len__(self) -> int:
        return self.source.shape[0]

    def filtered(self, confidence_floor: float) -> "CorrespondenceSet":
        keep = self.confidence >= confidence_floor
        return CorrespondenceSet(self.source[keep], self.target[keep], self.confidence[keep])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("u,v,i,j,confidence\n")
        for k in range(len(self)):
            buf.write(f"{self.source[k,0]:.6f},{self.source[k,1]:.6f},"
                      f"{self.target[k,0]:.6f},{self.target[k,1]:.6f},{self.confidence[k]:.6f}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "CorrespondenceSet":
        rows = [line.split(",") for line in text.strip().splitlines()[1:] if line.strip()]
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 5)
        return CorrespondenceSet(arr[:, 0:2], arr[:, 2:4], arr[:, 4])


@dataclass(frozen=True)
class SolverConfig:
    """Levenberg-Marquardt settings for :func:`solve_depth`."""

    regularization: float = 1.0          # lambda on the depth-gradient prior
    max_iterations: int = 50
    initial_damping_scale: float = 1e-3  # mu0 = scale * max(diag JtJ)
    damping_increase: float = 2.0        # on step rejection
    damping_decrease: float = 1.0 / 3.0  # on step acceptance
    cost_tolerance: float = 1e-8         # relative cost decrease that ends iteration
    gradient_tolerance: float = 1e-10
    # Pairs below the floor are dropped before solving; nominal outliers
    # carry confidence <= 0.1 and must not survive the default.
    confidence_floor: float = 0.2
    max_rejections: int = 12

    def __post_init__(self):
        if self.regularization < 0:
            raise InvalidConfigError("regularization must be >= 0")
        if self.cost_tolerance <= 0 or self.gradient_tolerance <= 0:
            raise InvalidConfigError("tolerances must be positive")


@dataclass
class SolverReport:
    """Per-iteration record of the optimization."""

    costs: list = field(default_factory=list)            # accepted total costs, incl. initial
    reprojection_rmse: list = field(default_factory=list)  # pixels, per accepted iterate
    regularizer_values: list = field(default_factory=list)
    damping_trace: list = field(default_factory=list)    # (iteration, mu, accepted)
    termination: str = ""
    iterations: int = 0
    excluded_pairs: int = 0

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "initial_cost": self.costs[0] if self.costs else None,
            "final_cost": self.costs[-1] if self.costs else None,
            "initial_rmse_px": self.reprojection_rmse[0] if self.reprojection_rmse else None,
            "final_rmse_px": self.reprojection_rmse[-1] if self.reprojection_rmse else None,
            "termination": self.termination,
            "excluded_pairs": self.excluded_pairs,
        }


def compose_correspondences(warp_pairs: CorrespondenceSet, match_pairs: CorrespondenceSet,
                            confidence_floor: float = 0.05,
                            snap_radius: float = 1.0) -> CorrespondenceSet:
    """Chain source<->intermediate pairs with intermediate<->target pairs.

    ``warp_pairs.target`` and ``match_pairs.source`` live in the same
    intermediate frame; chaining snaps through the nearest intermediate
    pixel (within ``snap_radius``) and multiplies confidences.
    """
    if len(warp_pairs) == 0 or len(match_pairs) == 0:
        raise InsufficientCorrespondencesError("cannot compose empty correspondence sets")

    lookup: dict[tuple[int, int], int] = {}
    keys = np.round(match_pairs.source).astype(np.int64)
    for idx in range(len(match_pairs)):
        lookup.setdefault((keys[idx, 0], keys[idx, 1]), idx)

    src, tgt, conf = [], [], []
    bridge = np.round(warp_pairs.target).astype(np.int64)
    for k in range(len(warp_pairs)):
        idx = lookup.get((bridge[k, 0], bridge[k, 1]))
        if idx is None:
            continue
        if np.max(np.abs(match_pairs.source[idx] - warp_pairs.target[k])) > snap_radius:
            continue
        c = warp_pairs.confidence[k] * match_pairs.confidence[idx]
        if c < confidence_floor:
            continue
        src.append(warp_pairs.source[k])
        tgt.append(match_pairs.target[idx])
        conf.append(c)
    if not src:
        raise InsufficientCorrespondencesError("no correspondence pairs survived composition")
    return CorrespondenceSet(np.asarray(src), np.asarray(tgt), np.asarray(conf))


class _DepthProblem:
    """Residual/Jacobian assembly for depth optimization over mask pixels."""

    def __init__(self, reference: DepthMap, transform: RigidTransform,
                 intrinsics: CameraIntrinsics, pairs: CorrespondenceSet,
                 mask: np.ndarray, regularization: float):
        self.cam = intrinsics
        self.ref = reference.values.astype(np.float64)
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != self.ref.shape:
            raise InvalidInputError("mask and depth dimensions must agree")
        self.lam = float(regularization)

        h, w = self.ref.shape
        mv, mu = np.nonzero(self.mask & np.isfinite(self.ref))
        self.unknown_index = np.full((h, w), -1, dtype=np.int64)
        self.unknown_index[mv, mu] = np.arange(mv.size)
        self.n_unknowns = mv.size
        self.unknown_pixels = (mv, mu)

        # Snap pair sources to integer pixels; each residual then touches one unknown.
        su = np.clip(np.round(pairs.source[:, 0]).astype(np.int64), 0, w - 1)
        sv = np.clip(np.round(pairs.source[:, 1]).astype(np.int64), 0, h - 1)
        usable = self.unknown_index[sv, su] >= 0
        self.pair_unknown = self.unknown_index[sv[usable], su[usable]]
        self.pair_target = pairs.target[usable]
        self.pair_weight = np.sqrt(pairs.confidence[usable])
        dirs = np.stack([(su[usable] - self.cam.cx) / self.cam.fx,
                         (sv[usable] - self.cam.cy) / self.cam.fy,
                         np.ones(int(usable.sum()))], axis=1)
        A, b = transform._affine()
        self.ray = dirs @ A.T          # dq/dD per pair
        self.offset = b
        self.n_pairs = self.pair_unknown.size

        # Depth-gradient residuals are normalized by the median depth so the
        # prior acts on relative (scale-free) gradients and lambda stays unitless.
        ref_masked = self.ref[self.mask & np.isfinite(self.ref)]
        z_med = float(np.median(ref_masked)) if ref_masked.size else 1.0
        self.reg_scale = np.sqrt(self.lam) / max(z_med, 1e-12) if self.lam > 0 else 0.0

        self._build_regularizer()

    def _build_regularizer(self):
        """Forward-difference gradient rows: residual = k*((D[q]-D[p]) - (ref[q]-ref[p]))."""
        rows_p, rows_q, consts, fixed_vals = [], [], [], []
        if self.lam > 0:
            h, w = self.ref.shape
            mv, mu = self.unknown_pixels
            for dv, du in ((0, 1), (1, 0)):
                qv, qu = mv + dv, mu + du
                inside = (qv < h) & (qu < w)
                pv, pu = mv[inside], mu[inside]
                qv, qu = qv[inside], qu[inside]
                finite = np.isfinite(self.ref[qv, qu])
                pv, pu, qv, qu = pv[finite], pu[finite], qv[finite], qu[finite]
                rows_p.append(self.unknown_index[pv, pu])
                rows_q.append(self.unknown_index[qv, qu])  # -1 when neighbor is fixed
                consts.append(self.ref[qv, qu] - self.ref[pv, pu])
                fixed_vals.append(self.ref[qv, qu])
        if rows_p:
            self.reg_p = np.concatenate(rows_p)
            self.reg_q = np.concatenate(rows_q)
            self.reg_const = np.concatenate(consts)
            self.reg_fixed_val = np.concatenate(fixed_vals)
        else:
            self.reg_p = np.zeros(0, dtype=np.int64)
            self.reg_q = np.zeros(0, dtype=np.int64)
            self.reg_const = np.zeros(0)
            self.reg_fixed_val = np.zeros(0)
        self.n_reg = self.reg_p.size

    def depth_vector(self, depth: DepthMap) -> np.ndarray:
        mv, mu = self.unknown_pixels
        return depth.values.astype(np.float64)[mv, mu]

    def with_depth_vector(self, base: DepthMap, x: np.ndarray) -> DepthMap:
        values = base.values.astype(np.float64).copy()
        mv, mu = self.unknown_pixels
        values[mv, mu] = x
        return base.with_values(values)

    def residuals(self, x: np.ndarray):
        """Stacked residual vector [reprojection; regularizer] and excluded-pair mask."""
        r = np.zeros(2 * self.n_pairs + self.n_reg)
        excluded = np.zeros(self.n_pairs, dtype=bool)
        if self.n_pairs:
            d = x[self.pair_unknown]
            q = self.ray * d[:, None] + self.offset[None, :]
            z = q[:, 2]
            excluded = z <= 1e-9
            z_safe = np.where(excluded, 1.0, z)
            u = self.cam.fx * q[:, 0] / z_safe + self.cam.cx
            v = self.cam.fy * q[:, 1] / z_safe + self.cam.cy
            res = np.stack([u, v], axis=1) - self.pair_target
            res *= self.pair_weight[:, None]
            res[excluded] = 0.0
            r[: 2 * self.n_pairs] = res.ravel()
        if self.n_reg:
            dp = x[self.reg_p]
            # Neighbors outside the unknown set stay fixed at their reference value.
            dq = np.where(self.reg_q >= 0, x[np.maximum(self.reg_q, 0)], self.reg_fixed_val)
            r[2 * self.n_pairs:] = self.reg_scale * ((dq - dp) - self.reg_const)
        return r, excluded

    def jacobian(self, x: np.ndarray) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        if self.n_pairs:
            d = x[self.pair_unknown]
            q = self.ray * d[:, None] + self.offset[None, :]
            z = q[:, 2]
            ok = z > 1e-9
            z_safe = np.where(ok, z, 1.0)
            du_dd = self.cam.fx * (self.ray[:, 0] * z_safe - q[:, 0] * self.ray[:, 2]) / (z_safe ** 2)
            dv_dd = self.cam.fy * (self.ray[:, 1] * z_safe - q[:, 1] * self.ray[:, 2]) / (z_safe ** 2)
            du_dd = np.where(ok, du_dd * self.pair_weight, 0.0)
            dv_dd = np.where(ok, dv_dd * self.pair_weight, 0.0)
            idx = np.arange(self.n_pairs)
            rows.append(2 * idx)
            cols.append(self.pair_unknown)
            vals.append(du_dd)
            rows.append(2 * idx + 1)
            cols.append(self.pair_unknown)
            vals.append(dv_dd)
        if self.n_reg:
            base = 2 * self.n_pairs + np.arange(self.n_reg)
            rows.append(base)
            cols.append(self.reg_p)
            vals.append(np.full(self.n_reg, -self.reg_scale))
            free = self.reg_q >= 0
            rows.append(base[free])
            cols.append(self.reg_q[free])
            vals.append(np.full(int(free.sum()), self.reg_scale))
        if not rows:
            return sparse.csr_matrix((0, self.n_unknowns))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        m = 2 * self.n_pairs + self.n_reg
        return sparse.csr_matrix((vals, (rows, cols)), shape=(m, self.n_unknowns))

    def split_cost(self, r: np.ndarray):
        """Unweighted reprojection RMSE in pixels and the regularizer's squared sum."""
        reg = r[2 * self.n_pairs:]
        if self.n_pairs:
            per_pair = r[: 2 * self.n_pairs].reshape(-1, 2) / self.pair_weight[:, None]
            rmse = float(np.sqrt((per_pair ** 2).sum(axis=1).mean()))
        else:
            rmse = 0.0
        return rmse, float((reg ** 2).sum())


def reprojection_residuals(depth: DepthMap, transform: RigidTransform,
                           intrinsics: CameraIntrinsics, pairs: CorrespondenceSet,
                           mask: np.ndarray | None = None,
                           regularization: float = 0.0,
                           reference: DepthMap | None = None) -> np.ndarray:
    """Residual vector for the current depth: weighted reprojection errors,
    followed by regularizer rows when ``regularization`` > 0.

    ``reference`` defaults to ``depth`` itself, in which case regularizer
    rows are exactly zero.
    """
    if mask is None:
        mask = np.isfinite(depth.values)
    ref = reference if reference is not None else depth
    problem = _DepthProblem(ref, transform, intrinsics, pairs, mask, regularization)
    r, _ = problem.residuals(problem.depth_vector(depth))
    return r


def solve_depth(initial: DepthMap, transform: RigidTransform, intrinsics: CameraIntrinsics,
                pairs: CorrespondenceSet, mask: np.ndarray,
                config: SolverConfig = SolverConfig()) -> tuple[DepthMap, SolverReport]:
    """Optimize depth on mask pixels so correspondences reproject onto their targets.

    Levenberg-Marquardt on the stacked residuals with the analytic sparse
    Jacobian; accepted steps never increase the cost. The initial depth
    also anchors the gradient regularizer.
    """
    pairs = pairs.filtered(config.confidence_floor)
    if len(pairs) < 3:
        raise InsufficientCorrespondencesError(
            f"need at least 3 confident pairs, have {len(pairs)}")

    problem = _DepthProblem(initial, transform, intrinsics, pairs, mask, config.regularization)
    if problem.n_pairs < 3:
        raise InsufficientCorrespondencesError(
            f"only {problem.n_pairs} pairs fall on optimizable pixels")

    report = SolverReport()
    x = problem.depth_vector(initial)
    r, excluded = problem.residuals(x)
    report.excluded_pairs = int(excluded.sum())
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise SolverDivergedError("initial cost is not finite", residual=cost)
    rmse, reg_val = problem.split_cost(r)
    report.costs.append(cost)
    report.reprojection_rmse.append(rmse)
    report.regularizer_values.append(reg_val)

    mu = None
    for iteration in range(config.max_iterations):
        jac = problem.jacobian(x)
        grad = jac.T @ r
        if float(np.max(np.abs(grad), initial=0.0)) < config.gradient_tolerance:
            report.termination = "gradient below tolerance"
            break
        hess = (jac.T @ jac).tocsc()
        diag_max = float(hess.diagonal().max())
        if mu is None:
            mu = config.initial_damping_scale * diag_max

        accepted = False
        for _ in range(config.max_rejections):
            system = hess + mu * sparse.identity(problem.n_unknowns, format="csc")
            step = spsolve(system, -grad)
            trial = x + step
            if np.any(trial <= 0) or not np.all(np.isfinite(trial)):
                report.damping_trace.append((iteration, mu, False))
                mu *= config.damping_increase
                continue
            r_trial, excluded = problem.residuals(trial)
            trial_cost = float(r_trial @ r_trial)
            if not np.isfinite(trial_cost):
                raise SolverDivergedError("trial cost is not finite", residual=trial_cost)
            if trial_cost < cost:
                report.damping_trace.append((iteration, mu, True))
                x, r = trial, r_trial
                prev_cost, cost = cost, trial_cost
                mu *= config.damping_decrease
                accepted = True
                break
            report.damping_trace.append((iteration, mu, False))
            mu *= config.damping_increase

        if not accepted:
            report.termination = "no acceptable step (damping exhausted)"
            break

        report.excluded_pairs = int(excluded.sum())
        rmse, reg_val = problem.split_cost(r)
        report.costs.append(cost)
        report.reprojection_rmse.append(rmse)
        report.regularizer_values.append(reg_val)
        report.iterations = iteration + 1
        if prev_cost - cost < config.cost_tolerance * max(prev_cost, 1e-30):
            report.termination = "cost decrease below tolerance"
            break
    else:
        report.termination = "max iterations reached"

    return problem.with_depth_vector(initial, x), report
