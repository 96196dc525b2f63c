"""Feature-metric pose refinement against a co-visibility indexed map.

Reference features are attached to the map points co-visible from the
retrieved database image by sampling the database feature pyramid at their
projections.  The query pose is then refined, coarse level first, by
Levenberg-Marquardt with Huber IRLS weights on the residuals between query
features at the reprojected points and the attached reference features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientObservations, SingularSystem
from .features import DEFAULT_LEVELS, DEFAULT_SIGMA, FeaturePyramid, build_pyramid, sample_many
from .geometry import CameraIntrinsics, Pose, project, se3_exp
from .mapcloud import IndexedMap, covisible_points
from .retrieval import RetrievalDatabase, compute_descriptor, query_top_k

log = logging.getLogger(__name__)

MAX_REJECTIONS = 10


@dataclass(frozen=True)
class SolverConfig:
    max_iters_per_level: int = 100
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.5
    huber_delta: float = 0.5
    step_tol: float = 1e-8
    cost_tol: float = 1e-9
    min_points: int = 10
    robust: bool = True  # False: plain quadratic loss

    def __post_init__(self) -> None:
        positive = (
            self.max_iters_per_level,
            self.lambda_init,
            self.huber_delta,
            self.step_tol,
            self.cost_tol,
            self.min_points,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("solver settings must be positive")
        if not (self.lambda_up > 1.0 > self.lambda_down > 0.0):
            raise ValueError("need lambda_up > 1 > lambda_down > 0")


@dataclass(frozen=True)
class ReferenceObservation:
    point_w: np.ndarray
    ref_features: tuple[np.ndarray, ...]  # one C-vector per pyramid level


@dataclass(frozen=True, eq=False)
class ReferenceObservations:
    """Column-wise store of reference observations.

    ``features[l]`` is ``(N, C)`` for pyramid level ``l`` (coarse to fine).
    """

    points_w: np.ndarray
    features: tuple[np.ndarray, ...]
    point_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return self.points_w.shape[0]

    def __getitem__(self, i: int) -> ReferenceObservation:
        return ReferenceObservation(self.points_w[i], tuple(f[i] for f in self.features))

    def subset(self, mask) -> ReferenceObservations:
        ids = None if self.point_ids is None else self.point_ids[mask]
        return ReferenceObservations(self.points_w[mask], tuple(f[mask] for f in self.features), ids)


@dataclass(eq=False)
class LocalizationResult:
    pose: Pose
    converged: bool
    final_cost: float
    iterations: list[int]
    inlier_counts: list[int]
    retrieved_image: int = -1
    retrieval_similarity: float = float("nan")
    cost_history: list[list[float]] = field(default_factory=list)
    candidates: list[tuple[int, float]] = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "retrieved_image": self.retrieved_image,
            "similarity": self.retrieval_similarity,
            "converged": self.converged,
            "final_cost": self.final_cost,
            "iterations": list(self.iterations),
            "inliers": list(self.inlier_counts),
        }


def make_reference_observations(
    map_: IndexedMap,
    image_id: int,
    db_pose: Pose,
    K: CameraIntrinsics,
    db_pyr: FeaturePyramid,
    min_points: int = SolverConfig.min_points,
) -> ReferenceObservations:
    """Sample database features at the projections of co-visible map points.

    Only points that fall inside the sampling domain at every pyramid level
    are kept.
    """
    idx, pts = covisible_points(map_, image_id)
    p_cam = db_pose.inverse().apply(pts)
    keep = np.ones(len(idx), dtype=bool)
    feats = []
    for level in db_pyr.levels:
        uv, _, valid = project(K.downscaled(level.scale), p_cam)
        f, _, inside = sample_many(level, uv)
        keep &= valid & inside
        feats.append(f)
    if int(keep.sum()) < min_points:
        raise InsufficientObservations(
            f"image {image_id}: {int(keep.sum())} usable observations, need {min_points}"
        )
    return ReferenceObservations(pts[keep], tuple(f[keep] for f in feats), idx[keep])


def huber_cost(s: np.ndarray, delta: float) -> np.ndarray:
    return np.where(s <= delta, 0.5 * s * s, delta * (s - 0.5 * delta))


def huber_weights(s: np.ndarray, delta: float) -> np.ndarray:
    return np.where(s <= delta, 1.0, delta / np.maximum(s, delta))


@dataclass
class _State:
    pose: Pose
    cost: float
    count: int
    inliers: int
    residuals: np.ndarray  # (n, C) in-bounds only
    weights: np.ndarray  # (n,)
    points: np.ndarray  # (n, 3) world points that are in bounds
    uv_jac: np.ndarray  # (n, C, 3): feature gradient times projection Jacobian
    R_cw: np.ndarray


def _evaluate(pose, points_w, ref, level, K_l: CameraIntrinsics, cfg: SolverConfig, with_jac: bool) -> _State:
    cam_from_world = pose.inverse()
    R_cw = cam_from_world.R
    p_c = points_w @ R_cw.T + cam_from_world.t
    uv, Jp, valid = project(K_l, p_c)
    f, G, inside = sample_many(level, uv)
    m = valid & inside
    r = f[m] - ref[m]
    s = np.sqrt(np.einsum("nc,nc->n", r, r))
    if cfg.robust:
        cost = float(np.sum(huber_cost(s, cfg.huber_delta)))
        w = huber_weights(s, cfg.huber_delta)
    else:
        cost = float(0.5 * np.sum(s * s))
        w = np.ones_like(s)
    GJ = np.einsum("ncj,njk->nck", G[m], Jp[m]) if with_jac else None
    return _State(
        pose, cost, int(m.sum()), int(np.sum(s <= cfg.huber_delta)), r, w, points_w[m], GJ, R_cw
    )


def residual_jacobian(state: _State) -> np.ndarray:
    """``(n, C, 6)`` derivative of the residuals w.r.t. a left twist ``(rho, phi)``.

    With ``W' = exp(delta) W`` the camera-frame point moves as
    ``d p_c = R_cw (-d rho + p_w x d phi)``.
    """
    M = np.einsum("nck,kl->ncl", state.uv_jac, state.R_cw)
    J_phi = np.cross(M, state.points[:, None, :])
    return np.concatenate((-M, J_phi), axis=2)


def _normal_equations(state: _State):
    J = residual_jacobian(state)
    n, C, _ = J.shape
    Jf = J.reshape(n * C, 6)
    w = np.repeat(state.weights, C)
    rf = state.residuals.reshape(n * C)
    Jw = Jf * w[:, None]
    return Jw.T @ Jf, Jw.T @ rf


def _refine_level(pose, obs, l, level, K, cfg: SolverConfig):
    K_l = K.downscaled(level.scale)
    ref = obs.features[l]
    pts = obs.points_w
    state = _evaluate(pose, pts, ref, level, K_l, cfg, True)
    if state.count < cfg.min_points:
        raise InsufficientObservations(f"level {l}: {state.count} in-bounds points, need {cfg.min_points}")
    lam = cfg.lambda_init
    history = [state.cost]
    converged = False
    iters = 0
    while iters < cfg.max_iters_per_level and not converged:
        iters += 1
        H, g = _normal_equations(state)
        solved = False
        for _ in range(MAX_REJECTIONS):
            A = H + lam * np.diag(np.diag(H))
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= cfg.lambda_up
                continue
            solved = True
            if np.linalg.norm(delta) < cfg.step_tol:
                converged = True
                break
            cand = _evaluate(se3_exp(delta) @ state.pose, pts, ref, level, K_l, cfg, True)
            if cand.count >= cfg.min_points and cand.cost < state.cost:
                decrease = state.cost - cand.cost
                converged = decrease <= cfg.cost_tol * state.cost
                state = cand
                history.append(cand.cost)
                lam = max(lam * cfg.lambda_down, 1e-12)
                break
            lam *= cfg.lambda_up
        else:
            if not solved:
                raise SingularSystem(f"level {l}: normal equations are not solvable")
            # Every damped step increased the cost: stop this level.
            break
    return state, converged, iters, history


def refine_pose(
    init: Pose,
    obs: ReferenceObservations,
    query_pyr: FeaturePyramid,
    K: CameraIntrinsics,
    cfg: SolverConfig = SolverConfig(),
) -> LocalizationResult:
    """Coarse-to-fine robust LM refinement of a world-from-camera pose."""
    if len(obs) < cfg.min_points:
        raise InsufficientObservations(f"{len(obs)} observations, need {cfg.min_points}")
    if len(obs.features) != len(query_pyr):
        raise ValueError("observations and query pyramid have different level counts")
    pose = init
    iterations, inliers, histories = [], [], []
    converged = False
    cost = float("nan")
    for l, level in enumerate(query_pyr.levels):
        state, converged, iters, history = _refine_level(pose, obs, l, level, K, cfg)
        pose = state.pose
        cost = state.cost
        iterations.append(iters)
        inliers.append(state.inliers)
        histories.append(history)
        log.debug("level %d: %d iterations, cost %.6g, %d/%d inliers", l, iters, cost, state.inliers, state.count)
    return LocalizationResult(pose, converged, cost, iterations, inliers, cost_history=histories)


def localize(
    query_image: np.ndarray,
    db: RetrievalDatabase,
    map_: IndexedMap,
    K: CameraIntrinsics,
    cfg: SolverConfig = SolverConfig(),
    *,
    db_images,
    levels: int = DEFAULT_LEVELS,
    sigma: float = DEFAULT_SIGMA,
    top_k: int = 1,
) -> LocalizationResult:
    """Retrieve the most similar database image and refine from its pose.

    ``db_images[m]`` must return the grayscale database image with id ``m``.
    Only the top-1 candidate is refined; ``top_k`` only widens the ranking
    kept in the result's ``candidates`` attribute.
    """
    ranked = query_top_k(db, compute_descriptor(query_image, db.kind), max(1, top_k))
    image_id, sim = ranked[0]
    db_pose = db.poses[image_id].pose
    db_pyr = build_pyramid(db_images[image_id], levels, sigma)
    obs = make_reference_observations(map_, image_id, db_pose, K, db_pyr, cfg.min_points)
    query_pyr = build_pyramid(query_image, levels, sigma)
    result = refine_pose(db_pose, obs, query_pyr, K, cfg)
    result.retrieved_image = image_id
    result.retrieval_similarity = sim
    result.candidates = ranked
    return result
