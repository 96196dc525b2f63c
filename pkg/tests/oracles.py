"""Shared independent checks used by the unit and acceptance suites."""

import numpy as np

from cloudvision.features import build_pyramid, sample_many
from cloudvision.geometry import Pose, project, se3_exp
from cloudvision.solver import SolverConfig, _evaluate, make_reference_observations, residual_jacobian


def nearest_db_image(ds, pose: Pose) -> int:
    return int(np.argmin([np.linalg.norm(tp.pose.t - pose.t) for tp in ds.db_poses]))


def random_perturbation(rng, max_trans: float, max_deg: float) -> Pose:
    """Left perturbation with uniform magnitudes up to the given bounds."""
    d = rng.normal(size=3)
    a = rng.normal(size=3)
    d *= max_trans * rng.uniform() / np.linalg.norm(d)
    a *= np.radians(max_deg) * rng.uniform() / np.linalg.norm(a)
    return Pose.from_rotvec(a, d)


def noiseless_problem(ds, map_, j: int):
    """Reference features sampled from query ``j`` itself at its true pose.

    The residual is then exactly zero at the ground truth, which isolates
    the optimiser from rendering and retrieval effects.
    """
    gt = ds.query_poses[j].pose
    pyr = build_pyramid(ds.query_images[j])
    obs = make_reference_observations(map_, nearest_db_image(ds, gt), gt, ds.K, pyr)
    return gt, obs, pyr


def perturb_about(pose: Pose, pert: Pose) -> Pose:
    """Rotate about the camera centre and shift it, leaving the centre fixed otherwise."""
    return Pose.from_rt(pert.R @ pose.R, pose.t + pert.t)


def residual_jacobian_errors(pose, obs, pyr, K, level: int, h: float = 1e-6):
    """Relative error of the analytic residual Jacobian against central differences.

    Points whose projection changes bilinear cell under the +-h stencil are
    excluded, since the interpolated surface is only piecewise smooth there.
    """
    cfg = SolverConfig()
    lv = pyr.levels[level]
    K_l = K.downscaled(lv.scale)
    ref = obs.features[level]
    base = _evaluate(pose, obs.points_w, ref, lv, K_l, cfg, True)
    J = residual_jacobian(base)
    keep = np.ones(base.count, dtype=bool)
    fd = np.zeros_like(J)
    in_pts = base.points
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        plus = _cell_eval(se3_exp(e) @ pose, in_pts, lv, K_l)
        minus = _cell_eval(se3_exp(-e) @ pose, in_pts, lv, K_l)
        keep &= plus[2] & minus[2] & np.all(plus[1] == minus[1], axis=1)
        fd[:, :, k] = (plus[0] - minus[0]) / (2 * h)
    J, fd = J[keep], fd[keep]
    return np.linalg.norm(fd - J) / np.linalg.norm(J), int(keep.sum())


def _cell_eval(pose, pts, level, K_l):
    uv, _, valid = project(K_l, pose.inverse().apply(pts))
    f, _, inside = sample_many(level, uv)
    return f, np.floor(uv).astype(int), valid & inside
