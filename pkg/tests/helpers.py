"""Shared scene builders for registration and odometry tests."""

import math

import numpy as np

from radarbeam.geometry import RelativePose, apply_relative
from radarbeam.radar_pipeline import OdometryConfig, SurfaceRepresentation, extract_surface
from radarbeam.synth import RadarConfig, TrajectorySpec, WorldSpec, generate_trajectory, generate_world, render_scan, stream_rng


def random_surface(rng, n=60):
    mu = rng.uniform(-40, 40, (n, 2))
    ang = rng.uniform(0, 2 * math.pi, n)
    nrm = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return SurfaceRepresentation(mu, nrm, np.full(n, 5))


def move_surface(rep, delta: RelativePose):
    """Express ``rep`` in a frame displaced by ``delta`` (so registering gives ``delta`` back)."""
    c, s = math.cos(delta.dtheta), math.sin(delta.dtheta)
    R = np.array([[c, -s], [s, c]])
    mu = (rep.mu - delta.dr) @ R
    return SurfaceRepresentation(mu, rep.normals @ R, rep.neighbor_counts)


def city_world(seed=0):
    route = generate_trajectory(TrajectorySpec())
    return generate_world(WorldSpec(), stream_rng(seed, 0), route), route


def noiseless_pair(world, pose, delta, cfg=None, radar=None):
    cfg = cfg or OdometryConfig()
    radar = (radar or RadarConfig()).noiseless()
    rng = np.random.default_rng(0)
    a = extract_surface(render_scan(world, pose, radar, rng), cfg)
    b = extract_surface(render_scan(world, apply_relative(pose, delta), radar, rng), cfg)
    return a, b
