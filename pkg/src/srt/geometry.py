"""Cameras, rays, rigid transforms, and the sin/cos ray encoding.

Conventions (fixed across the whole package):
  - poses are camera-to-world; the camera looks along +z, x right, y down
    (pixel coordinates), right-handed.
  - rays sample pixel centers (u + 0.5, v + 0.5).
  - everything here computes in float64 regardless of the model dtype, so
    that canonicalization is exact to ~1e-12 and the downstream 32-bit
    invariance bounds hold.

All functions are pure given an explicit rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RigidPose", "Intrinsics", "PosencConfig", "GeometryError",
    "generate_rays", "to_canonical", "posenc", "posenc_ray",
    "perturb_pose", "sample_shell_cameras", "project", "look_at",
    "rotation_exp",
]


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class RigidPose:
    """Camera-to-world rigid transform [R|t]."""

    rotation: np.ndarray      # (3, 3) orthonormal, det +1
    translation: np.ndarray   # (3,)

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        r = self.rotation
        if r.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-5) or np.linalg.det(r) < 0:
            raise GeometryError("rotation is not a proper orthonormal matrix")

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidPose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise GeometryError(f"pose matrix must be 4x4, got {m.shape}")
        return RigidPose(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidPose":
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self then applied after other: (self o other)(x) = self(other(x))."""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def transform_dirs(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or not np.isfinite([self.fx, self.fy, self.cx, self.cy]).all():
            raise GeometryError(f"degenerate intrinsics fx={self.fx} fy={self.fy}")

    @staticmethod
    def from_matrix(k) -> "Intrinsics":
        k = np.asarray(k, dtype=np.float64)
        if k.shape != (3, 3) or not np.allclose(k[2], [0, 0, 1], atol=1e-9) or abs(k[1, 0]) > 1e-9 or abs(k[0, 1]) > 1e-9:
            raise GeometryError(f"intrinsics must be upper-triangular with bottom row (0,0,1): {k}")
        return Intrinsics(float(k[0, 0]), float(k[1, 1]), float(k[0, 2]), float(k[1, 2]))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @staticmethod
    def centered(width: int, height: int, focal: float) -> "Intrinsics":
        return Intrinsics(focal, focal, width / 2.0, height / 2.0)


@dataclass(frozen=True)
class PosencConfig:
    """Octave counts for the sin/cos encoding of ray origins and directions."""

    octaves_origin: int = 15
    octaves_direction: int = 15

    def __post_init__(self):
        if self.octaves_origin < 0 or self.octaves_direction < 0:
            raise GeometryError("octave counts must be >= 0")

    @property
    def width(self) -> int:
        # 6 values per octave per 3-vector: sin+cos for each axis
        return 6 * self.octaves_origin + 6 * self.octaves_direction


def generate_rays(pose: RigidPose, intr: Intrinsics, width: int, height: int):
    """One ray per pixel center.

    Returns (origins, directions), both (height, width, 3); origins are all
    the camera center, directions are unit length in world coordinates.
    """
    if width < 1 or height < 1:
        raise GeometryError(f"image size must be >= 1, got {width}x{height}")
    u = (np.arange(width, dtype=np.float64) + 0.5 - intr.cx) / intr.fx
    v = (np.arange(height, dtype=np.float64) + 0.5 - intr.cy) / intr.fy
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
    d_world = d_cam @ pose.rotation.T
    o_world = np.broadcast_to(pose.translation, d_world.shape).copy()
    return o_world, d_world


def to_canonical(origins: np.ndarray, directions: np.ndarray, c0: RigidPose):
    """Re-express rays in the canonical camera's frame (points vs vectors)."""
    inv = c0.inverse()
    o = inv.transform_points(origins)
    d = inv.transform_dirs(directions)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return o, d


def posenc(vec: np.ndarray, octaves: int) -> np.ndarray:
    """Sin/cos features of a (..., 3) array at frequencies 2^l * pi.

    Per octave the layout is [sin(f x), sin(f y), sin(f z),
    cos(f x), cos(f y), cos(f z)]; octaves are concatenated in order,
    giving width 6*octaves. Outputs lie in [-1, 1].
    """
    vec = np.asarray(vec)
    if octaves == 0:
        return np.zeros(vec.shape[:-1] + (0,), dtype=vec.dtype)
    freqs = (2.0 ** np.arange(octaves)) * np.pi
    ang = vec[..., None, :] * freqs[:, None]          # (..., octaves, 3)
    feat = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)  # (..., octaves, 6)
    return feat.reshape(vec.shape[:-1] + (6 * octaves,))


def posenc_ray(origins: np.ndarray, directions: np.ndarray, cfg: PosencConfig) -> np.ndarray:
    """Origin block then direction block; input rays must already be canonical."""
    return np.concatenate([posenc(origins, cfg.octaves_origin),
                           posenc(directions, cfg.octaves_direction)], axis=-1)


def rotation_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: axis-angle 3-vector -> rotation matrix."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega)
    if theta < 1e-12:
        return np.eye(3)
    k = omega / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def perturb_pose(pose: RigidPose, sigma: float, rng: np.random.Generator) -> RigidPose:
    """Compose gaussian tangent-space noise with a pose.

    A 6-vector eps ~ N(0, sigma^2) perturbs rotation (first 3 components,
    radians, via the exponential map) and translation (last 3, additive).
    sigma = 0 returns the pose unchanged.
    """
    if sigma < 0:
        raise GeometryError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return pose
    eps = rng.normal(0.0, sigma, size=6)
    return RigidPose(rotation_exp(eps[:3]) @ pose.rotation, pose.translation + eps[3:])


def look_at(center: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)) -> RigidPose:
    """Camera-to-world pose at `center` looking toward `target` (y-down frame)."""
    center = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - center
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise GeometryError("look_at: center and target coincide")
    z = z / nz
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-8:      # looking along the up axis
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidPose(np.stack([x, y, z], axis=1), center)


def sample_shell_cameras(rng: np.random.Generator, n: int, r_min: float = 8.0,
                         r_max: float = 12.0, focal_factor: float = 1.2,
                         width: int = 48, height: int = 48):
    """Cameras uniform in the upper-half (z >= 0) spherical shell, all aimed
    at the origin with +y world as the up reference.

    Returns a list of (RigidPose, Intrinsics).
    """
    if not (0 < r_min <= r_max):
        raise GeometryError(f"invalid shell radii [{r_min}, {r_max}]")
    out = []
    intr = Intrinsics.centered(width, height, focal=focal_factor * max(width, height))
    for _ in range(int(n)):
        r = (rng.uniform(r_min ** 3, r_max ** 3)) ** (1.0 / 3.0)
        d = rng.normal(size=3)
        d[2] = abs(d[2])
        nd = np.linalg.norm(d)
        while nd < 1e-9:
            d = rng.normal(size=3)
            d[2] = abs(d[2])
            nd = np.linalg.norm(d)
        center = r * d / nd
        out.append((look_at(center, np.zeros(3)), intr))
    return out


def project(pose: RigidPose, intr: Intrinsics, points: np.ndarray) -> np.ndarray:
    """World points -> pixel coordinates (u, v) under the package convention."""
    cam = pose.inverse().transform_points(points)
    z = cam[..., 2]
    return np.stack([intr.fx * cam[..., 0] / z + intr.cx,
                     intr.fy * cam[..., 1] / z + intr.cy], axis=-1)
