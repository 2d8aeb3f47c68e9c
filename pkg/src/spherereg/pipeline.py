"""End-to-end describe pipeline and its configuration.

describe() runs downsample -> radius patches -> local frames -> spherical
voxelization (optionally multiscale) -> network forward, and writes the
keypoints and unit descriptors to a binary descriptor file. Patch grids are
independent work items, so they can be computed by a thread pool without
changing any output bit.
"""

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFrameError, DegeneratePatchError, ParseError
from .geometry import HashGrid, Patch, PointCloud, downsample_indices
from .lrf import LocalFrame, build_lrf, to_local
from .scnn import ArchConfig, NetworkWeights, forward_batch, init_weights
from .spherevox import (FeatureGrid, VoxelParams, msf_fuse, voxelize_hard,
                        voxelize_interp)

DESC_MAGIC = b"SDSC"
DESC_VERSION = 1

MSF_FRACTIONS = (1.0 / 3.0, 2.0 / 3.0, 1.0)


@dataclass(frozen=True)
class EncoderConfig:
    """Voxelization settings shared by training, describe and benchmarks."""

    params: VoxelParams
    interpolate: bool = True
    wrap_azimuth: bool = True
    msf: bool = False
    msf_fractions: tuple = MSF_FRACTIONS

    def grid_shape(self):
        n, m, k = self.params.shape()
        if self.msf:
            return (3, n // 3, m, k)
        return (1, n, m, k)

    def encode(self, local_patch: Patch) -> FeatureGrid:
        if self.msf:
            return msf_fuse(local_patch, self.params, self.msf_fractions,
                            wrap_azimuth=self.wrap_azimuth)
        if self.interpolate:
            return voxelize_interp(local_patch, self.params,
                                   wrap_azimuth=self.wrap_azimuth)
        return voxelize_hard(local_patch, self.params)


# Presets follow the published hyperparameter table; "desk" is the small
# configuration used by the synthetic end-to-end suites.
PRESETS = {
    "3dmatch": dict(n=15, m=20, k=40, radius=0.3, msf=False,
                    arch="full", descriptor_dim=32),
    "kitti": dict(n=15, m=20, k=40, radius=2.0, msf=False,
                  arch="full", descriptor_dim=32),
    "3dmatch-to-eth": dict(n=15, m=20, k=40, radius=1.2, msf=True,
                           arch="full", descriptor_dim=32),
    "3dmatch-to-kitti": dict(n=15, m=20, k=40, radius=3.0, msf=True,
                             arch="full", descriptor_dim=32),
    "desk": dict(n=9, m=8, k=12, radius=0.6, msf=False,
                 arch="desk", descriptor_dim=32),
}

_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


def _parse_bool(text):
    try:
        return _BOOL_WORDS[str(text).strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got '{text}'") from None


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the batch pipeline, embeddable into report headers."""

    n: int = 9
    m: int = 8
    k: int = 12
    radius: float = 0.6
    interpolate: bool = True
    wrap_azimuth: bool = True
    msf: bool = False
    arch: str = "desk"
    descriptor_dim: int = 32
    padding: str = "spherical"
    keypoints: int = 500
    seed: int = 0
    match_mode: str = "mutual"
    ransac_iterations: int = 50000
    inlier_threshold: float = 0.1
    tau1: float = 0.1
    tau2: float = 0.05
    tau3: float = 0.2
    sr_rte: float = 2.0
    sr_rre_deg: float = 5.0
    threads: int = 0  # 0 = all logical cores

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(VoxelParams(self.n, self.m, self.k, self.radius),
                             interpolate=self.interpolate,
                             wrap_azimuth=self.wrap_azimuth, msf=self.msf)

    def arch_config(self) -> ArchConfig:
        if self.arch == "desk":
            return ArchConfig.desk(self.encoder().grid_shape(),
                                   self.descriptor_dim, self.padding)
        if self.arch == "full":
            return ArchConfig.full(self.encoder().grid_shape(),
                                   self.descriptor_dim, self.padding)
        raise ConfigError(f"unknown architecture '{self.arch}'")

    def effective_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("SPHEREREG_THREADS", "").strip()
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ConfigError(f"bad SPHEREREG_THREADS value '{env}'") from None
            if value > 0:
                return value
        return os.cpu_count() or 1

    def resolved(self) -> dict:
        # threads is an execution detail, not a pipeline parameter: outputs
        # must be byte-identical regardless of worker count
        return {name: getattr(self, name) for name in _CONFIG_PARSERS
                if name != "threads"}


_CONFIG_PARSERS = {
    "n": int, "m": int, "k": int, "radius": float,
    "interpolate": _parse_bool, "wrap_azimuth": _parse_bool, "msf": _parse_bool,
    "arch": str, "descriptor_dim": int, "padding": str,
    "keypoints": int, "seed": int, "match_mode": str,
    "ransac_iterations": int, "inlier_threshold": float,
    "tau1": float, "tau2": float, "tau3": float,
    "sr_rte": float, "sr_rre_deg": float, "threads": int,
}


def parse_config_text(text: str, path=None) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path or '<config>'}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{path or '<config>'}:{lineno}: unknown key '{key}'")
        values[key] = value.strip()
    return values


def build_config(preset: str = None, config_path=None, overrides: dict = None
                 ) -> PipelineConfig:
    """Defaults <- preset <- config file <- explicit overrides."""
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}'; "
                              f"choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            raw = parse_config_text(fh.read(), path=config_path)
        for key, text in raw.items():
            merged[key] = _CONFIG_PARSERS[key](text)
    for key, value in (overrides or {}).items():
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(value, str):
            value = _CONFIG_PARSERS[key](value)
        merged[key] = value
    return PipelineConfig(**merged)


def compute_patch_grid(patch: Patch, enc: EncoderConfig):
    """Local frame + voxelization for one patch.

    Degenerate patches fall back to the identity frame (translation only),
    flagged in the returned tuple, rather than aborting a whole cloud.
    """
    try:
        frame = build_lrf(patch)
    except (DegeneratePatchError, DegenerateFrameError):
        frame = LocalFrame.identity(patch.center, fallback=True)
    grid = enc.encode(to_local(patch, frame))
    return grid, frame.fallback


def grids_for_patches(patches, enc: EncoderConfig, threads: int = 1):
    """Stacked grids (n, C, N, M, K) plus fallback flags and dropped counts."""
    shape = enc.grid_shape()
    grids = np.zeros((len(patches),) + shape)
    fallback = np.zeros(len(patches), dtype=bool)
    dropped = np.zeros(len(patches), dtype=np.int64)

    def work(i):
        grid, fb = compute_patch_grid(patches[i], enc)
        grids[i] = grid.values
        fallback[i] = fb
        dropped[i] = grid.dropped

    if threads <= 1 or len(patches) < 2:
        for i in range(len(patches)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(patches))))
    return grids, fallback, dropped


def descriptors_for_grids(grids: np.ndarray, weights: NetworkWeights,
                          batch_size: int = 256) -> np.ndarray:
    descs = []
    for start in range(0, len(grids), batch_size):
        desc, _ = forward_batch(grids[start:start + batch_size], weights)
        descs.append(desc)
    return np.concatenate(descs, axis=0) if descs else np.empty((0, 0))


@dataclass(frozen=True)
class DescribeResult:
    keypoints: np.ndarray
    descriptors: np.ndarray
    fallback_frames: int
    dropped_points: int


def describe_cloud(cloud: PointCloud, config: PipelineConfig,
                   weights: NetworkWeights) -> DescribeResult:
    """Keypoints and descriptors for one cloud, reproducible from the seed."""
    enc = config.encoder()
    count = min(config.keypoints, len(cloud))
    kp_idx = downsample_indices(len(cloud), count, config.seed)
    grid_index = HashGrid(cloud.points, config.radius)
    patches = []
    for i in kp_idx:
        center = cloud.points[i]
        nbr = grid_index.query_ball(center, config.radius)
        patches.append(Patch(center, cloud.points[nbr], config.radius))
    grids, fallback, dropped = grids_for_patches(
        patches, enc, threads=config.effective_threads())
    descriptors = descriptors_for_grids(grids, weights)
    return DescribeResult(keypoints=cloud.points[kp_idx],
                          descriptors=descriptors,
                          fallback_frames=int(fallback.sum()),
                          dropped_points=int(dropped.sum()))


def random_weights(config: PipelineConfig, seed: int = None) -> NetworkWeights:
    """Freshly initialized network matching the configured encoder."""
    return init_weights(config.seed if seed is None else seed,
                        config.arch_config(), config.encoder().grid_shape())


def save_descriptors(result: DescribeResult, path, config: PipelineConfig,
                     weights_hash: str) -> None:
    header = json.dumps({
        "count": int(len(result.keypoints)),
        "dim": int(result.descriptors.shape[1]) if len(result.descriptors) else 0,
        "fallback_frames": result.fallback_frames,
        "dropped_points": result.dropped_points,
        "weights_hash": weights_hash,
        "config": config.resolved(),
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DESC_MAGIC)
        fh.write(struct.pack("<II", DESC_VERSION, len(header)))
        fh.write(header)
        fh.write(result.keypoints.astype("<f8").tobytes(order="C"))
        fh.write(result.descriptors.astype("<f8").tobytes(order="C"))


def load_descriptors(path):
    """Returns (keypoints, descriptors, header dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DESC_MAGIC:
        raise ParseError("bad descriptor-file magic", path=path, offset=0)
    version, header_len = struct.unpack("<II", data[4:12])
    if version != DESC_VERSION:
        raise ParseError(f"unsupported descriptor format version {version}",
                         path=path, offset=4)
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad descriptor header: {exc}", path=path, offset=12) from exc
    count, dim = header["count"], header["dim"]
    offset = 12 + header_len
    need = offset + 8 * count * (3 + dim)
    if len(data) < need:
        raise ParseError(f"truncated descriptor payload: need {need} bytes",
                         path=path, offset=len(data))
    keypoints = np.frombuffer(data, dtype="<f8", count=count * 3,
                              offset=offset).reshape(count, 3).copy()
    descriptors = np.frombuffer(data, dtype="<f8", count=count * dim,
                                offset=offset + 24 * count
                                ).reshape(count, dim).copy()
    return keypoints, descriptors, header
