"""Dataset generation at scale: config, work partitioning, manifest.

Work is partitioned by identity so each per-identity random stream lives
entirely on one worker; output bytes are therefore independent of worker
count and scheduling. The manifest is JSON-lines, one record per image,
sorted by (identity_id, sample_id), preceded by a header line. Everything
in the manifest is deterministic for a given (config, master_seed); the
wall-clock creation timestamp goes to a sidecar run_info.json instead so
that byte-level dataset comparisons stay meaningful.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import multiprocessing
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np
from PIL import Image

from . import __version__
from .geometry import NoiseConfig, SamplerConfig, perturb_identity, sample_identity
from .renderer import BackgroundProvider, render_sample
from .streams import identity_stream, sample_stream

MANIFEST_NAME = "manifest.jsonl"
INCOMPLETE_MARKER = "_INCOMPLETE"
CHECKSUM_ALGO = "sha256"


class ConfigValidationError(ValueError):
    """Carries the full list of config violations."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class GenConfig:
    num_identities: int = 4000
    samples_per_identity: int = 100
    canvas_size: int = 224
    master_seed: int = 0
    flatten_tolerance: float = 1e-3
    workers: int = 1
    output_dir: str = "dataset"
    background_dir: str | None = None
    background_kinds: tuple[str, ...] = ("solid", "noise", "gradient")
    enable_background: bool = True
    png_compress_level: int = 4
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)


def _scalar_to_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_scalar_to_text(v) for v in value)
    return str(value)


def _flatten(config, prefix="") -> dict[str, str]:
    out: dict[str, str] = {}
    for f in fields(config):
        value = getattr(config, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(_flatten(value, prefix=f"{key}."))
        else:
            out[key] = _scalar_to_text(value)
    return out


def canonical_text(config: GenConfig) -> str:
    """Stable key-sorted `key = value` serialization; hashing input."""
    pairs = _flatten(config)
    return "".join(f"{k} = {pairs[k]}\n" for k in sorted(pairs))


def config_hash(config: GenConfig) -> str:
    return hashlib.sha256(canonical_text(config).encode("utf-8")).hexdigest()


def _parse_scalar(text: str, f: dataclasses.Field):
    ftype = f.type if isinstance(f.type, str) else str(f.type)
    if text == "" and "None" in ftype:
        return None
    if ftype.startswith("tuple"):
        if text == "":
            return ()
        items = text.split(",")
        if "float" in ftype:
            return tuple(float(v) for v in items)
        if "int" in ftype:
            return tuple(int(v) for v in items)
        return tuple(items)
    if ftype == "bool":
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if ftype == "int":
        return int(text)
    if ftype == "float":
        return float(text)
    return text


def parse_config(text: str) -> GenConfig:
    """Parse the `key = value` config format (supports # comments)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = val

    def build(cls, prefix=""):
        kwargs = {}
        for f in fields(cls):
            key = f"{prefix}{f.name}"
            if dataclasses.is_dataclass(f.type) or f.name in ("sampler", "noise"):
                sub_cls = SamplerConfig if f.name == "sampler" else NoiseConfig
                kwargs[f.name] = build(sub_cls, prefix=f"{key}.")
            elif key in values:
                kwargs[f.name] = _parse_scalar(values.pop(key), f)
        return cls(**kwargs)

    config = build(GenConfig)
    if values:
        raise ValueError(f"unknown config keys: {', '.join(sorted(values))}")
    return config


def load_config(path: str) -> GenConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate_config(config: GenConfig) -> list[str]:
    """All invariant violations, each naming the field and constraint."""
    v: list[str] = []
    s, n = config.sampler, config.noise
    if config.num_identities < 1:
        v.append("num_identities: must be >= 1")
    if config.samples_per_identity < 1:
        v.append("samples_per_identity: must be >= 1")
    if config.canvas_size < 16:
        v.append("canvas_size: must be >= 16")
    if config.flatten_tolerance <= 0:
        v.append("flatten_tolerance: must be > 0")
    if config.workers < 1:
        v.append("workers: must be >= 1")
    if not 0 <= config.png_compress_level <= 9:
        v.append("png_compress_level: must be in 0..9")
    if s.enable_principals and s.m_min < 1:
        v.append("sampler.m_min: must be >= 1 when principals are enabled")
    if s.m_min > s.m_max:
        v.append("sampler.m bounds: must be ordered (m_min <= m_max)")
    if s.n_min < 0:
        v.append("sampler.n_min: must be >= 0")
    if s.n_min > s.n_max:
        v.append("sampler.n bounds: must be ordered (n_min <= n_max)")
    if not 0.0 <= s.edge_margin < 0.5:
        v.append("sampler.edge_margin: must be in [0, 0.5)")
    if not 0.0 < s.t0_max <= 0.3:
        v.append("sampler.t0_max: must be in (0, 0.3]")
    if not 0.7 <= s.t1_min < 1.0:
        v.append("sampler.t1_min: must be in [0.7, 1)")
    for name, (lo, hi) in (("principal_width", s.principal_width),
                           ("wrinkle_width", s.wrinkle_width)):
        if lo <= 0 or lo > hi:
            v.append(f"sampler.{name}: range must satisfy 0 < low <= high")
    if not 0 <= s.color_low <= s.color_high <= 255:
        v.append("sampler.color range: must satisfy 0 <= low <= high <= 255")
    if not 0.0 <= s.blur_prob <= 1.0:
        v.append("sampler.blur_prob: must be in [0, 1]")
    if s.blur_sigma_max < 0:
        v.append("sampler.blur_sigma_max: must be >= 0")
    if s.wrinkle_control not in ("rectangle", "uniform"):
        v.append("sampler.wrinkle_control: must be 'rectangle' or 'uniform'")
    if s.hand_mode not in ("both", "left", "right"):
        v.append("sampler.hand_mode: must be 'both', 'left' or 'right'")
    if n.std_principal < 0:
        v.append("noise.std_principal: must be >= 0")
    if n.std_wrinkle < 0:
        v.append("noise.std_wrinkle: must be >= 0")
    if (config.enable_background and config.background_dir is None
            and not config.background_kinds):
        v.append("background: pool is empty and procedural mode is disabled")
    for kind in config.background_kinds:
        if kind not in ("solid", "noise", "gradient"):
            v.append(f"background_kinds: unknown kind {kind!r}")
    return v


@dataclass(frozen=True)
class ManifestRecord:
    identity_id: int
    sample_id: int
    path: str
    checksum: str


@dataclass(frozen=True)
class DatasetManifest:
    config_hash: str
    master_seed: int
    tool_version: str
    checksum_algo: str
    records: tuple[ManifestRecord, ...]


def relative_image_path(identity_id: int, sample_id: int) -> str:
    return f"{identity_id:05d}/{sample_id:03d}.png"


def _provider_from_config(config: GenConfig) -> BackgroundProvider:
    return BackgroundProvider(
        background_dir=config.background_dir,
        procedural_kinds=config.background_kinds,
        enabled=config.enable_background,
    )


def render_one(config: GenConfig, identity_id: int, sample_id: int,
               provider: BackgroundProvider | None = None) -> np.ndarray:
    """Render a single sample exactly as generate_dataset would."""
    provider = provider or _provider_from_config(config)
    identity = sample_identity(identity_stream(config.master_seed, identity_id),
                               config.sampler, identity_id)
    params = perturb_identity(sample_stream(config.master_seed, identity_id, sample_id),
                              identity, config.noise, sample_id, config.sampler,
                              provider.pool)
    return render_sample(params, config.canvas_size, config.flatten_tolerance, provider)


_worker_config: GenConfig | None = None
_worker_provider: BackgroundProvider | None = None


def _worker_init(config: GenConfig) -> None:
    global _worker_config, _worker_provider
    _worker_config = config
    _worker_provider = _provider_from_config(config)


def _encode_png(canvas: np.ndarray, compress_level: int) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(canvas, mode="RGB").save(buf, format="PNG", compress_level=compress_level)
    return buf.getvalue()


def _generate_identity(config: GenConfig, identity_id: int,
                       provider: BackgroundProvider) -> list[ManifestRecord]:
    identity = sample_identity(identity_stream(config.master_seed, identity_id),
                               config.sampler, identity_id)
    id_dir = os.path.join(config.output_dir, f"{identity_id:05d}")
    os.makedirs(id_dir, exist_ok=True)
    records = []
    for sample_id in range(config.samples_per_identity):
        params = perturb_identity(
            sample_stream(config.master_seed, identity_id, sample_id),
            identity, config.noise, sample_id, config.sampler, provider.pool)
        canvas = render_sample(params, config.canvas_size, config.flatten_tolerance, provider)
        blob = _encode_png(canvas, config.png_compress_level)
        rel = relative_image_path(identity_id, sample_id)
        with open(os.path.join(config.output_dir, rel), "wb") as fh:
            fh.write(blob)
        records.append(ManifestRecord(identity_id, sample_id, rel,
                                      hashlib.sha256(blob).hexdigest()))
    return records


def _worker_task(identity_id: int) -> list[ManifestRecord]:
    assert _worker_config is not None and _worker_provider is not None
    return _generate_identity(_worker_config, identity_id, _worker_provider)


def write_manifest(manifest: DatasetManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {
            "kind": "creasegen-manifest",
            "format_version": 1,
            "tool_version": manifest.tool_version,
            "config_hash": manifest.config_hash,
            "master_seed": manifest.master_seed,
            "checksum_algo": manifest.checksum_algo,
            "num_records": len(manifest.records),
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for r in manifest.records:
            row = {"identity_id": r.identity_id, "sample_id": r.sample_id,
                   "path": r.path, "checksum": r.checksum}
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def read_manifest(path: str) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "creasegen-manifest":
            raise ValueError(f"{path}: not a creasegen manifest")
        records = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(ManifestRecord(row["identity_id"], row["sample_id"],
                                          row["path"], row["checksum"]))
    if len(records) != header["num_records"]:
        raise ValueError(f"{path}: header promises {header['num_records']} records, "
                         f"found {len(records)}")
    return DatasetManifest(
        config_hash=header["config_hash"],
        master_seed=header["master_seed"],
        tool_version=header["tool_version"],
        checksum_algo=header["checksum_algo"],
        records=tuple(records),
    )


def generate_dataset(config: GenConfig) -> DatasetManifest:
    """Generate all N*S images plus the manifest under config.output_dir.

    Raises ConfigValidationError on an invalid config. On I/O failure an
    `_INCOMPLETE` marker file is left in the output directory describing
    the abort; it is removed again on success.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigValidationError(violations)
    _provider_from_config(config)  # fail fast on an unusable background dir

    os.makedirs(config.output_dir, exist_ok=True)
    marker = os.path.join(config.output_dir, INCOMPLETE_MARKER)
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("generation in progress or aborted; manifest not trustworthy\n")

    started = time.time()
    ids = list(range(config.num_identities))
    try:
        if config.workers == 1:
            provider = _provider_from_config(config)
            chunks = [_generate_identity(config, i, provider) for i in ids]
        else:
            ctx = multiprocessing.get_context()
            with ctx.Pool(config.workers, initializer=_worker_init,
                          initargs=(config,)) as pool:
                chunks = pool.map(_worker_task, ids, chunksize=1)
    except OSError as exc:
        with open(marker, "a", encoding="utf-8") as fh:
            fh.write(f"error: {exc}\n")
        raise

    records = sorted((r for chunk in chunks for r in chunk),
                     key=lambda r: (r.identity_id, r.sample_id))
    manifest = DatasetManifest(
        config_hash=config_hash(config),
        master_seed=config.master_seed,
        tool_version=__version__,
        checksum_algo=CHECKSUM_ALGO,
        records=tuple(records),
    )
    write_manifest(manifest, os.path.join(config.output_dir, MANIFEST_NAME))
    run_info = {
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": round(time.time() - started, 3),
        "workers": config.workers,
        "tool_version": __version__,
    }
    with open(os.path.join(config.output_dir, "run_info.json"), "w", encoding="utf-8") as fh:
        json.dump(run_info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.remove(marker)
    return manifest


@dataclass(frozen=True)
class VerifyReport:
    checked: int
    missing: tuple[str, ...]
    corrupt: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.missing and not self.corrupt


def verify_manifest(manifest: DatasetManifest | str, output_dir: str | None = None) -> VerifyReport:
    """Recompute checksums for every record; list missing/corrupt paths."""
    if isinstance(manifest, str):
        if output_dir is None:
            output_dir = os.path.dirname(os.path.abspath(manifest))
        manifest = read_manifest(manifest)
    elif output_dir is None:
        raise ValueError("output_dir is required when passing a manifest object")
    missing, corrupt = [], []
    for r in manifest.records:
        path = os.path.join(output_dir, r.path)
        try:
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
        except FileNotFoundError:
            missing.append(r.path)
            continue
        if digest != r.checksum:
            corrupt.append(r.path)
    return VerifyReport(checked=len(manifest.records),
                        missing=tuple(missing), corrupt=tuple(corrupt))
