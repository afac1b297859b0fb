"""
Seeded synthetic face-pair generator.

Identity lives in a style signature (palette, texture, facial geometry);
content (pose, lighting, background, expression) varies per render. A swap
render paints identity A over a face region whose blend with identity B is
controlled by the artifact level, strongest along the mask boundary.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from src.app.models.dataset import DatasetManifest, PairLabel, PairRecord, SyntheticIdentity
from src.services.dataset_service import encode_png, save_manifest
from src.services.utils.exceptions import ConfigurationError
from src.services.utils.json_formatter import derive_seed
from src.utils.logging import get_logger, progress_enabled

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.jsonl"
DEFAULT_ARTIFACT_LEVEL = 0.5
EDGE_WIDTH = 0.08

SIGNATURE_FIELDS = (
    "skin_r", "skin_g", "skin_b",
    "accent_r", "accent_g", "accent_b",
    "freq_u", "freq_v", "orientation", "texture_amp",
    "eye_spacing", "eye_size", "mouth_width", "face_aspect",
)


def identity_signature(seed: int, identity_id: int) -> SyntheticIdentity:
    """Same (seed, identity_id) always gives the same signature."""
    rng = np.random.default_rng([seed, identity_id])
    skin = rng.uniform(0.15, 0.95, 3)
    accent = rng.uniform(0.05, 0.95, 3)
    freqs = rng.uniform(2.0, 12.0, 2)
    orientation = rng.uniform(0.0, np.pi)
    texture_amp = rng.uniform(0.05, 0.25)
    geometry = [
        rng.uniform(0.25, 0.45),
        rng.uniform(0.06, 0.14),
        rng.uniform(0.20, 0.50),
        rng.uniform(0.75, 1.00),
    ]
    signature = [*skin, *accent, *freqs, orientation, texture_amp, *geometry]
    return SyntheticIdentity(identity_id=identity_id, style_signature=[float(v) for v in signature])


@dataclass(frozen=True)
class RenderContent:
    """Per-image content: pose, lighting, background and expression."""
    dx: float
    dy: float
    scale: float
    lighting: float
    light_angle: float
    background: tuple[float, float, float]
    expression: float

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "RenderContent":
        return cls(
            dx=float(rng.uniform(-0.12, 0.12)),
            dy=float(rng.uniform(-0.10, 0.10)),
            scale=float(rng.uniform(0.85, 1.10)),
            lighting=float(rng.uniform(0.80, 1.20)),
            light_angle=float(rng.uniform(0.0, 2 * np.pi)),
            background=tuple(float(v) for v in rng.uniform(0.35, 0.65) + rng.uniform(-0.05, 0.05, 3)),
            expression=float(rng.uniform(0.0, 1.0)),
        )

    @property
    def scenario(self) -> dict[str, str]:
        lighting = "dim" if self.lighting < 0.93 else "bright" if self.lighting > 1.07 else "normal"
        pose = "left" if self.dx < -0.04 else "right" if self.dx > 0.04 else "frontal"
        expression = "smile" if self.expression > 0.5 else "neutral"
        return {"lighting": lighting, "pose": pose, "expression": expression}


@dataclass
class FaceLayers:
    face: np.ndarray
    mask: np.ndarray
    background: np.ndarray

    @property
    def ring(self) -> np.ndarray:
        """Peaks at 1 on the soft mask boundary, 0 inside and outside."""
        return 4.0 * self.mask * (1.0 - self.mask)


def _unpack(identity: SyntheticIdentity) -> dict[str, float]:
    return dict(zip(SIGNATURE_FIELDS, identity.style_signature))


def _blob(u: np.ndarray, v: np.ndarray, cu: float, cv: float, ru: float, rv: float) -> np.ndarray:
    return np.exp(-(((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2))


def render_layers(identity: SyntheticIdentity, content: RenderContent, image_size: int = 256) -> FaceLayers:
    """Face layer of ``identity`` plus the content-determined mask and background, all in [0, 1]."""
    p = _unpack(identity)
    axis = np.linspace(-1.0, 1.0, image_size)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")

    u = (xx - content.dx) / (0.65 * content.scale)
    v = (yy - content.dy) / (0.80 * content.scale)
    radius = np.sqrt(u**2 + v**2)
    mask = np.clip((1.0 - radius) / EDGE_WIDTH, 0.0, 1.0)

    skin = np.array([p["skin_r"], p["skin_g"], p["skin_b"]])
    accent = np.array([p["accent_r"], p["accent_g"], p["accent_b"]])
    cos_o, sin_o = np.cos(p["orientation"]), np.sin(p["orientation"])
    texture = (
        np.sin(2 * np.pi * p["freq_u"] * (u * cos_o + v * sin_o) / 2)
        * np.cos(2 * np.pi * p["freq_v"] * (-u * sin_o + v * cos_o) / 2)
    )
    face = skin + p["texture_amp"] * texture[..., None] * (accent - skin)

    fu = u / p["face_aspect"]
    eyes = (
        _blob(fu, v, -p["eye_spacing"], -0.25, p["eye_size"], p["eye_size"] * 0.7)
        + _blob(fu, v, p["eye_spacing"], -0.25, p["eye_size"], p["eye_size"] * 0.7)
    )
    mouth = _blob(fu, v, 0.0, 0.42, p["mouth_width"] / 2, 0.04 + 0.08 * content.expression)
    face = face * (1 - 0.8 * eyes[..., None]) + 0.3 * accent * (0.8 * eyes[..., None])
    face = face * (1 - mouth[..., None]) + accent * mouth[..., None]

    shade = content.lighting * (
        1.0 + 0.15 * (u * np.cos(content.light_angle) + v * np.sin(content.light_angle))
    )
    face = np.clip(face * shade[..., None], 0.0, 1.0)

    background = np.asarray(content.background) * (0.85 + 0.15 * (yy[..., None] + 1) / 2)
    return FaceLayers(face=face, mask=mask, background=np.clip(background, 0.0, 1.0))


def _to_pixels(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def render(identity: SyntheticIdentity, content: RenderContent, image_size: int = 256) -> np.ndarray:
    """Genuine render as uint8 h x w x 3."""
    layers = render_layers(identity, content, image_size)
    mask = layers.mask[..., None]
    return _to_pixels(mask * layers.face + (1 - mask) * layers.background)


def render_swap(
    source: SyntheticIdentity,
    target: SyntheticIdentity,
    content: RenderContent,
    artifact_level: float = DEFAULT_ARTIFACT_LEVEL,
    image_size: int = 256,
) -> np.ndarray:
    """
    ``source``'s face grafted onto ``target``'s image. The target face bleeds
    through with weight artifact_level * (1 + 2 * ring), clipped to [0, 1].
    An artifact level of 0 reproduces ``render(source, content)`` exactly.
    """
    if not 0.0 <= artifact_level <= 1.0:
        raise ConfigurationError("artifact_level must lie in [0, 1]", details={"artifact_level": artifact_level})
    src = render_layers(source, content, image_size)
    if artifact_level == 0.0:
        blended = src.face
    else:
        tgt = render_layers(target, content, image_size)
        weight = np.clip(artifact_level * (1.0 + 2.0 * src.ring), 0.0, 1.0)[..., None]
        blended = (1 - weight) * src.face + weight * tgt.face
    mask = src.mask[..., None]
    return _to_pixels(mask * blended + (1 - mask) * src.background)


def _write_pair(out_dir: Path, pair_id: str, real: np.ndarray, suspicious: np.ndarray) -> tuple[str, str]:
    pair_dir = out_dir / pair_id
    pair_dir.mkdir(parents=True, exist_ok=True)
    (pair_dir / "real.png").write_bytes(encode_png(real))
    (pair_dir / "suspicious.png").write_bytes(encode_png(suspicious))
    return f"{pair_id}/real.png", f"{pair_id}/suspicious.png"


def generate_synthetic_dataset(
    seed: int,
    n_identities: int,
    n_pairs_per_class: int,
    out_dir: Path,
    artifact_level: float = DEFAULT_ARTIFACT_LEVEL,
    technique: str = "synthetic-swap",
    image_size: int = 256,
    metadata: Optional[dict] = None,
) -> DatasetManifest:
    """
    Write ``n_pairs_per_class`` real-real and fake-real pairs under ``out_dir``
    plus ``manifest.jsonl``. Every pair draws from its own seed, so the files
    are byte-identical for the same arguments.
    """
    if n_identities < 2:
        raise ConfigurationError("At least two identities are needed", details={"n_identities": n_identities})
    if n_pairs_per_class < 1:
        raise ConfigurationError("n_pairs_per_class must be positive", details={"n_pairs_per_class": n_pairs_per_class})
    if not 0.0 <= artifact_level <= 1.0:
        raise ConfigurationError("artifact_level must lie in [0, 1]", details={"artifact_level": artifact_level})

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    identities = [identity_signature(seed, i) for i in range(n_identities)]
    jobs = [("rr", i) for i in range(n_pairs_per_class)] + [("fr", i) for i in range(n_pairs_per_class)]

    records: list[PairRecord] = []
    for kind, index in tqdm(jobs, desc="Rendering pairs", disable=not progress_enabled(), leave=False):
        pair_id = f"{technique}-{kind}-{index:05d}"
        rng = np.random.default_rng(derive_seed(seed, pair_id))
        source = int(rng.integers(n_identities))
        reference_content = RenderContent.sample(rng)
        suspicious_content = RenderContent.sample(rng)
        reference = render(identities[source], reference_content, image_size)
        if kind == "rr":
            suspicious = render(identities[source], suspicious_content, image_size)
            label, target = PairLabel.REAL_REAL, None
        else:
            target = (source + 1 + int(rng.integers(n_identities - 1))) % n_identities
            suspicious = render_swap(
                identities[source], identities[target], suspicious_content, artifact_level, image_size
            )
            label = PairLabel.FAKE_REAL
        real_path, suspicious_path = _write_pair(out_dir, pair_id, reference, suspicious)
        records.append(
            PairRecord(
                pair_id=pair_id,
                real_path=real_path,
                suspicious_path=suspicious_path,
                label=label,
                technique=technique,
                scenario=suspicious_content.scenario,
                source_identity=source,
                target_identity=target,
            )
        )

    manifest = DatasetManifest(
        records=records,
        metadata={
            "generator": "synthetic",
            "seed": seed,
            "n_identities": n_identities,
            "n_pairs_per_class": n_pairs_per_class,
            "artifact_level": artifact_level,
            "technique": technique,
            "image_size": image_size,
            **(metadata or {}),
        },
    ).with_root(out_dir)
    save_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"Generated {len(records)} synthetic pairs from {n_identities} identities in {out_dir}")
    return manifest
