"""Binary dataset container and model checkpoint files.

A dataset is stored as two files sharing a basename:

* ``<name>.iq``        little-endian float32, interleaved I/Q, frame-major,
                       frames in canonical order (class-major, then SNR,
                       then frame index);
* ``<name>.meta.json`` plain-text sidecar with the class list, SNR grid,
                       per-cell frame count, and a SHA-256 checksum of the
                       payload.

Labels and SNRs are implied by the canonical order, so external datasets
can be imported by writing the same layout. Model checkpoints follow the
same pattern: a flat float64 parameter file plus a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    ConfigurationError,
    OutputError,
    SidecarInconsistentError,
    TruncatedContainerError,
)
from .learner import ArchConfig, ConvFrontConfig, Model
from .sigsynth import Dataset, DatasetSpec, SnrGrid

FORMAT_VERSION = 1
CANONICAL_ORDER = "class-major,snr,frame"


def _payload_bytes(dataset: Dataset) -> bytes:
    interleaved = np.empty((dataset.n_frames, 2 * dataset.frame_len), dtype="<f4")
    interleaved[:, 0::2] = dataset.iq.real
    interleaved[:, 1::2] = dataset.iq.imag
    return interleaved.tobytes()


def _expected_labels_snrs(classes, grid_values, frames_per_cell):
    n_grid = len(grid_values)
    labels = np.repeat(np.arange(len(classes)), n_grid * frames_per_cell)
    snrs = np.tile(np.repeat(np.asarray(grid_values, dtype=float), frames_per_cell), len(classes))
    return labels, snrs


def write_container(dataset: Dataset, basename: str | Path) -> tuple[Path, Path]:
    """Write ``<basename>.iq`` and ``<basename>.meta.json``."""
    base = Path(basename)
    n_grid = len(dataset.grid)
    n_classes = len(dataset.classes)
    if dataset.n_frames % (n_grid * n_classes) != 0:
        raise ConfigurationError("Dataset is not class/SNR balanced; cannot serialize")
    frames_per_cell = dataset.n_frames // (n_grid * n_classes)
    labels, snrs = _expected_labels_snrs(dataset.classes, dataset.grid.values, frames_per_cell)
    if not (np.array_equal(labels, dataset.labels) and np.allclose(snrs, dataset.snr_db)):
        raise ConfigurationError("Dataset frames are not in canonical container order")

    payload = _payload_bytes(dataset)
    meta = {
        "format_version": FORMAT_VERSION,
        "classes": list(dataset.classes),
        "snr_grid_db": [float(v) for v in dataset.grid.values],
        "frames_per_cell": int(frames_per_cell),
        "frame_len": int(dataset.frame_len),
        "frame_count": int(dataset.n_frames),
        "order": CANONICAL_ORDER,
        "checksum_sha256": hashlib.sha256(payload).hexdigest(),
        "dataset_spec": spec_to_dict(dataset.spec) if dataset.spec is not None else None,
    }
    iq_path = Path(str(base) + ".iq")
    meta_path = Path(str(base) + ".meta.json")
    try:
        iq_path.parent.mkdir(parents=True, exist_ok=True)
        iq_path.write_bytes(payload)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"Cannot write dataset container: {exc}") from exc
    return iq_path, meta_path


def read_container(basename: str | Path) -> Dataset:
    """Read a container pair back into a Dataset, validating as it goes."""
    stem = str(basename)
    if stem.endswith(".iq"):
        stem = stem[: -len(".iq")]
    iq_path = Path(stem + ".iq")
    meta_path = Path(stem + ".meta.json")
    if not iq_path.exists() or not meta_path.exists():
        raise OutputError(f"Missing container file(s): {iq_path} / {meta_path}")

    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for key in ("classes", "snr_grid_db", "frames_per_cell", "frame_len", "frame_count", "checksum_sha256"):
        if key not in meta:
            raise SidecarInconsistentError(f"Sidecar is missing required key {key!r}")

    classes = tuple(str(c) for c in meta["classes"])
    grid = SnrGrid(tuple(float(v) for v in meta["snr_grid_db"]))
    frames_per_cell = int(meta["frames_per_cell"])
    frame_len = int(meta["frame_len"])
    frame_count = int(meta["frame_count"])
    if frame_count != len(classes) * len(grid) * frames_per_cell:
        raise SidecarInconsistentError(
            f"Sidecar frame_count {frame_count} does not equal classes x grid x frames_per_cell"
        )

    payload = iq_path.read_bytes()
    expected_bytes = frame_count * frame_len * 2 * 4
    if len(payload) < expected_bytes:
        raise TruncatedContainerError(
            f"Container holds {len(payload)} bytes, sidecar declares {expected_bytes}"
        )
    if len(payload) != expected_bytes:
        raise SidecarInconsistentError(
            f"Container holds {len(payload)} bytes, sidecar declares {expected_bytes}"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != meta["checksum_sha256"]:
        raise ChecksumMismatchError("Container payload does not match sidecar checksum")

    flat = np.frombuffer(payload, dtype="<f4").reshape(frame_count, 2 * frame_len)
    iq = (flat[:, 0::2] + 1j * flat[:, 1::2]).astype(np.complex64)
    if not np.all(np.isfinite(flat)):
        raise SidecarInconsistentError("Container payload holds non-finite samples")

    labels, snrs = _expected_labels_snrs(classes, grid.values, frames_per_cell)
    spec = spec_from_dict(meta["dataset_spec"]) if meta.get("dataset_spec") else None
    return Dataset(
        iq=iq,
        labels=labels.astype(np.int64),
        snr_db=snrs,
        frame_ids=np.arange(frame_count, dtype=np.int64),
        classes=classes,
        grid=grid,
        spec=spec,
    )


def spec_to_dict(spec: DatasetSpec) -> dict:
    d = asdict(spec)
    d["classes"] = [m.value for m in spec.classes]
    d["grid"] = [float(v) for v in spec.grid.values]
    return d


def spec_from_dict(d: dict) -> DatasetSpec:
    from .sigsynth import ImpairmentConfig, ModType

    return DatasetSpec(
        classes=tuple(ModType(c) for c in d["classes"]),
        grid=SnrGrid(tuple(float(v) for v in d["grid"])),
        frames_per_cell=int(d["frames_per_cell"]),
        sps=int(d["sps"]),
        frame_len=int(d["frame_len"]),
        impairments=ImpairmentConfig(**d["impairments"]),
        master_seed=int(d["master_seed"]),
    )


def save_model(model: Model, basename: str | Path) -> tuple[Path, Path]:
    """Write ``<basename>.params`` (float64 LE) and ``<basename>.model.json``."""
    base = str(basename)
    params_path = Path(base + ".params")
    meta_path = Path(base + ".model.json")
    arch = model.arch
    meta = {
        "format_version": FORMAT_VERSION,
        "arch": {
            "input_len": arch.input_len,
            "hidden": list(arch.hidden),
            "n_classes": arch.n_classes,
            "conv_front": asdict(arch.conv_front) if arch.conv_front else None,
        },
        "init_seed": int(model.init_seed),
        "n_params": int(model.params.size),
        "checksum_sha256": hashlib.sha256(model.params.astype("<f8").tobytes()).hexdigest(),
    }
    try:
        params_path.parent.mkdir(parents=True, exist_ok=True)
        params_path.write_bytes(model.params.astype("<f8").tobytes())
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"Cannot write model checkpoint: {exc}") from exc
    return params_path, meta_path


def load_model(basename: str | Path) -> Model:
    base = str(basename)
    params_path = Path(base + ".params")
    meta_path = Path(base + ".model.json")
    if not params_path.exists() or not meta_path.exists():
        raise OutputError(f"Missing checkpoint file(s): {params_path} / {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    conv = meta["arch"]["conv_front"]
    arch = ArchConfig(
        input_len=int(meta["arch"]["input_len"]),
        hidden=tuple(int(h) for h in meta["arch"]["hidden"]),
        n_classes=int(meta["arch"]["n_classes"]),
        conv_front=ConvFrontConfig(**conv) if conv else None,
    )
    raw = params_path.read_bytes()
    params = np.frombuffer(raw, dtype="<f8").copy()
    if params.size != int(meta["n_params"]):
        raise SidecarInconsistentError("Checkpoint parameter count mismatch")
    if hashlib.sha256(raw).hexdigest() != meta["checksum_sha256"]:
        raise ChecksumMismatchError("Checkpoint payload does not match sidecar checksum")
    return Model(arch=arch, params=params, init_seed=int(meta["init_seed"]))
