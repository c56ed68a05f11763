"""Model bundle: everything needed to sample again, stored as one JSON document.

Layout::

    {"magic": "tabgan-bundle", "version": 1, "sha256": <hex of canonical payload>, "payload": {...}}

Arrays inside the payload are ``{"dtype": "<f8", "shape": [...], "b64": ...}``
(little-endian float64). The checksum covers the payload serialized with sorted
keys and compact separators.
"""
from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import TabularEncoder
from .errors import ChecksumMismatch, IoFailure, VersionMismatch
from .schema import TableSchema

MAGIC = "tabgan-bundle"
VERSION = 1


def _sizes(params: list[np.ndarray]) -> tuple[int, ...]:
    ws = params[0::2]
    return (ws[0].shape[0], *(w.shape[1] for w in ws)) if ws else ()


@dataclass
class ModelBundle:
    schema: TableSchema
    encoder: TabularEncoder
    sampler_counts: list[np.ndarray]
    generator: list[np.ndarray]
    discriminator: list[np.ndarray]
    auxiliary: list[np.ndarray]
    config: dict
    ledger: dict | None
    seed: int

    @property
    def generator_sizes(self) -> tuple[int, ...]:
        return _sizes(self.generator)

    @property
    def discriminator_sizes(self) -> tuple[int, ...]:
        return _sizes(self.discriminator)

    @property
    def auxiliary_sizes(self) -> tuple[int, ...]:
        return _sizes(self.auxiliary)


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "b64": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["b64"], validate=True)
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).astype(np.float64)


def _payload(b: ModelBundle) -> dict:
    return {
        "schema": b.schema.to_dict(),
        "encoder": b.encoder.to_dict(),
        "sampler_counts": [np.asarray(c).astype(int).tolist() for c in b.sampler_counts],
        "generator": [encode_array(p) for p in b.generator],
        "discriminator": [encode_array(p) for p in b.discriminator],
        "auxiliary": [encode_array(p) for p in b.auxiliary],
        "config": b.config,
        "ledger": b.ledger,
        "seed": b.seed,
    }


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def dumps(bundle: ModelBundle) -> str:
    payload = _payload(bundle)
    digest = hashlib.sha256(_canonical(payload)).hexdigest()
    doc = {"magic": MAGIC, "version": VERSION, "sha256": digest, "payload": payload}
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        if MAGIC not in text[:64]:
            raise VersionMismatch("unrecognized bundle header") from exc
        raise ChecksumMismatch(f"bundle is truncated or corrupt: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MAGIC:
        raise VersionMismatch("not a model bundle (magic header mismatch)")
    if doc.get("version") != VERSION:
        raise VersionMismatch(f"bundle version {doc.get('version')!r}, expected {VERSION}")
    payload = doc.get("payload")
    if not isinstance(payload, dict) or hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("sha256"):
        raise ChecksumMismatch("bundle checksum does not match its contents")
    schema = TableSchema.from_dict(payload["schema"])
    return ModelBundle(
        schema=schema,
        encoder=TabularEncoder.from_dict(schema, payload["encoder"]),
        sampler_counts=[np.asarray(c, dtype=np.int64) for c in payload["sampler_counts"]],
        generator=[decode_array(p) for p in payload["generator"]],
        discriminator=[decode_array(p) for p in payload["discriminator"]],
        auxiliary=[decode_array(p) for p in payload["auxiliary"]],
        config=payload["config"],
        ledger=payload["ledger"],
        seed=payload["seed"],
    )


def save_bundle(bundle: ModelBundle, path) -> None:
    try:
        Path(path).write_text(dumps(bundle), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write bundle {path}: {exc}") from exc


def load_bundle(path) -> ModelBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read bundle {path}: {exc}") from exc
    return loads(text)
