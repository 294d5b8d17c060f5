"""Binary model checkpoints with per-block checksums.

Layout (all integers little-endian):

    magic      4 bytes  b"TDCK"
    version    uint32
    header_len uint64
    header     UTF-8 JSON of header_len bytes
    blocks     raw array bytes, concatenated in manifest order

The header carries the model fingerprint, config, ontology, vocabularies,
and a manifest entry per array (name, dtype, shape, byte length, CRC32).
Model parameters and optional optimizer-state arrays live in the same
block stream. Writes go to a temp file in the target directory and are
renamed into place, so readers never see a partial checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .errors import CheckpointError
from .model import DialogueModel, ModelConfig
from .ontology import Ontology
from .corpus import Vocab

MAGIC = b"TDCK"
FORMAT_VERSION = 1


def _manifest_entry(name: str, arr: np.ndarray) -> tuple[dict, bytes]:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    raw = arr.tobytes()
    return (
        {
            "name": name,
            "dtype": str(arr.dtype),
            "shape": list(arr.shape),
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        },
        raw,
    )


class Checkpoint:
    """Parsed checkpoint: header metadata plus named arrays."""

    def __init__(self, fingerprint: str, config: dict, ontology: dict, src_vocab: list,
                 res_vocab: list, params: dict, optimizer: dict = None, best_val_loss: float = None):
        self.fingerprint = fingerprint
        self.config = config
        self.ontology = ontology
        self.src_vocab = src_vocab
        self.res_vocab = res_vocab
        self.params = params
        self.optimizer = optimizer
        self.best_val_loss = best_val_loss

    def build_model(self) -> DialogueModel:
        """Reconstruct the model this checkpoint was saved from."""
        model = DialogueModel(
            ModelConfig.from_dict(self.config),
            Ontology.from_dict(self.ontology),
            Vocab(self.src_vocab),
            Vocab(self.res_vocab),
        )
        model.store.load_arrays(self.params)
        if model.fingerprint() != self.fingerprint:
            raise CheckpointError("checkpoint fingerprint does not match its own header")
        return model

    def load_into(self, model: DialogueModel, optimizer=None):
        """Load arrays into an existing model (and optimizer), refusing mismatches."""
        if model.fingerprint() != self.fingerprint:
            raise CheckpointError(
                "checkpoint fingerprint does not match the target model; "
                "config, ontology, or vocabulary differ"
            )
        model.store.load_arrays(self.params)
        if optimizer is not None:
            if self.optimizer is None:
                raise CheckpointError("checkpoint holds no optimizer state")
            optimizer.load_arrays(self.optimizer)


def save_checkpoint(path: str, model: DialogueModel, optimizer=None, best_val_loss: float = None):
    """Write the model (and optional optimizer state) atomically to path."""
    manifest, blobs = [], []
    for name, arr in sorted(model.store.state_arrays().items()):
        entry, raw = _manifest_entry(name, arr)
        entry["kind"] = "param"
        manifest.append(entry)
        blobs.append(raw)
    has_opt = optimizer is not None
    if has_opt:
        for name, arr in sorted(optimizer.state_arrays().items()):
            entry, raw = _manifest_entry(name, arr)
            entry["kind"] = "opt"
            manifest.append(entry)
            blobs.append(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "fingerprint": model.fingerprint(),
        "config": model.cfg.to_dict(),
        "ontology": model.ontology.to_dict(),
        "src_vocab": model.src_vocab.to_list(),
        "res_vocab": model.res_vocab.to_list(),
        "has_optimizer": has_opt,
        "best_val_loss": best_val_loss,
        "manifest": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(struct.pack("<Q", len(header_bytes)))
            f.write(header_bytes)
            for raw in blobs:
                f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    """Read and verify a checkpoint file."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header_end = 16 + header_len
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {e}") from e

    params: dict = {}
    opt: dict = {}
    offset = header_end
    for entry in header["manifest"]:
        nbytes = entry["nbytes"]
        raw = blob[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"checkpoint {path} truncated at block {entry['name']!r}")
        if zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointError(f"checksum mismatch in block {entry['name']!r} of {path}")
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        (opt if entry["kind"] == "opt" else params)[entry["name"]] = arr
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"checkpoint {path} has {len(blob) - offset} trailing bytes")

    return Checkpoint(
        fingerprint=header["fingerprint"],
        config=header["config"],
        ontology=header["ontology"],
        src_vocab=header["src_vocab"],
        res_vocab=header["res_vocab"],
        params=params,
        optimizer=opt if header["has_optimizer"] else None,
        best_val_loss=header["best_val_loss"],
    )
