"""On-disk dataset formats: JSON manifest, CSV tabular rows, binary media.

Video files:  magic "EMBV1", u16le T,H,W,C, then T*H*W*C uint8, row-major.
Morph files:  magic "EMBM1", u16le T,H,W, u8 n_zona_classes, u8 n_stage_classes,
              three uint8 volumes (zona class ids, blastomere instance ids,
              pronuclei instance ids), T float32le fragmentation values,
              T uint8 stage ids.
All multi-byte integers little-endian, floats IEEE-754.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .types import (
    Dataset,
    DatasetSchema,
    EHRSchema,
    EHRVector,
    EmbryoSample,
    InterpretableFeatures,
    MorphFeatures,
    TreatmentCycle,
)

VIDEO_MAGIC = b"EMBV1"
MORPH_MAGIC = b"EMBM1"
SCHEMA_VERSION = 1


def write_video(path: Path, video: np.ndarray):
    video = np.ascontiguousarray(video, dtype=np.uint8)
    if video.ndim != 4:
        raise DataError(f"video must be (T,H,W,C), got shape {video.shape}")
    t, h, w, c = video.shape
    with open(path, "wb") as f:
        f.write(VIDEO_MAGIC)
        f.write(struct.pack("<HHHH", t, h, w, c))
        f.write(video.tobytes())


def read_video(path: Path, owner: str) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"embryo {owner}: video file {path} is missing") from None
    if raw[:5] != VIDEO_MAGIC:
        raise DataError(f"embryo {owner}: bad video magic in {path}")
    t, h, w, c = struct.unpack("<HHHH", raw[5:13])
    body = raw[13:]
    if len(body) != t * h * w * c:
        raise DataError(f"embryo {owner}: video payload size mismatch in {path}")
    return np.frombuffer(body, dtype=np.uint8).reshape(t, h, w, c).copy()


def write_morph(path: Path, morph: MorphFeatures):
    t, h, w = morph.zona_sem.shape
    with open(path, "wb") as f:
        f.write(MORPH_MAGIC)
        f.write(struct.pack("<HHHBB", t, h, w, morph.n_zona_classes, morph.n_stage_classes))
        for vol in (morph.zona_sem, morph.blast_inst, morph.pronuc_inst):
            f.write(np.ascontiguousarray(vol, dtype=np.uint8).tobytes())
        f.write(np.ascontiguousarray(morph.frag, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(morph.stage, dtype=np.uint8).tobytes())


def read_morph(path: Path, owner: str) -> MorphFeatures:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"embryo {owner}: morph file {path} is missing") from None
    if raw[:5] != MORPH_MAGIC:
        raise DataError(f"embryo {owner}: bad morph magic in {path}")
    t, h, w, kz, ks = struct.unpack("<HHHBB", raw[5:13])
    vol_n = t * h * w
    expect = 13 + 3 * vol_n + 4 * t + t
    if len(raw) != expect:
        raise DataError(f"embryo {owner}: morph payload size mismatch in {path}")
    off = 13
    vols = []
    for _ in range(3):
        vols.append(np.frombuffer(raw, dtype=np.uint8, count=vol_n, offset=off).reshape(t, h, w).copy())
        off += vol_n
    frag = np.frombuffer(raw, dtype="<f4", count=t, offset=off).copy()
    off += 4 * t
    stage = np.frombuffer(raw, dtype=np.uint8, count=t, offset=off).copy()
    return MorphFeatures(vols[0], vols[1], vols[2], frag, stage, kz, ks)


def write_ehr_csv(path: Path, ehr: EHRVector, schema: EHRSchema):
    names = list(schema.numeric) + list(schema.categorical_names)
    row = [repr(float(ehr.numeric[n])) for n in schema.numeric]
    row += [ehr.categorical[n] for n in schema.categorical_names]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(names)
        writer.writerow(row)


def read_ehr_csv(path: Path, schema: EHRSchema, owner: str) -> EHRVector:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError:
        raise DataError(f"treatment {owner}: EHR file {path} is missing") from None
    if len(rows) != 2:
        raise DataError(f"treatment {owner}: EHR file must have a header and one data row")
    header, data = rows
    if header != list(schema.numeric) + list(schema.categorical_names):
        raise DataError(f"treatment {owner}: EHR columns do not match the declared schema")
    values = dict(zip(header, data))
    return EHRVector(
        numeric={n: float(values[n]) for n in schema.numeric},
        categorical={n: values[n] for n in schema.categorical_names},
    )


def write_interp_csv(path: Path, feats: InterpretableFeatures, names: tuple[str, ...]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(names))
        writer.writerow([repr(float(feats.values[n])) for n in names])


def read_interp_csv(path: Path, names: tuple[str, ...], owner: str) -> InterpretableFeatures:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError:
        raise DataError(f"embryo {owner}: interp file {path} is missing") from None
    if len(rows) != 2 or rows[0] != list(names):
        raise DataError(f"embryo {owner}: interp columns do not match the declared schema")
    return InterpretableFeatures({n: float(v) for n, v in zip(rows[0], rows[1])})


def _schema_to_json(schema: DatasetSchema) -> dict:
    return {
        "numeric": list(schema.ehr.numeric),
        "categorical": [{"name": n, "vocab": list(v)} for n, v in schema.ehr.categorical],
    }


def _schema_from_json(obj: dict) -> EHRSchema:
    return EHRSchema(
        numeric=tuple(obj["numeric"]),
        categorical=tuple((c["name"], tuple(c["vocab"])) for c in obj["categorical"]),
    )


def write_dataset(dataset: Dataset, root: Path) -> Path:
    """Write manifest plus per-treatment files; byte-stable for identical input."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "schema_version": SCHEMA_VERSION,
        "ehr_schema": _schema_to_json(dataset.schema),
        "interp_schema": list(dataset.schema.interp),
        "treatments": [],
    }
    for cycle in dataset.cycles:
        tdir = root / "treatments" / cycle.treatment_id
        tdir.mkdir(parents=True, exist_ok=True)
        ehr_file = f"treatments/{cycle.treatment_id}/ehr.csv"
        write_ehr_csv(root / ehr_file, cycle.ehr, dataset.schema.ehr)
        entry = {
            "treatment_id": cycle.treatment_id,
            "ehr_file": ehr_file,
            "n_transferred": cycle.n_transferred,
            "n_births": cycle.n_births,
            "embryos": [],
        }
        for emb in cycle.embryos:
            video_file = f"treatments/{cycle.treatment_id}/{emb.embryo_id}.video"
            write_video(root / video_file, emb.video)
            emb_entry = {
                "embryo_id": emb.embryo_id,
                "video_file": video_file,
                "transferred": emb.transferred,
            }
            if emb.morph is not None:
                morph_file = f"treatments/{cycle.treatment_id}/{emb.embryo_id}.morph"
                write_morph(root / morph_file, emb.morph)
                emb_entry["morph_file"] = morph_file
            if emb.interp is not None:
                interp_file = f"treatments/{cycle.treatment_id}/{emb.embryo_id}.interp.csv"
                write_interp_csv(root / interp_file, emb.interp, dataset.schema.interp)
                emb_entry["interp_file"] = interp_file
            entry["embryos"].append(emb_entry)
        manifest["treatments"].append(entry)
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return root


def load_dataset(root: Path) -> Dataset:
    """Materialize and validate every treatment cycle referenced by the manifest."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DataError(f"manifest {manifest_path} is missing") from None
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {manifest_path} is not valid JSON: {e}") from None
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported schema_version {manifest.get('schema_version')}")
    schema = DatasetSchema(
        ehr=_schema_from_json(manifest["ehr_schema"]),
        interp=tuple(manifest["interp_schema"]),
    )
    cycles = []
    for entry in manifest["treatments"]:
        tid = entry["treatment_id"]
        ehr = read_ehr_csv(root / entry["ehr_file"], schema.ehr, tid)
        n_transferred = int(entry["n_transferred"])
        n_births = int(entry["n_births"])
        embryos = []
        for emb_entry in entry["embryos"]:
            eid = emb_entry["embryo_id"]
            video = read_video(root / emb_entry["video_file"], eid)
            morph = None
            if emb_entry.get("morph_file"):
                morph = read_morph(root / emb_entry["morph_file"], eid)
            interp = None
            if emb_entry.get("interp_file"):
                interp = read_interp_csv(root / emb_entry["interp_file"], schema.interp, eid)
            transferred = bool(emb_entry["transferred"])
            label = n_births / n_transferred if transferred else None
            embryos.append(
                EmbryoSample(
                    embryo_id=eid,
                    video=video,
                    transferred=transferred,
                    morph=morph,
                    interp=interp,
                    label=label,
                )
            )
        cycles.append(
            TreatmentCycle(
                treatment_id=tid,
                ehr=ehr,
                embryos=embryos,
                n_transferred=n_transferred,
                n_births=n_births,
            )
        )
    dataset = Dataset(schema=schema, cycles=cycles)
    dataset.validate()
    return dataset
