"""
File formats.

* Models and training runs: JSON.  Every numeric tensor is a nested list
  whose leaves are ``[re, im]`` pairs; Python's shortest-repr float
  formatting makes the round trip bit-exact.
* Datasets: one sequence per line of space-separated integers, optionally
  prefixed by a ``label:`` token, plus a ``<file>.json`` metadata sidecar.
* Configs: flat ``key = value`` lines named after ``TrainingConfig`` fields.
* Trajectories: CSV.
"""
import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidityError
from .models import MODEL_TYPES

MODEL_PARAMS = {
    "hmm": ("A", "C", "x0"),
    "standard_oom": ("T", "x0"),
    "general_oom": ("tau", "x0", "sigma"),
    "noom": ("phi", "v0"),
    "khqmm": ("kraus", "rho0"),
    "lhqmm": ("L", "rho0_vec"),
}
REAL_FAMILIES = {"hmm", "standard_oom", "noom"}


def encode_array(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_array(data, real=False):
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ParseError("complex arrays must have [re, im] leaves")
    if real:
        if np.any(arr[..., 1] != 0):
            raise ValidityError("real-valued parameter has a nonzero imaginary part")
        return arr[..., 0].copy()
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_dict(model):
    family = model.family
    out = {"family": family, "n": int(model.n), "s": int(model.s)}
    if family == "khqmm":
        out["w"] = int(model.w)
    out["params"] = {name: encode_array(getattr(model, name)) for name in MODEL_PARAMS[family]}
    return out


def model_from_dict(d):
    family = d.get("family")
    if family not in MODEL_TYPES:
        raise ParseError(f"unknown model family {family!r}")
    real = family in REAL_FAMILIES
    params = {k: decode_array(v, real) for k, v in d["params"].items()}
    return MODEL_TYPES[family](**params)


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


def save_dataset(dataset, path):
    path = Path(path)
    lines = []
    labels = dataset.labels
    for i, seq in enumerate(dataset.sequences):
        body = " ".join(str(int(y)) for y in seq)
        lines.append(f"{labels[i]}: {body}" if labels is not None else body)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    meta = {"s": int(dataset.s), "burn_in": dataset.burn_in, "provenance": dataset.provenance}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def load_dataset(path, s=None):
    from .data import SequenceDataset

    path = Path(path)
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    seqs, labels = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        label = None
        if ":" in line:
            label, line = line.split(":", 1)
            label = label.strip()
        try:
            seqs.append(np.array([int(tok) for tok in line.split()], dtype=np.int64))
        except ValueError as err:
            raise ParseError(str(err), line=lineno) from None
        labels.append(label)
    has_labels = any(l is not None for l in labels)
    if has_labels and any(l is None for l in labels):
        raise ParseError("either every sequence or none must carry a label")
    s = s or meta.get("s") or (1 + max((int(q.max()) for q in seqs if q.size), default=0))
    provenance = meta.get("provenance", {"source": str(path)})
    return SequenceDataset(
        s, seqs, labels if has_labels else None, provenance, meta.get("burn_in", 0)
    ).validate()


# --------------------------------------------------------------------------
# Configs, runs, trajectories
# --------------------------------------------------------------------------


def save_config(config, path):
    lines = [f"{k} = {v}" for k, v in asdict(config).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_value(raw, default):
    raw = raw.strip()
    if raw == "None":
        return None
    if isinstance(default, str):
        return raw
    if isinstance(default, float):
        return float(raw)
    return int(raw)


def load_config(path):
    from .learning import TrainingConfig

    defaults = TrainingConfig()
    names = {f.name for f in fields(TrainingConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in names:
            raise ParseError(f"unknown config key {key!r}", line=lineno)
        default = getattr(defaults, key)
        values[key] = _parse_value(raw, default if default is not None else 0)
    return TrainingConfig(**values).validate()


def save_run(run, path, provenance=None):
    d = run.to_dict()
    if provenance:
        d["provenance"] = provenance
    Path(path).write_text(json.dumps(d))


def load_run(path):
    from .learning import TrainingRun

    return TrainingRun.from_dict(json.loads(Path(path).read_text()))


def write_trajectory_csv(run, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "validation_da", "seconds"])
        for row in run.trajectory():
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_trajectory_csv(path):
    """``(seconds, da)`` pairs from either a run trajectory or a two-column file."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ParseError(f"{path}: empty trajectory")
    da_key = "da" if "da" in rows[0] else "validation_da"
    try:
        return np.array([[float(r["seconds"]), float(r[da_key])] for r in rows])
    except KeyError as err:
        raise ParseError(f"{path}: missing column {err}") from None
