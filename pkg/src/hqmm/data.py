"""
Dataset generation, reshaping and ingestion.
"""
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import _rng
from .errors import InputError, ParseError, ValidityError
from .models import random_hmm, sample_sequence

log = logging.getLogger(__name__)

SPLICE_ALPHABET = {"A": 0, "C": 1, "G": 2, "T": 3}
SPLICE_LABELS = ("EI", "IE", "N")
# complete UCI file: raw label counts, and counts once sequences containing
# ambiguous bases are dropped
SPLICE_RAW_COUNTS = {"EI": 767, "IE": 768, "N": 1655}
SPLICE_CLEAN_COUNTS = {"EI": 762, "IE": 765, "N": 1648}


@dataclass
class SequenceDataset:
    """Symbol sequences over ``range(s)`` with optional labels and provenance."""

    s: int
    sequences: list
    labels: list = None
    provenance: dict = field(default_factory=dict)
    burn_in: int = 0

    def validate(self):
        for i, q in enumerate(self.sequences):
            q = np.asarray(q)
            if q.size and (q.min() < 0 or q.max() >= self.s):
                raise ValidityError(f"sequence {i} has symbols outside [0, {self.s})")
        if self.labels is not None and len(self.labels) != len(self.sequences):
            raise ValidityError("labels must cover every sequence")
        return self

    def __len__(self):
        return len(self.sequences)

    def subset(self, indices):
        idx = list(indices)
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return replace(self, sequences=[self.sequences[i] for i in idx], labels=labels)


_RANDOM_HMM = re.compile(r"random-hmm\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(-?\d+)\s*\)")


def parse_generator(spec):
    """Resolve ``"random-hmm(n,s,seed)"`` or pass a model object through."""
    if not isinstance(spec, str):
        if not hasattr(spec, "symbol_probabilities"):
            raise ValidityError(f"{spec!r} is not a model")
        return spec, {"generator": getattr(spec, "family", type(spec).__name__)}
    m = _RANDOM_HMM.fullmatch(spec.strip())
    if not m:
        raise ValidityError(f"unrecognized generator {spec!r}; expected random-hmm(n,s,seed)")
    n, s, seed = (int(g) for g in m.groups())
    return random_hmm(n, s, seed), {"generator": spec}


def generate_dataset(generator, num_sequences, length, seed=None):
    """Sample ``num_sequences`` independent sequences from a generating model."""
    model, prov = parse_generator(generator)
    model.validate()
    rng = _rng(seed)
    seqs = [sample_sequence(model, length, rng) for _ in range(num_sequences)]
    prov.update({"seed": seed, "num_sequences": num_sequences, "length": length})
    return SequenceDataset(model.s, seqs, None, prov)


def generate_protocol(generator, seed=0, train=20, validation=10, test=0, length=3000):
    """Train/validation(/test) datasets drawn from one generator.

    The defaults give 20 training and 10 validation sequences of length 3000.
    Each split uses its own child seed.
    """
    seeds = np.random.SeedSequence(seed).spawn(3)
    out = [
        generate_dataset(generator, count, length, np.random.default_rng(ss))
        for count, ss in zip((train, validation, test), seeds)
    ]
    for name, ds in zip(("train", "validation", "test"), out):
        ds.provenance.update({"split": name, "protocol_seed": seed})
    return tuple(out) if test else tuple(out[:2])


def reshape_sequences(dataset, sub_length, burn_in=0):
    """Cut every sequence into disjoint consecutive pieces of ``sub_length``.

    A trailing remainder shorter than ``sub_length`` is discarded.  The
    burn-in is stored on the returned dataset.
    """
    if sub_length <= burn_in:
        raise InputError(f"sub_length {sub_length} must exceed burn_in {burn_in}")
    seqs, labels = [], []
    for i, q in enumerate(dataset.sequences):
        q = np.asarray(q)
        if sub_length > q.size:
            raise InputError(f"sub_length {sub_length} exceeds length {q.size} of sequence {i}")
        for k in range(q.size // sub_length):
            seqs.append(q[k * sub_length : (k + 1) * sub_length].copy())
            if dataset.labels is not None:
                labels.append(dataset.labels[i])
    prov = dict(dataset.provenance, reshape={"sub_length": sub_length, "burn_in": burn_in})
    return SequenceDataset(dataset.s, seqs, labels if dataset.labels is not None else None, prov, burn_in)


def load_splice(path, ambiguous="drop-seqs"):
    """Read the UCI splice-junction file (``label, name, sequence`` per line).

    Parameters
    ----------
    ambiguous : {"drop-seqs", "strip-chars"}
        Sequences containing characters outside ``ACGT`` are either dropped
        or have those characters removed.

    Returns
    -------
    dataset : SequenceDataset
        ``s = 4`` with A, C, G, T mapped to 0..3.  ``provenance`` holds the
        per-sequence filter log, label counts and, when the complete file is
        read, whether the counts match the published ones.
    """
    if ambiguous not in ("drop-seqs", "strip-chars"):
        raise ValueError(f"unknown ambiguity policy {ambiguous!r}")
    path = Path(path)
    seqs, labels, filter_log = [], [], []
    raw = Counter()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ParseError("expected 'label, name, sequence'", line=lineno)
        label, name, bases = parts
        if label not in SPLICE_LABELS:
            raise ParseError(f"unknown label {label!r}", line=lineno)
        raw[label] += 1
        bases = bases.upper()
        bad = sorted({ch for ch in bases if ch not in SPLICE_ALPHABET})
        if bad:
            filter_log.append({"line": lineno, "name": name, "removed": bad, "action": ambiguous})
            if ambiguous == "drop-seqs":
                continue
        seqs.append(np.array([SPLICE_ALPHABET[ch] for ch in bases if ch in SPLICE_ALPHABET], dtype=np.int64))
        labels.append(label)
    counts = dict(Counter(labels))
    prov = {
        "source": str(path),
        "ambiguous": ambiguous,
        "filter_log": filter_log,
        "raw_counts": dict(raw),
        "label_counts": counts,
    }
    if dict(raw) == SPLICE_RAW_COUNTS:
        expected = SPLICE_CLEAN_COUNTS if ambiguous == "drop-seqs" else SPLICE_RAW_COUNTS
        prov["complete_file"] = True
        prov["counts_match_published"] = counts == expected
        if counts != expected:
            log.warning("splice label counts %s differ from expected %s", counts, expected)
    return SequenceDataset(4, seqs, labels, prov).validate()
