"""File formats: atomic writes, sample-set CSV and packed-binary codecs, CSV tables."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .model import SampleSet

SAMPLES_CSV_MAGIC = "# annealtemp-samples v1"
SAMPLES_BIN_MAGIC = b"ATSAMPB1"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def fmt_float(x) -> str:
    """17 significant digits: lossless for IEEE doubles."""
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- sample sets -----------------------------------------------------------


def _header(samples: SampleSet) -> dict:
    return {
        "model_ref": samples.model_ref,
        "n_spins": samples.n_spins,
        "n_samples": len(samples),
        "weighted": samples.weights is not None,
        "meta": samples.meta,
    }


def write_samples_csv(path, samples: SampleSet) -> None:
    buf = io.StringIO()
    buf.write(SAMPLES_CSV_MAGIC + "\n")
    buf.write("# " + json.dumps(_header(samples), sort_keys=True) + "\n")
    cols = [f"s{i}" for i in range(samples.n_spins)]
    if samples.weights is not None:
        cols.append("weight")
    buf.write(",".join(cols) + "\n")
    for k, row in enumerate(samples.states):
        line = ",".join("1" if v > 0 else "-1" for v in row)
        if samples.weights is not None:
            line += "," + fmt_float(samples.weights[k])
        buf.write(line + "\n")
    atomic_write_text(path, buf.getvalue())


def read_samples_csv(path) -> SampleSet:
    with open(path) as fh:
        magic = fh.readline().rstrip("\n")
        if magic != SAMPLES_CSV_MAGIC:
            raise ValueError(f"{path}: not a sample CSV (bad magic line)")
        header = json.loads(fh.readline()[1:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = header["n_spins"]
    if data.shape != (header["n_samples"], n + int(header["weighted"])):
        raise ValueError(f"{path}: body shape {data.shape} does not match header")
    weights = data[:, n] if header["weighted"] else None
    return SampleSet(data[:, :n].astype(np.int8), header["model_ref"], header["meta"], weights)


def write_samples_binary(path, samples: SampleSet) -> None:
    """Header + one bit per spin (1 = +1), each row padded to a byte boundary."""
    head = json.dumps(_header(samples), sort_keys=True).encode()
    packed = np.packbits(samples.states > 0, axis=1)
    parts = [SAMPLES_BIN_MAGIC, struct.pack("<I", len(head)), head, packed.tobytes()]
    if samples.weights is not None:
        parts.append(samples.weights.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_samples_binary(path) -> SampleSet:
    raw = Path(path).read_bytes()
    if raw[: len(SAMPLES_BIN_MAGIC)] != SAMPLES_BIN_MAGIC:
        raise ValueError(f"{path}: not a packed sample file")
    off = len(SAMPLES_BIN_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen])
    off += hlen
    n, m = header["n_spins"], header["n_samples"]
    row_bytes = (n + 7) // 8
    body = np.frombuffer(raw, dtype=np.uint8, count=m * row_bytes, offset=off).reshape(m, row_bytes)
    bits = np.unpackbits(body, axis=1, count=n)
    states = np.where(bits > 0, 1, -1).astype(np.int8)
    weights = None
    if header["weighted"]:
        weights = np.frombuffer(raw, dtype="<f8", count=m, offset=off + m * row_bytes).copy()
    return SampleSet(states, header["model_ref"], header["meta"], weights)


def write_samples(path, samples: SampleSet) -> None:
    if str(path).endswith(".csv"):
        write_samples_csv(path, samples)
    else:
        write_samples_binary(path, samples)


def read_samples(path) -> SampleSet:
    with open(path, "rb") as fh:
        start = fh.read(len(SAMPLES_BIN_MAGIC))
    if start == SAMPLES_BIN_MAGIC:
        return read_samples_binary(path)
    return read_samples_csv(path)
