"""Model (JSON) and event (CSV) files, plus small vector and table helpers.

Numbers in CSV output use 17 significant digits so a write/read round trip
is exact; JSON floats use Python's shortest round-trip representation.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .model import Cascade, EventLog, HawkesNetwork, check_intensity

EVENT_COLUMNS = ("cascade_id", "user_id", "time")
LABEL_COLUMNS = ("generation", "parent_idx")


def fmt(x) -> str:
    """Round-trip decimal text for a float (17 significant digits)."""
    return format(float(x), ".17g")


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def write_model(path, net: HawkesNetwork, lambda0) -> None:
    lam = check_intensity(lambda0, net.m)
    rows, cols, vals = net.triplets()
    doc = {
        "m": net.m,
        "omega": net.omega,
        "lambda0": [float(x) for x in lam],
        "A": [[int(r), int(c), float(v)] for r, c, v in zip(rows, cols, vals)],
    }
    with _open_out(path) as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_model(path):
    """Returns ``(net, lambda0)``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    missing = [k for k in ("m", "omega", "lambda0", "A") if k not in doc]
    if missing:
        raise ValidationError(f"{path}: missing keys {missing}")
    m = doc["m"]
    if not isinstance(m, int) or m < 1:
        raise ValidationError(f"{path}: m must be a positive integer")
    for i, trip in enumerate(doc["A"]):
        if not (isinstance(trip, list) and len(trip) == 3):
            raise ValidationError(f"{path}: A entry {i} must be [row, col, value]")
    net = HawkesNetwork.from_triplets(m, doc["A"], doc["omega"])
    return net, check_intensity(doc["lambda0"], m)


def write_events(path, log: EventLog) -> None:
    """CSV with one row per event; label columns only for labeled logs."""
    labeled = len(log) > 0 and log.labeled
    header = EVENT_COLUMNS + (LABEL_COLUMNS if labeled else ())
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for cid, c in enumerate(log):
            for i in range(len(c)):
                row = [cid, int(c.users[i]), fmt(c.times[i])]
                if labeled:
                    row += [int(c.generation[i]), int(c.parent[i])]
                w.writerow(row)


def read_events(path, T=None, m=None, n_cascades=None) -> EventLog:
    """Read an events CSV into an :class:`EventLog`.

    ``T`` is the observation horizon of every cascade (default: the latest
    event time). Cascade ids index cascades; ids that never appear become
    empty cascades up to ``n_cascades`` (default ``max id + 1``).
    """
    path = Path(path)
    per = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}:1: missing header")
        header = [h.strip() for h in header]
        if tuple(header) not in (EVENT_COLUMNS, EVENT_COLUMNS + LABEL_COLUMNS):
            raise ValidationError(f"{path}:1: header must be {','.join(EVENT_COLUMNS)}[,{','.join(LABEL_COLUMNS)}]")
        labeled = len(header) == 5
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                cid, user = int(row[0]), int(row[1])
                t = float(row[2])
                lab = (int(row[3]), int(row[4])) if labeled else None
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed number") from None
            if cid < 0 or user < 0 or not np.isfinite(t) or t < 0:
                raise ValidationError(f"{path}:{lineno}: ids and time must be nonnegative")
            if m is not None and user >= m:
                raise ValidationError(f"{path}:{lineno}: user {user} outside 0..{m - 1}")
            per.setdefault(cid, []).append((t, user, lab, lineno))
    n = n_cascades if n_cascades is not None else (max(per) + 1 if per else 0)
    if per and max(per) >= n:
        raise ValidationError(f"{path}: cascade id {max(per)} >= {n}")
    if T is None:
        T = max((e[0] for evs in per.values() for e in evs), default=1.0)
        T = T if T > 0 else 1.0
    cascades = []
    for cid in range(n):
        evs = per.get(cid, [])
        times = [e[0] for e in evs]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValidationError(f"{path}:{evs[0][3]}: times of cascade {cid} are not sorted")
        if any(t > T for t in times):
            raise ValidationError(f"{path}: cascade {cid} has events after horizon {T}")
        users = [e[1] for e in evs]
        if labeled:
            gen = [e[2][0] for e in evs]
            par = [e[2][1] for e in evs]
            cascades.append(Cascade(T, users, times, gen, par))
        else:
            cascades.append(Cascade(T, users, times))
    log = EventLog(tuple(cascades), m)
    for c in log:
        c.validate(m)
    return log


def read_vector(path, m=None, name="vector") -> np.ndarray:
    """Numbers from a JSON list or a text file separated by commas/whitespace."""
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip()
    try:
        vals = json.loads(text) if text.startswith("[") else [float(x) for x in text.replace(",", " ").split()]
        vec = np.asarray(vals, dtype=float).ravel()
    except (ValueError, TypeError):
        raise ValidationError(f"{path}: could not parse {name}") from None
    if m is not None and vec.size != m:
        raise ValidationError(f"{path}: {name} has length {vec.size}, expected {m}")
    return vec


def write_table(path, header, rows) -> None:
    """CSV with floats at full precision; ``None`` becomes an empty field."""
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if x is None else fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def write_json(path, doc) -> None:
    with _open_out(path) as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
