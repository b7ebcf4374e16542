"""CSV/JSON writers.  Floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json

import numpy as np

from . import __version__


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, numpy scalars converted."""
    return json.dumps(_clean(obj), sort_keys=True, indent=1)


def config_hash(config) -> str:
    return hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest()[:16]


def metadata(config, seed=None) -> dict:
    """Run metadata; the wall-clock part lives under the single key ``wallclock``."""
    return {
        "version": __version__,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
        "wallclock": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }


def strip_wallclock(doc: dict) -> dict:
    doc = dict(doc)
    if "metadata" in doc:
        doc["metadata"] = {k: v for k, v in doc["metadata"].items() if k != "wallclock"}
    return doc


def ensemble_csv(values: np.ndarray, sites, times, meta: dict | None = None) -> str:
    """Long-format CSV with columns rep, site, t, value; metadata as ``#`` comment lines."""
    buf = io.StringIO()
    if meta:
        for line in json.dumps(_clean(meta), sort_keys=True).splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "site", "t", "value"])
    R = values.shape[0]
    tstr = [fmt(t) for t in times]
    for r in range(R):
        for a, s in enumerate(sites):
            for q, ts in enumerate(tstr):
                w.writerow([r, s, ts, fmt(values[r, a, q])])
    return buf.getvalue()


def read_ensemble_csv(text: str) -> tuple[np.ndarray, list[int], list[float]]:
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    data = list(csv.reader(rows[1:]))
    reps = sorted({int(r[0]) for r in data})
    sites = sorted({int(r[1]) for r in data})
    times = sorted({float(r[2]) for r in data})
    out = np.empty((len(reps), len(sites), len(times)))
    si = {s: i for i, s in enumerate(sites)}
    ti = {t: i for i, t in enumerate(times)}
    for r, s, t, v in data:
        out[int(r), si[int(s)], ti[float(t)]] = float(v)
    return out, sites, times


def moments_summary(values: np.ndarray, sites, times) -> dict:
    flat = values.reshape(values.shape[0], -1)
    mean = flat.mean(axis=0)
    second = (flat**2).mean(axis=0)
    labels = [f"{s}:{fmt(t)}" for s in sites for t in times]
    return {
        "R": int(values.shape[0]),
        "labels": labels,
        "mean": mean,
        "second_moment": second,
        "covariance": np.cov(flat, rowvar=False, ddof=1).reshape(len(labels), len(labels))
        if values.shape[0] > 1 else None,
    }
