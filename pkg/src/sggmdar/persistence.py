"""Reading and writing data, truth, chain and report files.

Floats go through ``repr`` (JSON) or ``%.17g`` (CSV) so every file
round-trips bit for bit.  Precision matrices are stored as upper triangles.
"""

from dataclasses import dataclass, field
import csv
import datetime as _dt
import json
import os
import tempfile

import numpy as np

from . import __version__
from .errors import DataError
from .model import Dataset
from .sampler import Chain
from .simulation import Truth

CHAIN_FORMAT = "sggmdar-chain/1"


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj):
    return json.dumps(obj, default=_default, allow_nan=True)


def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serialisable: {type(x)}")


def fmt(x):
    return "%.17g" % x


# --- data ------------------------------------------------------------------


def write_data_csv(path, y):
    y = np.asarray(y, dtype=float)
    lines = [",".join(f"y{i + 1}" for i in range(y.shape[1]))]
    lines += [",".join(fmt(v) for v in row) for row in y]
    atomic_write(path, "\n".join(lines) + "\n")


def read_data_csv(path):
    """Parse a header-plus-rows CSV of reals; errors carry 1-based row/column."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(str(exc), path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file", path) from None
        D = len(header)
        rows = []
        for r, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != D:
                raise DataError(f"expected {D} fields, found {len(rec)}", path, row=r)
            vals = []
            for c, cell in enumerate(rec, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"not a number: {cell!r}", path, row=r, column=c) from None
                if not np.isfinite(v):
                    raise DataError(f"non-finite value {cell!r}", path, row=r, column=c)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError("no data rows", path)
    return Dataset(np.array(rows))


# --- truth -----------------------------------------------------------------


def truth_to_dict(truth):
    return {
        "gamma": truth.gamma, "phi": truth.phi, "pi": truth.pi, "mu": truth.mu,
        "omega": truth.omega, "graph_kinds": list(truth.graph_kinds),
        "scales": truth.scales, "extra": truth.extra,
    }


def write_truth(path, truth):
    atomic_write(path, dumps(truth_to_dict(truth)) + "\n")


def read_truth(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(str(exc), path) from None
    scales = None if d.get("scales") is None else np.asarray(d["scales"], dtype=float)
    return Truth(
        gamma=np.asarray(d["gamma"], dtype=np.int64), phi=np.asarray(d["phi"], dtype=float),
        pi=np.asarray(d["pi"], dtype=float), mu=np.asarray(d["mu"], dtype=float),
        omega=np.asarray(d["omega"], dtype=float), graph_kinds=tuple(d["graph_kinds"]),
        scales=scales, extra=d.get("extra", {}),
    )


# --- manifest --------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int = None
    version: str = __version__
    started: str = ""
    finished: str = ""
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def start(self):
        self.started = now()
        return self

    def finish(self):
        self.finished = now()
        return self

    def as_dict(self):
        return dict(self.__dict__)


def now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, manifest):
    atomic_write(path, json.dumps(manifest.as_dict(), indent=2, default=_default) + "\n")


def manifest_path(out):
    return f"{out}.manifest.json"


# --- chains ----------------------------------------------------------------


def _upper(m):
    return m[np.triu_indices(m.shape[-1])]


def _from_upper(vals, D):
    m = np.zeros((D, D))
    m[np.triu_indices(D)] = vals
    return m + np.triu(m, 1).T


def chain_records(chain, header):
    """Yield JSON lines: header, one per snapshot, then a trailer with traces."""
    yield dumps({"type": "header", "format": CHAIN_FORMAT, **header})
    for s in range(len(chain)):
        P = int(chain.order[s])
        z = [0] * (P - 1) + [1]
        yield dumps({
            "type": "snapshot",
            "iteration": int(chain.iteration[s]),
            "M_hat": int(np.count_nonzero(chain.counts[s])),
            "P_hat": P,
            "v": chain.v[s, : P + 1],
            "z": z,
            "pi": chain.pi[s],
            "mu": chain.mu[s],
            "omega_upper": [_upper(w) for w in chain.omega[s]],
            "tau_sq": chain.tau_sq[s],
            "loglik": float(chain.loglik[s]),
            "gamma": chain.gamma[s],
            "counts": chain.counts[s],
        })
    yield dumps({
        "type": "trailer",
        "loglik_trace": chain.loglik_trace,
        "m_hat_trace": chain.m_hat_trace,
        "p_hat_trace": chain.p_hat_trace,
        "accept": chain.accept,
    })


def write_chain(path, chain, header):
    atomic_write(path, "\n".join(chain_records(chain, header)) + "\n")


def read_chain(path):
    """Return ``(chain, header)``.  Local shrinkage scales are not persisted and load as NaN."""
    header, snaps, trailer = None, [], {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(str(exc), path) from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", path, row=lineno) from None
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "snapshot":
                snaps.append(rec)
            elif kind == "trailer":
                trailer = rec
            else:
                raise DataError(f"unknown record type {kind!r}", path, row=lineno)
    if header is None:
        raise DataError("missing header record", path)
    if header.get("format") != CHAIN_FORMAT:
        raise DataError(f"unsupported chain format {header.get('format')!r}", path)
    Pmax, M, D, T = (int(header[k]) for k in ("Pmax", "Mmax", "D", "T"))
    n_iter = len(trailer.get("loglik_trace", []))
    chain = Chain.allocate(len(snaps), Pmax, M, D, T, n_iter)
    chain.lam_sq[:] = np.nan
    for s, rec in enumerate(snaps):
        P = int(rec["P_hat"])
        chain.iteration[s] = rec["iteration"]
        chain.order[s] = P
        chain.v[s, : P + 1] = rec["v"]
        chain.pi[s] = rec["pi"]
        chain.mu[s] = rec["mu"]
        chain.omega[s] = [_from_upper(np.asarray(u, dtype=float), D) for u in rec["omega_upper"]]
        chain.tau_sq[s] = rec["tau_sq"]
        chain.loglik[s] = rec["loglik"]
        chain.gamma[s] = rec["gamma"]
        chain.counts[s] = rec["counts"]
    if trailer:
        chain.loglik_trace = np.asarray(trailer["loglik_trace"], dtype=float)
        chain.m_hat_trace = np.asarray(trailer["m_hat_trace"], dtype=np.int64)
        chain.p_hat_trace = np.asarray(trailer["p_hat_trace"], dtype=np.int64)
        chain.accept = dict(trailer["accept"])
    return chain, header


# --- reports ---------------------------------------------------------------


def summary_to_dict(summary):
    return {
        "M_hat": summary.M_hat,
        "P_hat": summary.P_hat,
        "m_mass": {str(k): v for k, v in summary.m_mass.items()},
        "p_mass": {str(k): v for k, v in summary.p_mass.items()},
        "level": summary.level,
        "n_matching": summary.n_matching,
        "states": summary.states,
        "phi": summary.phi,
        "pi": summary.pi,
        "mu": summary.mu,
        "omega": summary.omega,
        "partial_corr": summary.partial_corr,
        "adjacency": summary.adjacency.astype(int),
        "gamma_global": summary.gamma_global,
        "diagnostics": summary.diagnostics,
    }


def write_report(path, summary, extra=None):
    doc = summary_to_dict(summary)
    if extra:
        doc.update(extra)
    atomic_write(path, json.dumps(doc, default=_default, indent=1) + "\n")


def read_report(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(str(exc), path) from None
    for key in ("phi", "pi", "mu", "omega", "partial_corr"):
        d[key] = np.asarray(d[key], dtype=float)
    d["adjacency"] = np.asarray(d["adjacency"], dtype=bool)
    d["gamma_global"] = np.asarray(d["gamma_global"], dtype=np.int64)
    d["states"] = np.asarray(d["states"], dtype=np.int64)
    return d


def write_local_csv(path, probs):
    M = probs.shape[1]
    lines = ["t," + ",".join(f"p{j + 1}" for j in range(M))]
    lines += [f"{t + 1}," + ",".join(fmt(v) for v in row) for t, row in enumerate(probs)]
    atomic_write(path, "\n".join(lines) + "\n")


def histogram_rows(name, samples, bins=20):
    """Binned counts on [0, 1] for each column of ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for k in range(samples.shape[1]):
        counts, _ = np.histogram(samples[:, k], bins=edges)
        for b in range(bins):
            rows.append(f"{name}{k},{fmt(edges[b])},{fmt(edges[b + 1])},{counts[b]}")
    return rows


def write_histograms(path, named_samples, bins=20):
    lines = ["parameter,bin_left,bin_right,count"]
    for name, samples in named_samples:
        lines += histogram_rows(name, samples, bins)
    atomic_write(path, "\n".join(lines) + "\n")
