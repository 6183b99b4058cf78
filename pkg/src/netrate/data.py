"""Data model and ingestion for directed pairwise event histories.

A :class:`Dataset` bundles the node set, the event log (one strictly
increasing timestamp sequence per ordered sender/recipient pair) and the
covariate paths. Covariates are piecewise constant in time; the risk set at
every instant is the set of all ordered pairs carrying a covariate path.

Internally the dataset is compiled into dense arrays over a common grid of
covariate breakpoints (see :class:`Design`), which is what the estimation and
variance code operates on.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, ParseError, ValidationError

Pair = tuple[str, str]

#: relative size of the within-pair tie-breaking perturbation
TIE_EPS = 2.0 ** -32


# --------------------------------------------------------------------------
# core types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeSet:
    """Ordered collection of unique node labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            seen, dup = set(), []
            for x in labels:
                if x in seen:
                    dup.append(x)
                seen.add(x)
            raise ValidationError(f"duplicate node labels: {sorted(set(dup))}")
        if len(labels) < 2:
            raise ValidationError("a node set needs at least two nodes")

    @property
    def node_count(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.index

    @cached_property
    def index(self) -> dict[str, int]:
        return {x: k for k, x in enumerate(self.labels)}

    def ordered_pairs(self) -> list[Pair]:
        return [(i, j) for i in self.labels for j in self.labels if i != j]


@dataclass(frozen=True)
class IngestReport:
    """Bookkeeping produced by the ingestion routines."""

    perturbed: int = 0
    rejected: tuple[tuple[int, str], ...] = ()
    n_messages: int = 0
    n_dropped: int = 0
    origin: float | None = None

    @property
    def drop_fraction(self) -> float:
        return self.n_dropped / self.n_messages if self.n_messages else 0.0


@dataclass(frozen=True, eq=False)
class EventLog:
    """Event timestamps per ordered pair on the window ``[0, horizon]``.

    Parameters
    ----------
    horizon : float
        End of the observation window.
    events : mapping
        ``(sender, recipient) -> timestamps``. Sequences must be strictly
        increasing and lie in ``(0, horizon]``. Pairs without events are
        simply absent.
    """

    horizon: float
    events: Mapping[Pair, np.ndarray]
    report: IngestReport = field(default_factory=IngestReport)

    def __post_init__(self):
        horizon = float(self.horizon)
        if not math.isfinite(horizon) or horizon < 0:
            raise ValidationError(f"horizon must be finite and nonnegative, got {horizon}")
        object.__setattr__(self, "horizon", horizon)
        clean = {}
        for pair in sorted(self.events):
            i, j = str(pair[0]), str(pair[1])
            if i == j:
                raise ValidationError(f"self pair ({i}, {i}) not allowed")
            t = np.asarray(self.events[pair], dtype=float).reshape(-1)
            if t.size == 0:
                continue
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"non-finite timestamp for pair ({i}, {j})")
            if t[0] <= 0 or t[-1] > horizon:
                raise ValidationError(
                    f"timestamps for pair ({i}, {j}) must lie in (0, {horizon}]")
            if np.any(np.diff(t) <= 0):
                raise ValidationError(f"timestamps for pair ({i}, {j}) not strictly increasing")
            t.setflags(write=False)
            clean[(i, j)] = t
        object.__setattr__(self, "events", clean)

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (self.horizon == other.horizon and self.events.keys() == other.events.keys()
                and all(np.array_equal(v, other.events[k]) for k, v in self.events.items()))

    __hash__ = None

    @property
    def pairs(self) -> list[Pair]:
        return list(self.events)

    @property
    def n_events(self) -> int:
        return int(sum(len(v) for v in self.events.values()))

    def count(self, pair: Pair) -> int:
        """Number of events ``n_ij`` for an ordered pair."""
        t = self.events.get((str(pair[0]), str(pair[1])))
        return 0 if t is None else len(t)

    def counting_process(self, pair: Pair, t) -> np.ndarray:
        """``N_ij(t)``, right-continuous, vectorised over ``t``."""
        times = self.events.get((str(pair[0]), str(pair[1])), np.empty(0))
        return np.searchsorted(times, np.asarray(t, dtype=float), side="right")

    def nodes(self) -> list[str]:
        return sorted({x for p in self.events for x in p})


@dataclass(frozen=True, eq=False)
class CovariateSet:
    """Piecewise-constant covariate paths per ordered pair.

    Each path is a pair ``(starts, values)`` with ``starts`` strictly
    increasing, ``starts[0] == 0`` and ``values`` of shape ``(len(starts), p)``;
    segment ``k`` holds on ``[starts[k], starts[k+1])``.
    """

    dim: int
    paths: Mapping[Pair, tuple[np.ndarray, np.ndarray]]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        p = int(self.dim)
        if p < 1:
            raise ValidationError("covariate dimension must be positive")
        object.__setattr__(self, "dim", p)
        names = tuple(self.names) or tuple(f"z{k + 1}" for k in range(p))
        if len(names) != p:
            raise ValidationError(f"{len(names)} covariate names for dimension {p}")
        object.__setattr__(self, "names", names)
        clean = {}
        for pair in sorted(self.paths):
            i, j = str(pair[0]), str(pair[1])
            if i == j:
                raise ValidationError(f"self pair ({i}, {i}) not allowed")
            starts, values = self.paths[pair]
            starts = np.asarray(starts, dtype=float).reshape(-1)
            values = np.asarray(values, dtype=float).reshape(len(starts), -1)
            if values.shape[1] != p:
                raise ValidationError(f"pair ({i}, {j}): covariate length {values.shape[1]} != {p}")
            if starts.size == 0 or starts[0] != 0.0:
                raise ValidationError(f"pair ({i}, {j}): first segment must start at 0")
            if np.any(np.diff(starts) <= 0):
                raise ValidationError(f"pair ({i}, {j}): segment starts not strictly increasing")
            if not np.all(np.isfinite(values)):
                raise ValidationError(f"pair ({i}, {j}): non-finite covariate value")
            starts.setflags(write=False)
            values.setflags(write=False)
            clean[(i, j)] = (starts, values)
        object.__setattr__(self, "paths", clean)

    @classmethod
    def static(cls, values: Mapping[Pair, Sequence[float]], names=()) -> "CovariateSet":
        """Build time-invariant covariates from ``pair -> vector``."""
        values = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in values.items()}
        if not values:
            raise ValidationError("no covariate paths given")
        p = len(next(iter(values.values())))
        paths = {k: (np.zeros(1), v.reshape(1, -1)) for k, v in values.items()}
        return cls(p, paths, tuple(names))

    @property
    def is_static(self) -> bool:
        return all(len(s) == 1 for s, _ in self.paths.values())

    def value(self, pair: Pair, t: float, left: bool = False) -> np.ndarray:
        """Covariate vector of ``pair`` at time ``t`` (left limit if ``left``)."""
        starts, values = self.paths[(str(pair[0]), str(pair[1]))]
        side = "left" if left else "right"
        k = max(int(np.searchsorted(starts, t, side=side)) - 1, 0)
        return values[k]

    def __eq__(self, other):
        if not isinstance(other, CovariateSet):
            return NotImplemented
        return (self.dim == other.dim and self.paths.keys() == other.paths.keys()
                and all(np.array_equal(s, other.paths[k][0]) and np.array_equal(v, other.paths[k][1])
                        for k, (s, v) in self.paths.items()))

    __hash__ = None


@dataclass(frozen=True)
class Design:
    """Dense array form of a dataset used by the numerical routines.

    Attributes
    ----------
    breaks : ndarray, shape (m,)
        Union of covariate segment starts; ``breaks[0] == 0``.
    Z : ndarray, shape (m, P, p)
        Covariate of pair ``q`` on segment ``g``.
    counts : ndarray, shape (m, P)
        Number of events of pair ``q`` whose time falls in segment ``g``
        (event times use the left limit of the covariate path).
    sender, recipient : ndarray of int, shape (P,)
        Node indices of each pair.
    event_pair, event_time : ndarray, shape (E,)
        All events sorted by time (ties broken by pair index).
    """

    breaks: np.ndarray
    Z: np.ndarray
    counts: np.ndarray
    sender: np.ndarray
    recipient: np.ndarray
    event_pair: np.ndarray
    event_time: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.Z.shape[1]

    @property
    def dim(self) -> int:
        return self.Z.shape[2]

    def segment_of(self, t) -> np.ndarray:
        """Index of the segment whose left-limit covariate applies at ``t``."""
        k = np.searchsorted(self.breaks, np.asarray(t, dtype=float), side="left") - 1
        return np.maximum(k, 0)

    def pair_mask(self, drop_nodes: Iterable[int] = ()) -> np.ndarray:
        """Boolean mask of pairs not incident to any of ``drop_nodes``."""
        drop = np.asarray(list(drop_nodes), dtype=int)
        return ~(np.isin(self.sender, drop) | np.isin(self.recipient, drop))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Node set, event log and covariates with cross-consistency checks."""

    nodes: NodeSet
    log: EventLog
    covariates: CovariateSet

    def __post_init__(self):
        idx = self.nodes.index
        for pair in self.covariates.paths:
            if pair[0] not in idx or pair[1] not in idx:
                raise ValidationError(f"covariate pair {pair} references an unknown node")
        for pair in self.log.events:
            if pair not in self.covariates.paths:
                raise ValidationError(f"pair {pair} has events but no covariate path")
        for starts, _ in self.covariates.paths.values():
            if starts[-1] > self.log.horizon:
                raise ValidationError("covariate breakpoint beyond the event-log horizon")

    @property
    def horizon(self) -> float:
        return self.log.horizon

    @property
    def dim(self) -> int:
        return self.covariates.dim

    @property
    def n_events(self) -> int:
        return self.log.n_events

    @cached_property
    def pairs(self) -> list[Pair]:
        """Risk-set pairs ordered by (sender index, recipient index)."""
        idx = self.nodes.index
        return sorted(self.covariates.paths, key=lambda p: (idx[p[0]], idx[p[1]]))

    @cached_property
    def design(self) -> Design:
        idx = self.nodes.index
        pairs = self.pairs
        paths = self.covariates.paths
        breaks = np.unique(np.concatenate([paths[p][0] for p in pairs]))
        P, p, m = len(pairs), self.dim, len(breaks)
        Z = np.empty((m, P, p))
        for q, pair in enumerate(pairs):
            starts, values = paths[pair]
            k = np.searchsorted(starts, breaks, side="right") - 1
            Z[:, q, :] = values[k]
        pair_index = {pair: q for q, pair in enumerate(pairs)}
        ev_pair, ev_time = [], []
        for pair, t in self.log.events.items():
            ev_pair.append(np.full(len(t), pair_index[pair]))
            ev_time.append(t)
        if ev_pair:
            ev_pair = np.concatenate(ev_pair)
            ev_time = np.concatenate(ev_time)
        else:
            ev_pair = np.empty(0, dtype=int)
            ev_time = np.empty(0)
        order = np.lexsort((ev_pair, ev_time))
        ev_pair, ev_time = ev_pair[order], ev_time[order]
        seg = np.maximum(np.searchsorted(breaks, ev_time, side="left") - 1, 0)
        counts = np.zeros((m, P))
        np.add.at(counts, (seg, ev_pair), 1.0)
        sender = np.array([idx[a] for a, _ in pairs], dtype=int)
        recipient = np.array([idx[b] for _, b in pairs], dtype=int)
        for arr in (breaks, Z, counts, sender, recipient, ev_pair, ev_time):
            arr.setflags(write=False)
        return Design(breaks, Z, counts, sender, recipient, ev_pair, ev_time)

    def relabel(self, mapping: Mapping[str, str]) -> "Dataset":
        """Rename nodes through ``mapping`` (a bijection on the labels)."""
        f = lambda x: str(mapping.get(x, x))
        nodes = NodeSet(tuple(f(x) for x in self.nodes.labels))
        log = EventLog(self.log.horizon, {(f(i), f(j)): t for (i, j), t in self.log.events.items()})
        cov = CovariateSet(self.dim, {(f(i), f(j)): v for (i, j), v in self.covariates.paths.items()},
                           self.covariates.names)
        return Dataset(nodes, log, cov)

    def drop_nodes(self, labels: Iterable[str]) -> "Dataset":
        """Copy of the dataset with the given nodes and all incident pairs removed."""
        drop = {str(x) for x in labels}
        keep = lambda pair: pair[0] not in drop and pair[1] not in drop
        nodes = NodeSet(tuple(x for x in self.nodes.labels if x not in drop))
        log = EventLog(self.log.horizon, {k: v for k, v in self.log.events.items() if keep(k)})
        cov = CovariateSet(self.dim, {k: v for k, v in self.covariates.paths.items() if keep(k)},
                           self.covariates.names)
        return Dataset(nodes, log, cov)


def complete_static_dataset(labels: Sequence[str], horizon: float,
                            events: Mapping[Pair, Sequence[float]],
                            covariates: Mapping[Pair, Sequence[float]], names=()) -> Dataset:
    """Convenience constructor for the common static-covariate case."""
    nodes = NodeSet(tuple(labels))
    return Dataset(nodes, EventLog(horizon, {k: np.asarray(v, float) for k, v in events.items()}),
                   CovariateSet.static(covariates, names))


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

def _open_text(source):
    """Return a text stream for a path, a string of CSV content or a stream."""
    if hasattr(source, "read"):
        return source, False
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                           and os.path.exists(source)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, str):
        return io.StringIO(source), False
    raise InputError(f"cannot read tabular data from {type(source).__name__}")


def _read_rows(source, required: Sequence[str]):
    stream, close = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        fields = reader.fieldnames
        if fields is None:
            return [], []
        fields = [f.strip() for f in fields]
        reader.fieldnames = fields
        missing = [c for c in required if c not in fields]
        if missing:
            raise ParseError(f"missing column(s) {missing}; header is {fields}")
        return fields, list(reader)
    finally:
        if close:
            stream.close()


def parse_timestamp(value) -> float:
    """Parse a real number or an ISO-8601 datetime (as POSIX seconds)."""
    if isinstance(value, (int, float)):
        return float(value)
    s = str(value).strip()
    try:
        return float(s)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(s.replace("Z", "+00:00")).timestamp()
    except ValueError:
        raise ValueError(f"unparseable timestamp {s!r}") from None


def _break_ties(t: np.ndarray, horizon: float) -> tuple[np.ndarray, int]:
    """Make a sorted array strictly increasing; returns (array, #perturbed)."""
    if t.size < 2 or np.all(np.diff(t) > 0):
        return t, 0
    eps = TIE_EPS * horizon
    if eps <= 0:
        raise ValidationError("cannot break timestamp ties on a zero-length window")
    out = t.copy()
    n_perturbed = 0
    start = 0
    while start < len(t):
        stop = start
        while stop + 1 < len(t) and t[stop + 1] == t[start]:
            stop += 1
        run = stop - start
        if run:
            k = np.arange(1, run + 1)
            if t[start] + run * eps <= horizon:
                out[start + 1:stop + 1] = t[start] + k * eps
            else:
                # run sits at the horizon: spread downwards instead
                out[start:stop + 1] = t[start] - (run - np.arange(run + 1)) * eps
            n_perturbed += run
        start = stop + 1
    for k in range(1, len(out)):
        if out[k] <= out[k - 1]:
            out[k] = np.nextafter(out[k - 1], np.inf)
    return out, n_perturbed


def _assemble_log(raw: Mapping[Pair, list], horizon: float | None, report_kw) -> EventLog:
    if horizon is None:
        horizon = max((max(v) for v in raw.values()), default=0.0)
    horizon = float(horizon)
    events, perturbed = {}, 0
    for pair, times in raw.items():
        t = np.sort(np.asarray(times, dtype=float))
        if t[-1] > horizon:
            raise ValidationError(f"timestamp {t[-1]} for pair {pair} exceeds horizon {horizon}")
        t, k = _break_ties(t, horizon)
        perturbed += k
        events[pair] = t
    return EventLog(horizon, events, IngestReport(perturbed=perturbed, **report_kw))


def ingest_events(source, horizon: float | None = None) -> EventLog:
    """Read a ``sender,recipient,timestamp`` table into an :class:`EventLog`.

    Parameters
    ----------
    source : path, str or text stream
        CSV source. A string containing a newline is treated as CSV content.
    horizon : float, optional
        Observation window end. Defaults to the largest timestamp.

    Returns
    -------
    EventLog
        ``log.report`` records rejected self-loop rows and the number of
        within-pair duplicate timestamps that were perturbed.

    Raises
    ------
    ParseError
        Malformed row (the row number is attached).
    ValidationError
        Timestamp outside ``(0, horizon]``.
    """
    _, rows = _read_rows(source, ("sender", "recipient", "timestamp"))
    raw: dict[Pair, list] = {}
    rejected = []
    for r, row in enumerate(rows, start=1):
        sender, recipient, ts = row.get("sender"), row.get("recipient"), row.get("timestamp")
        if sender is None or recipient is None or ts is None or None in row:
            raise ParseError("wrong number of fields", row=r)
        sender, recipient = sender.strip(), recipient.strip()
        if not sender or not recipient:
            raise ParseError("empty sender or recipient", row=r)
        try:
            t = parse_timestamp(ts)
        except ValueError as exc:
            raise ParseError(str(exc), row=r) from None
        if not math.isfinite(t):
            raise ParseError(f"non-finite timestamp {ts!r}", row=r)
        if sender == recipient:
            rejected.append((r, f"self-loop {sender}->{recipient}"))
            continue
        if t <= 0:
            raise ValidationError(f"row {r}: timestamp {t} must be positive")
        if horizon is not None and t > horizon:
            raise ValidationError(f"row {r}: timestamp {t} exceeds horizon {horizon}")
        raw.setdefault((sender, recipient), []).append(t)
    return _assemble_log(raw, horizon, {"rejected": tuple(rejected), "n_messages": len(rows)})


def read_node_attributes(source) -> dict[str, dict[str, str]]:
    """Read a ``node,<attr1>,...`` table into ``node -> {attr: value}``."""
    fields, rows = _read_rows(source, ("node",))
    out = {}
    for r, row in enumerate(rows, start=1):
        if None in row:
            raise ParseError("too many fields", row=r)
        node = (row.get("node") or "").strip()
        if not node:
            raise ParseError("empty node label", row=r)
        if node in out:
            raise ParseError(f"duplicate node {node!r}", row=r)
        out[node] = {k: (row[k] or "").strip() for k in fields if k != "node" and row.get(k) is not None}
    return out


def build_homophily_covariates(node_attrs, attr_names: Sequence[str]) -> CovariateSet:
    """Static covariates ``1{attr(i) == attr(j)}`` for every ordered pair.

    ``node_attrs`` is a mapping ``node -> {attr: value}`` or a node-attribute
    CSV source. Pairs are all ordered pairs of distinct nodes in the table.
    """
    if not isinstance(node_attrs, Mapping):
        node_attrs = read_node_attributes(node_attrs)
    attr_names = list(attr_names)
    if not attr_names:
        raise InputError("at least one attribute name is required")
    labels = list(node_attrs)
    table = []
    for node in labels:
        row = []
        for a in attr_names:
            v = node_attrs[node].get(a)
            if v is None or (isinstance(v, str) and v == ""):
                raise InputError(f"node {node!r} has no value for attribute {a!r}")
            row.append(v)
        table.append(row)
    values = {}
    for ii, i in enumerate(labels):
        for jj, j in enumerate(labels):
            if i != j:
                values[(str(i), str(j))] = [float(x == y) for x, y in zip(table[ii], table[jj])]
    if not values:
        raise InputError("need at least two nodes to form pairs")
    return CovariateSet.static(values, attr_names)


def enron_preprocess(source, max_recipients: int = 5, nodes: Iterable[str] | None = None) -> EventLog:
    """Flattened message table -> log-time event log.

    Each row of ``source`` has columns ``sender,recipients,timestamp`` with
    ``;``-separated recipients. Messages with more than ``max_recipients``
    distinct recipients are dropped; each retained message becomes one event
    per (sender, recipient) pair, stamped ``log(t - t0 + 1)`` where ``t0`` is
    the earliest retained timestamp.

    If ``nodes`` is given, recipients outside it (and messages from senders
    outside it) are discarded after the recipient-count filter.

    The returned log's ``report`` holds the message count, dropped count and
    rejected rows; the horizon is the largest transformed time.
    """
    _, rows = _read_rows(source, ("sender", "recipients", "timestamp"))
    keep_nodes = None if nodes is None else {str(x) for x in nodes}
    rejected = []
    n_dropped = 0
    retained = []
    for r, row in enumerate(rows, start=1):
        sender = (row.get("sender") or "").strip()
        recips = [x.strip() for x in (row.get("recipients") or "").split(";") if x.strip()]
        try:
            t = parse_timestamp(row.get("timestamp"))
        except (TypeError, ValueError):
            rejected.append((r, f"unparseable timestamp {row.get('timestamp')!r}"))
            continue
        if not math.isfinite(t) or t <= 0:
            rejected.append((r, f"nonpositive timestamp {t}"))
            continue
        if not sender or not recips:
            rejected.append((r, "missing sender or recipients"))
            continue
        recips = list(dict.fromkeys(recips))
        if len(recips) > max_recipients:
            n_dropped += 1
            continue
        retained.append((sender, recips, t))
    raw: dict[Pair, list] = {}
    origin = min((t for _, _, t in retained), default=None)
    for sender, recips, t in retained:
        if keep_nodes is not None and sender not in keep_nodes:
            continue
        s = math.log(t - origin + 1.0)
        for j in recips:
            if j == sender or (keep_nodes is not None and j not in keep_nodes):
                continue
            raw.setdefault((sender, j), []).append(s)
    # log(1) = 0 for the earliest message; nudge it into (0, T]
    if raw:
        top = max(max(v) for v in raw.values())
        floor = TIE_EPS * top if top > 0 else TIE_EPS
        for v in raw.values():
            for k, s in enumerate(v):
                if s <= 0:
                    v[k] = floor
    report = {"rejected": tuple(rejected), "n_messages": len(rows), "n_dropped": n_dropped,
              "origin": origin}
    return _assemble_log(raw, None, report)


# --------------------------------------------------------------------------
# canonical serialization
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(ds: Dataset, directory, node_attrs: Mapping[str, Mapping[str, str]] | None = None):
    """Write ``events.csv``, ``nodes.csv``, ``covariates.csv`` and ``meta.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "events.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sender", "recipient", "timestamp"])
        for (i, j) in ds.pairs:
            for t in ds.log.events.get((i, j), ()):
                w.writerow([i, j, _fmt(t)])
    attr_cols = sorted({a for v in (node_attrs or {}).values() for a in v})
    with open(d / "nodes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", *attr_cols])
        for x in ds.nodes.labels:
            w.writerow([x, *[(node_attrs or {}).get(x, {}).get(a, "") for a in attr_cols]])
    with open(d / "covariates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sender", "recipient", "start_time", *ds.covariates.names])
        for (i, j) in ds.pairs:
            starts, values = ds.covariates.paths[(i, j)]
            for s, v in zip(starts, values):
                w.writerow([i, j, _fmt(s), *map(_fmt, v)])
    meta = {"horizon": ds.horizon, "p": ds.dim, "n": ds.nodes.node_count,
            "covariates": list(ds.covariates.names)}
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def read_dataset(directory) -> Dataset:
    """Load a dataset from its canonical directory form."""
    d = Path(directory)
    for name in ("events.csv", "nodes.csv", "covariates.csv", "meta.json"):
        if not (d / name).is_file():
            raise InputError(f"{d / name} not found")
    try:
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        horizon, p, n = float(meta["horizon"]), int(meta["p"]), int(meta["n"])
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid meta.json: {exc}") from None
    fields, node_rows = _read_rows(d / "nodes.csv", ("node",))
    nodes = NodeSet(tuple(row["node"].strip() for row in node_rows))
    if nodes.node_count != n:
        raise ValidationError(f"meta.json says n={n} but nodes.csv lists {nodes.node_count}")
    fields, cov_rows = _read_rows(d / "covariates.csv", ("sender", "recipient", "start_time"))
    names = [f for f in fields if f not in ("sender", "recipient", "start_time")]
    if len(names) != p:
        raise ValidationError(f"meta.json says p={p} but covariates.csv has {len(names)} columns")
    segs: dict[Pair, list] = {}
    for r, row in enumerate(cov_rows, start=1):
        try:
            s = float(row["start_time"])
            v = [float(row[c]) for c in names]
        except (TypeError, ValueError) as exc:
            raise ParseError(f"covariates.csv: {exc}", row=r) from None
        segs.setdefault((row["sender"].strip(), row["recipient"].strip()), []).append((s, v))
    paths = {}
    for pair, lst in segs.items():
        lst.sort(key=lambda x: x[0])
        paths[pair] = (np.array([s for s, _ in lst]), np.array([v for _, v in lst]))
    covariates = CovariateSet(p, paths, tuple(names))
    log = ingest_events(d / "events.csv", horizon=horizon)
    return Dataset(nodes, log, covariates)


def read_node_table(directory) -> dict[str, dict[str, str]]:
    return read_node_attributes(Path(directory) / "nodes.csv")
