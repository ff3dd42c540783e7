"""Observations of risk score and viral status, plus CSV ingestion."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterator, Mapping, Sequence

import numpy as np


class CohortError(ValueError):
    """Malformed or inconsistent cohort data."""


@dataclass(frozen=True)
class VlThreshold:
    """Viral-load cutoff in copies/mL; failure means VL strictly above it."""

    v_star: float = 400.0

    def __post_init__(self):
        if not (self.v_star >= 0 and math.isfinite(self.v_star)):
            raise CohortError(f"v_star must be a finite nonnegative number, got {self.v_star!r}")


@dataclass(frozen=True)
class Observation:
    score: float | None
    status: int
    raw_vl: float | None = None
    markers: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in (0, 1):
            raise CohortError("status not binary")
        if self.score is not None and not math.isfinite(self.score):
            raise CohortError("score must be finite")
        if self.raw_vl is not None and not self.raw_vl >= 0:
            raise CohortError("raw_vl must be nonnegative")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class Cohort:
    """Immutable column store of ``(score, status)`` pairs.

    ``score`` may be ``None`` for a marker-only cohort that has not been
    scored yet; every estimator requires it.  Arrays are read-only.
    """

    __slots__ = ("score", "status", "raw_vl", "markers")

    def __init__(self, score, status, raw_vl=None, markers: Mapping[str, Sequence[float]] | None = None):
        status_arr = np.asarray(status)
        if status_arr.ndim != 1 or status_arr.size == 0:
            raise CohortError("cohort must contain at least one observation")
        if not np.all(np.isin(status_arr, (0, 1))):
            raise CohortError("status not binary")
        n = status_arr.size
        st = status_arr.astype(np.int8)
        st.setflags(write=False)
        object.__setattr__(self, "status", st)

        if score is not None:
            sc = _frozen(score)
            if sc.shape != (n,):
                raise CohortError("score and status lengths differ")
            if not np.all(np.isfinite(sc)):
                raise CohortError("score must be finite")
        else:
            sc = None
        object.__setattr__(self, "score", sc)

        if raw_vl is not None:
            vl = _frozen(raw_vl)
            if vl.shape != (n,):
                raise CohortError("raw_vl and status lengths differ")
            if np.any(~(vl >= 0)):
                raise CohortError("raw_vl must be nonnegative")
        else:
            vl = None
        object.__setattr__(self, "raw_vl", vl)

        mk = {}
        for name, values in (markers or {}).items():
            arr = _frozen(values)
            if arr.shape != (n,):
                raise CohortError(f"marker {name!r} has wrong length")
            mk[name] = arr
        object.__setattr__(self, "markers", mk)

    def __setattr__(self, key, value):
        raise AttributeError("Cohort is immutable")

    @property
    def n(self) -> int:
        return int(self.status.size)

    def __len__(self) -> int:
        return self.n

    @property
    def n_positive(self) -> int:
        return int(self.status.sum())

    @property
    def p_hat(self) -> float:
        return self.n_positive / self.n

    def has_both_statuses(self) -> bool:
        return 0 < self.n_positive < self.n

    def require_scores(self) -> np.ndarray:
        if self.score is None:
            raise CohortError("cohort has no risk score column")
        return self.score

    def require_both_statuses(self) -> None:
        if not self.has_both_statuses():
            raise CohortError("cohort must contain both statuses")

    def subset(self, index) -> "Cohort":
        idx = np.asarray(index)
        return Cohort(
            None if self.score is None else self.score[idx],
            self.status[idx],
            None if self.raw_vl is None else self.raw_vl[idx],
            {k: v[idx] for k, v in self.markers.items()},
        )

    def with_score(self, score) -> "Cohort":
        return Cohort(score, self.status, self.raw_vl, self.markers)

    def __iter__(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield Observation(
                score=None if self.score is None else float(self.score[i]),
                status=int(self.status[i]),
                raw_vl=None if self.raw_vl is None else float(self.raw_vl[i]),
                markers={k: float(v[i]) for k, v in self.markers.items()},
            )

    @property
    def observations(self) -> list[Observation]:
        return list(self)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "Cohort":
        obs = list(observations)
        if not obs:
            raise CohortError("cohort must contain at least one observation")
        has_score = obs[0].score is not None
        has_vl = obs[0].raw_vl is not None
        names = list(obs[0].markers)
        return cls(
            [o.score for o in obs] if has_score else None,
            [o.status for o in obs],
            [o.raw_vl for o in obs] if has_vl else None,
            {k: [o.markers[k] for o in obs] for k in names},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            same(self.score, other.score)
            and np.array_equal(self.status, other.status)
            and same(self.raw_vl, other.raw_vl)
            and self.markers.keys() == other.markers.keys()
            and all(np.array_equal(self.markers[k], other.markers[k]) for k in self.markers)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Cohort(n={self.n}, positives={self.n_positive}, markers={sorted(self.markers)})"

    def to_dict(self) -> dict:
        out = {"n": self.n, "status": self.status.tolist()}
        if self.score is not None:
            out["score"] = self.score.tolist()
        if self.raw_vl is not None:
            out["vl"] = self.raw_vl.tolist()
        if self.markers:
            out["markers"] = {k: v.tolist() for k, v in self.markers.items()}
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class Schema:
    """Column mapping for :func:`parse_cohort`.

    ``status`` and ``vl`` may both be present; rows where they disagree are
    rejected.  ``negate`` flips the sign of the score column so that larger
    values mean higher risk (e.g. for raw CD4 counts).
    """

    score: str | None = "score"
    status: str | None = "z"
    vl: str | None = "vl"
    markers: tuple[str, ...] = ()
    negate: bool = False
    threshold: VlThreshold | None = None


def dichotomize(raw_vl: float, threshold: VlThreshold) -> int:
    """Viral status: 1 iff ``raw_vl`` strictly exceeds ``threshold.v_star``."""
    if raw_vl is None or not math.isfinite(raw_vl):
        raise CohortError("raw_vl missing or not finite")
    if raw_vl < 0:
        raise CohortError("raw_vl must be nonnegative")
    return int(raw_vl > threshold.v_star)


def _number(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise CohortError(f"row {row}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise CohortError(f"row {row}: non-finite value in column {column!r}")
    return value


def parse_cohort(source: IO[str] | IO[bytes] | str, schema: Schema = Schema()) -> Cohort:
    """Read a delimited text cohort with a header row.

    ``source`` is a text or binary stream, or the CSV text itself.  The
    delimiter is sniffed among comma, tab and semicolon.
    """
    if isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    if not text.strip():
        raise CohortError("empty file")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",\t;")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header

    use_score = schema.score is not None and schema.score in header
    if schema.score is not None and not use_score and not schema.markers:
        raise CohortError(f"missing required column {schema.score!r}")
    for m in schema.markers:
        if m not in header:
            raise CohortError(f"missing required column {m!r}")
    use_status = schema.status is not None and schema.status in header
    use_vl = schema.vl is not None and schema.vl in header
    if not use_status and not use_vl:
        raise CohortError(f"missing required column {schema.status!r} (or a viral-load column)")
    if use_vl and not use_status and schema.threshold is None:
        raise CohortError("a viral-load threshold is needed to derive status")

    scores, statuses, vls = [], [], []
    markers = {m: [] for m in schema.markers}
    for row_no, row in enumerate(reader, start=2):
        if use_score:
            s = _number(row.get(schema.score), schema.score, row_no)
            scores.append(-s if schema.negate else s)
        for m in schema.markers:
            markers[m].append(_number(row.get(m), m, row_no))
        vl = None
        if use_vl:
            cell = (row.get(schema.vl) or "").strip()
            if cell:
                vl = _number(cell, schema.vl, row_no)
                if vl < 0:
                    raise CohortError(f"row {row_no}: negative viral load")
            elif not use_status:
                raise CohortError(f"row {row_no}: missing viral load")
        if use_status:
            z = _number(row.get(schema.status), schema.status, row_no)
            if z not in (0.0, 1.0):
                raise CohortError(f"row {row_no}: status not binary")
            z = int(z)
            if vl is not None and schema.threshold is not None and dichotomize(vl, schema.threshold) != z:
                raise CohortError(f"row {row_no}: status inconsistent with viral load")
        else:
            z = dichotomize(vl, schema.threshold)
        statuses.append(z)
        vls.append(math.nan if vl is None else vl)

    if not statuses:
        raise CohortError("empty file")
    raw_vl = None
    if use_vl and not any(math.isnan(v) for v in vls):
        raw_vl = vls
    return Cohort(scores if use_score else None, statuses, raw_vl, markers)


def serialize_cohort(cohort: Cohort, sink: IO[str] | None = None) -> str:
    """Write ``cohort`` as CSV with columns ``score, z[, vl][, markers...]``."""
    buf = io.StringIO()
    header = []
    if cohort.score is not None:
        header.append("score")
    header.append("z")
    if cohort.raw_vl is not None:
        header.append("vl")
    header.extend(cohort.markers)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i in range(cohort.n):
        row = []
        if cohort.score is not None:
            row.append(repr(float(cohort.score[i])))
        row.append(int(cohort.status[i]))
        if cohort.raw_vl is not None:
            row.append(repr(float(cohort.raw_vl[i])))
        row.extend(repr(float(v[i])) for v in cohort.markers.values())
        writer.writerow(row)
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def composite_score(markers: Mapping[str, float], fit) -> float:
    """Predicted failure probability from a fitted logistic composite."""
    eta = fit.intercept
    for name, beta in fit.coefficients.items():
        if name not in markers:
            raise CohortError(f"missing marker {name!r}")
        eta += beta * float(markers[name])
    if not math.isfinite(eta):
        raise CohortError("non-finite linear predictor")
    if eta >= 0:
        return 1.0 / (1.0 + math.exp(-eta))
    e = math.exp(eta)
    return e / (1.0 + e)


def composite_scores(cohort: Cohort, fit) -> np.ndarray:
    """Vectorized :func:`composite_score` over every row of ``cohort``."""
    missing = [m for m in fit.coefficients if m not in cohort.markers]
    if missing:
        raise CohortError(f"missing marker {missing[0]!r}")
    eta = np.full(cohort.n, float(fit.intercept))
    for name, beta in fit.coefficients.items():
        eta = eta + beta * cohort.markers[name]
    if not np.all(np.isfinite(eta)):
        raise CohortError("non-finite linear predictor")
    from scipy.special import expit

    return expit(eta)
