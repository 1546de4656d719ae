"""Per-iteration solver traces and their CSV / JSON serialization.

Every solver records one row per iteration with enough information to
re-check the descent inequalities afterwards. Two schemas exist:

* ``gdtrace-v1`` — gradient descent; columns
  ``k, f, gradnorm, stepnorm, t, backtracks, costevals, gradevals``.
  The last record is the terminal iterate with the step fields zeroed.
* ``rtrtrace-v1`` — trust regions; columns
  ``k, f, gradnorm, delta, steptype, stepnorm, modeldec, rho, accepted,
  lambdamin``. Records exist only for attempted steps; terminal state
  lives in the certificate. ``lambdamin`` is NaN when the dense model
  eigendecomposition was not computed that iteration, and ``rho`` is NaN
  for steps accepted by the limit-of-precision guard.

JSON artifacts additionally carry the solver config and the smoothness
constants observed along the run; NaN is stored as null.
"""

import csv
import enum
import json
import math
from dataclasses import dataclass, field

from .errors import FormatError

GD_SCHEMA = "gdtrace-v1"
RTR_SCHEMA = "rtrtrace-v1"

GD_COLUMNS = ("k", "f", "gradnorm", "stepnorm", "t", "backtracks", "costevals", "gradevals")
RTR_COLUMNS = (
    "k", "f", "gradnorm", "delta", "steptype", "stepnorm", "modeldec", "rho",
    "accepted", "lambdamin",
)


class GDStatus(enum.Enum):
    GRAD_TOLERANCE_MET = "GradToleranceMet"
    ITER_CAP_REACHED = "IterCapReached"


class RTRStatus(enum.Enum):
    FIRST_ORDER_MET = "FirstOrderMet"
    SECOND_ORDER_MET = "SecondOrderMet"
    ITER_CAP = "IterCap"


class StepType(enum.Enum):
    FIRST_ORDER = "first"
    SECOND_ORDER = "second"


@dataclass
class GDRecord:
    k: int
    f: float
    gradnorm: float
    stepnorm: float
    t: float
    backtracks: int
    costevals: int
    gradevals: int


@dataclass
class RTRRecord:
    k: int
    f: float
    gradnorm: float
    delta: float
    steptype: StepType
    stepnorm: float
    modeldec: float
    rho: float
    accepted: bool
    lambdamin: float


@dataclass
class GDTrace:
    records: list = field(default_factory=list)
    status: GDStatus = None
    config: dict = field(default_factory=dict)
    observed: dict = field(default_factory=dict)

    schema = GD_SCHEMA

    @property
    def iterations(self):
        """Number of steps taken (the trailing record is the terminal iterate)."""
        return max(0, len(self.records) - 1)


@dataclass
class RTRTrace:
    records: list = field(default_factory=list)
    status: RTRStatus = None
    config: dict = field(default_factory=dict)
    observed: dict = field(default_factory=dict)

    schema = RTR_SCHEMA

    @property
    def iterations(self):
        """Number of attempted steps."""
        return len(self.records)


def _cell(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)  # round-trips exactly
    return str(value)


def write_csv(trace, path):
    if isinstance(trace, GDTrace):
        columns = GD_COLUMNS
    elif isinstance(trace, RTRTrace):
        columns = RTR_COLUMNS
    else:
        raise FormatError(f"cannot serialize {type(trace).__name__} to CSV")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in trace.records:
            writer.writerow([_cell(getattr(rec, c)) for c in columns])


def read_csv(path):
    """Parse a trace CSV back into a record-only trace (no config/status)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty trace file")
    header = tuple(rows[0])
    if header == GD_COLUMNS:
        trace = GDTrace()
        for row in rows[1:]:
            k, f, gn, sn, t, bt, ce, ge = row
            trace.records.append(GDRecord(int(k), float(f), float(gn), float(sn),
                                          float(t), int(bt), int(ce), int(ge)))
        return trace
    if header == RTR_COLUMNS:
        trace = RTRTrace()
        for row in rows[1:]:
            k, f, gn, d, st, sn, md, rho, acc, lam = row
            trace.records.append(RTRRecord(int(k), float(f), float(gn), float(d),
                                           StepType(st), float(sn), float(md),
                                           float(rho), acc == "1", float(lam)))
        return trace
    raise FormatError(f"{path}: unrecognized trace header {header}")


def _float_out(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _float_in(x):
    return math.nan if x is None else float(x)


def to_json_dict(trace):
    if isinstance(trace, GDTrace):
        records = [
            {"k": r.k, "f": r.f, "gradnorm": r.gradnorm, "stepnorm": r.stepnorm,
             "t": _float_out(r.t), "backtracks": r.backtracks,
             "costevals": r.costevals, "gradevals": r.gradevals}
            for r in trace.records
        ]
    elif isinstance(trace, RTRTrace):
        records = [
            {"k": r.k, "f": r.f, "gradnorm": r.gradnorm, "delta": r.delta,
             "steptype": r.steptype.value, "stepnorm": r.stepnorm,
             "modeldec": r.modeldec, "rho": _float_out(r.rho),
             "accepted": r.accepted, "lambdamin": _float_out(r.lambdamin)}
            for r in trace.records
        ]
    else:
        raise FormatError(f"cannot serialize {type(trace).__name__} to JSON")
    return {
        "schema": trace.schema,
        "status": trace.status.value if trace.status else None,
        "config": {k: _float_out(v) for k, v in trace.config.items()},
        "observed": {k: _float_out(v) for k, v in trace.observed.items()},
        "records": records,
    }


def from_json_dict(doc):
    schema = doc.get("schema")
    if schema == GD_SCHEMA:
        trace = GDTrace(
            status=GDStatus(doc["status"]) if doc.get("status") else None,
            config=doc.get("config", {}),
            observed={k: _float_in(v) for k, v in doc.get("observed", {}).items()},
        )
        for r in doc["records"]:
            trace.records.append(GDRecord(
                int(r["k"]), float(r["f"]), float(r["gradnorm"]), float(r["stepnorm"]),
                _float_in(r["t"]), int(r["backtracks"]),
                int(r["costevals"]), int(r["gradevals"])))
        return trace
    if schema == RTR_SCHEMA:
        trace = RTRTrace(
            status=RTRStatus(doc["status"]) if doc.get("status") else None,
            config=doc.get("config", {}),
            observed={k: _float_in(v) for k, v in doc.get("observed", {}).items()},
        )
        for r in doc["records"]:
            trace.records.append(RTRRecord(
                int(r["k"]), float(r["f"]), float(r["gradnorm"]), float(r["delta"]),
                StepType(r["steptype"]), float(r["stepnorm"]), float(r["modeldec"]),
                _float_in(r["rho"]), bool(r["accepted"]), _float_in(r["lambdamin"])))
        return trace
    raise FormatError(f"unsupported trace schema {schema!r}")


def write_json(trace, path):
    with open(path, "w") as fh:
        json.dump(to_json_dict(trace), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return from_json_dict(doc)
