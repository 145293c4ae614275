"""Domain types, coordinate conversions and scenario file handling.

Conventions used throughout the package:

* positions are 2-vectors in meters, bearings in radians in (-pi, pi],
  measured with the full-quadrant arctangent theta = atan2(y, x);
* range cells are the annuli ((c-1)*r_bin, c*r_bin], indexed from 1; a
  radius exactly on a cell edge belongs to the inner-indexed cell with
  ratio beta = 1, so the cell map partitions r > 0;
* matched-filter bin 0 carries the inner spill of cell-1 targets and is
  included in the measurement by default (``Scenario.include_bin0``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OutOfCoverage, ParseError, SchemaError, ZeroRange

# Default radar constants (meters, watts); applied when a scenario file
# omits the "radar" block.
DEFAULT_WAVELENGTH = 0.3
DEFAULT_BIN_WIDTH = 30.0
DEFAULT_SNAPSHOTS = 128
DEFAULT_SCATTER_VAR = 1e-4
DEFAULT_NOISE_VAR = 1.0
DEFAULT_POWER = 1.0
DEFAULT_MAX_RANGE = 5000.0

TRANSCEIVER = "transceiver"
SEPARATE = "separate"


@dataclass(frozen=True)
class RadarConfig:
    """Global radar constants.

    Attributes:
        wavelength: carrier wavelength lambda (m), > 0.
        bin_width: range resolution r_bin (m), > 0.
        snapshots: number of snapshots K, >= 1.
        scatter_var: variance of the real/imaginary scatter amplitude parts.
        noise_var: variance of the additive noise per real component, > 0.
        powers: transmitted power per transmitter (W), all > 0.
        max_range: maximum coverage range (m).
    """

    wavelength: float = DEFAULT_WAVELENGTH
    bin_width: float = DEFAULT_BIN_WIDTH
    snapshots: int = DEFAULT_SNAPSHOTS
    scatter_var: float = DEFAULT_SCATTER_VAR
    noise_var: float = DEFAULT_NOISE_VAR
    powers: tuple = (DEFAULT_POWER,)
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if self.scatter_var < 0:
            raise ValueError("scatter_var must be >= 0")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if any(p <= 0 for p in self.powers):
            raise ValueError("all transmit powers must be positive")

    def with_powers(self, powers):
        return replace(self, powers=tuple(float(p) for p in powers))


def _as_positions(arr):
    out = np.atleast_2d(np.asarray(arr, dtype=float))
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValueError("positions must be an (n, 2) array")
    out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ArrayGeometry:
    """Transmitter/receiver positions (m).

    In transceiver mode the same physical antennas transmit and receive,
    so ``tx`` and ``rx`` refer to one shared position list.
    """

    tx: np.ndarray
    rx: np.ndarray
    mode: str = TRANSCEIVER
    centered: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tx", _as_positions(self.tx))
        object.__setattr__(self, "rx", _as_positions(self.rx))
        if self.mode not in (TRANSCEIVER, SEPARATE):
            raise ValueError(f"unknown array mode {self.mode!r}")

    @property
    def num_tx(self):
        return self.tx.shape[0]

    @property
    def num_rx(self):
        return self.rx.shape[0]

    def joint_centroid_sum(self):
        """Sum of all transmit and receive positions (not divided by count)."""
        return self.tx.sum(axis=0) + self.rx.sum(axis=0)

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return ArrayGeometry(self.tx + shift, self.rx + shift, self.mode,
                             self.centered)

    @staticmethod
    def transceiver(positions, centered=False):
        pos = _as_positions(positions)
        return ArrayGeometry(pos, pos, TRANSCEIVER, centered)


@dataclass(frozen=True)
class PlacementConstraints:
    """Lower/upper distance rings for constrained transmit-receive pairs.

    ``pair_bounds`` maps a 0-based (rx_index, tx_index) pair to a specific
    (d, e) override; every other constrained pair uses the uniform bounds.
    Self-pairs are never constrained in transceiver mode.
    """

    d: float
    e: float
    pair_bounds: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pair_bounds",
                           tuple((int(n), int(m), float(lo), float(hi))
                                 for n, m, lo, hi in self.pair_bounds))

    def bounds_for(self, n, m):
        for pn, pm, lo, hi in self.pair_bounds:
            if pn == n and pm == m:
                return lo, hi
        return self.d, self.e

    def constrained_pairs(self, mode, num_tx, num_rx):
        """Ordered (rx_index, tx_index) pairs that carry a distance ring."""
        if mode == TRANSCEIVER:
            return [(n, m) for m in range(num_tx) for n in range(num_rx)
                    if n != m]
        return [(n, m) for m in range(num_tx) for n in range(num_rx)]

    def violations(self, geometry, tol=0.0):
        """Max ring violation (m) over constrained pairs of ``geometry``."""
        worst = 0.0
        for n, m in self.constrained_pairs(geometry.mode, geometry.num_tx,
                                           geometry.num_rx):
            lo, hi = self.bounds_for(n, m)
            dist = float(np.linalg.norm(geometry.tx[m] - geometry.rx[n]))
            worst = max(worst, lo - dist - tol, dist - hi - tol, 0.0)
        return worst


@dataclass(frozen=True)
class TargetParams:
    """Per-target parameter tuple (cell, theta, beta, xi, zeta).

    ``beta`` is the fractional radial position inside cell ``cell``; the
    matched filter splits the target energy between bins cell and cell-1
    as (beta, 1-beta). ``xi``/``zeta`` are the mean real/imaginary
    reflection amplitudes.
    """

    cell: int
    theta: float
    beta: float
    xi: float
    zeta: float


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Scenario:
    """A radar, an array, placement constraints and the target set.

    Targets are stored cell-major (ascending cell, then insertion order);
    parameter stacking everywhere in the package follows this order with
    (theta, beta, xi, zeta) per target.
    """

    radar: RadarConfig
    array: ArrayGeometry
    constraints: PlacementConstraints
    targets: tuple
    include_bin0: bool = True

    def __post_init__(self):
        ordered = tuple(sorted(self.targets, key=lambda t: t.cell))
        object.__setattr__(self, "targets", ordered)

    @property
    def num_targets(self):
        return len(self.targets)

    @property
    def cell_span(self):
        """Largest occupied cell index C (0 when there are no targets)."""
        return max((t.cell for t in self.targets), default=0)

    def cell_counts(self):
        counts = {}
        for t in self.targets:
            counts[t.cell] = counts.get(t.cell, 0) + 1
        return counts

    def bins(self):
        """Matched-filter bin indices present in the stacked measurement."""
        first = 0 if self.include_bin0 else 1
        return list(range(first, self.cell_span + 1))

    def with_geometry(self, geometry):
        return replace(self, array=geometry)

    def with_targets(self, targets):
        return replace(self, targets=tuple(targets))

    def parameter_vector(self):
        """Stacked (theta, beta, xi, zeta) per target, cell-major."""
        return np.array([v for t in self.targets
                         for v in (t.theta, t.beta, t.xi, t.zeta)])

    def with_parameter_vector(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (4 * self.num_targets,):
            raise ValueError("parameter vector has wrong length")
        new = [replace(t, theta=vec[4 * i], beta=vec[4 * i + 1],
                       xi=vec[4 * i + 2], zeta=vec[4 * i + 3])
               for i, t in enumerate(self.targets)]
        return self.with_targets(new)


# ---------------------------------------------------------------------------
# coordinate / parameter conversions
# ---------------------------------------------------------------------------

def params_from_cartesian(xy, radar):
    """Convert a Cartesian position to (cell, theta, beta, r).

    r is the Euclidean range, theta = atan2(y, x), cell is the smallest
    integer with r <= cell * r_bin and beta = (r + (1 - cell) * r_bin) / r_bin
    lies in (0, 1].

    Raises:
        ZeroRange: for the origin (bearing undefined).
        OutOfCoverage: when r exceeds ``radar.max_range``.
    """
    x, y = float(xy[0]), float(xy[1])
    r = math.hypot(x, y)
    if r == 0.0:
        raise ZeroRange("target at the origin has no defined bearing")
    if r > radar.max_range:
        raise OutOfCoverage(f"range {r:.1f} m exceeds coverage "
                            f"{radar.max_range:.1f} m")
    cell = int(math.ceil(r / radar.bin_width))
    beta = r / radar.bin_width - (cell - 1)
    theta = math.atan2(y, x)
    return cell, theta, beta, r


def cartesian_from_params(params, radar):
    """Exact right-inverse of :func:`params_from_cartesian`."""
    r = (params.cell - 1 + params.beta) * radar.bin_width
    return np.array([r * math.cos(params.theta), r * math.sin(params.theta)])


def target_from_cartesian(xy, xi, zeta, radar):
    cell, theta, beta, _ = params_from_cartesian(xy, radar)
    return TargetParams(cell=cell, theta=theta, beta=beta, xi=xi, zeta=zeta)


def target_range(t, radar):
    return (t.cell - 1 + t.beta) * radar.bin_width


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_scenario(scenario, geometry_binding=False):
    """Collect invariant violations; an empty list means well-formed.

    Ring constraints against the current geometry are only checked when
    ``geometry_binding`` is set: baseline geometries (e.g. a half-wavelength
    ULA) legitimately violate the placement rings.
    """
    out = []
    arr = scenario.array
    if arr.num_tx < 1 or arr.num_rx < 1:
        out.append(Violation("EmptyArray", "need at least one tx and one rx"))
    if arr.mode == TRANSCEIVER:
        if arr.tx.shape != arr.rx.shape or not np.array_equal(arr.tx, arr.rx):
            out.append(Violation("ModeMismatch",
                                 "transceiver mode requires identical tx and "
                                 "rx position lists"))
    if len(scenario.radar.powers) != arr.num_tx:
        out.append(Violation("PowerCountMismatch",
                             f"{len(scenario.radar.powers)} powers for "
                             f"{arr.num_tx} transmitters"))
    if arr.centered:
        drift = float(np.linalg.norm(arr.joint_centroid_sum()))
        if drift > 1e-9 * scenario.radar.wavelength:
            out.append(Violation("CentroidOffset",
                                 f"joint centroid sum {drift:.3e} m"))

    cons = scenario.constraints
    pairs = cons.constrained_pairs(arr.mode, arr.num_tx, arr.num_rx)
    for n, m in pairs:
        lo, hi = cons.bounds_for(n, m)
        if not 0 < lo < hi:
            out.append(Violation("BadBounds",
                                 f"pair (rx {n}, tx {m}) needs 0 < d < e, "
                                 f"got d={lo}, e={hi}"))
    if geometry_binding:
        worst = cons.violations(arr)
        if worst > 1e-9:
            out.append(Violation("RingViolation",
                                 f"geometry violates distance rings by "
                                 f"{worst:.3e} m"))

    for i, t in enumerate(scenario.targets):
        if t.cell < 1:
            out.append(Violation("BadCellIndex",
                                 f"target {i}: cell {t.cell} < 1"))
        if not 0 <= t.beta <= 1:
            out.append(Violation("RatioOutOfRange",
                                 f"target {i}: beta {t.beta} outside [0, 1]"))
        if not -math.pi < t.theta <= math.pi:
            out.append(Violation("BearingOutOfRange",
                                 f"target {i}: theta {t.theta} outside "
                                 f"(-pi, pi]"))
        r = target_range(t, scenario.radar)
        if r > scenario.radar.max_range:
            out.append(Violation("OutOfCoverage",
                                 f"target {i}: range {r:.1f} m beyond "
                                 f"coverage"))
    return out


# ---------------------------------------------------------------------------
# scenario file format (UTF-8 JSON)
# ---------------------------------------------------------------------------

_RADAR_KEYS = {"lambda_m", "r_bin_m", "snapshots", "sigma2_alpha", "sigma2_w",
               "powers_w"}
_ARRAY_KEYS = {"mode", "tx", "rx"}
_CONSTRAINT_KEYS = {"d_m", "e_m", "pairs"}
_PAIR_KEYS = {"n", "m", "d_m", "e_m"}
_TARGET_XY_KEYS = {"x_m", "y_m", "xi", "zeta"}
_TARGET_PARAM_KEYS = {"cell", "theta_rad", "beta", "xi", "zeta"}
_TOP_KEYS = {"radar", "array", "constraints", "targets"}


def _reject_unknown(obj, allowed, where):
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) {sorted(unknown)} in {where}")


def _number(obj, key, where, default=None):
    if key not in obj:
        if default is None:
            raise SchemaError(f"missing required field {where}.{key}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"field {where}.{key} must be a number, "
                         f"got {val!r}")
    return float(val)


def _integer(obj, key, where, default=None):
    val = _number(obj, key, where, default)
    if val != int(val):
        raise ParseError(f"field {where}.{key} must be an integer")
    return int(val)


def _position_list(obj, key, where):
    if key not in obj:
        raise SchemaError(f"missing required field {where}.{key}")
    raw = obj[key]
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"field {where}.{key} must be a non-empty list of "
                         f"[x, y] pairs")
    pts = []
    for i, item in enumerate(raw):
        if (not isinstance(item, list) or len(item) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in item)):
            raise ParseError(f"field {where}.{key}[{i}] must be [x, y] "
                             f"numbers")
        pts.append([float(item[0]), float(item[1])])
    return np.array(pts)


def load_scenario(document, include_bin0=True):
    """Parse a UTF-8 JSON scenario document into a :class:`Scenario`.

    Omitted radar fields fall back to the default radar constants; omitted
    constraints fall back to d = lambda, e = 2 lambda. Unknown keys are
    rejected.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column "
                         f"{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "document")

    radar_doc = doc.get("radar", {})
    if not isinstance(radar_doc, dict):
        raise ParseError("field radar must be an object")
    _reject_unknown(radar_doc, _RADAR_KEYS, "radar")

    if "array" not in doc:
        raise SchemaError("missing required field array")
    array_doc = doc["array"]
    if not isinstance(array_doc, dict):
        raise ParseError("field array must be an object")
    _reject_unknown(array_doc, _ARRAY_KEYS, "array")
    mode = array_doc.get("mode", TRANSCEIVER)
    if mode not in (TRANSCEIVER, SEPARATE):
        raise ParseError(f"array.mode must be 'transceiver' or 'separate', "
                         f"got {mode!r}")
    tx = _position_list(array_doc, "tx", "array")
    if mode == TRANSCEIVER and "rx" not in array_doc:
        rx = tx
    else:
        rx = _position_list(array_doc, "rx", "array")
    geometry = ArrayGeometry(tx, rx, mode)

    wavelength = _number(radar_doc, "lambda_m", "radar", DEFAULT_WAVELENGTH)
    powers_raw = radar_doc.get("powers_w")
    if powers_raw is None:
        powers = (DEFAULT_POWER,) * geometry.num_tx
    else:
        if not isinstance(powers_raw, list):
            raise ParseError("field radar.powers_w must be a list of numbers")
        powers = []
        for i, p in enumerate(powers_raw):
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise ParseError(f"field radar.powers_w[{i}] must be a number")
            powers.append(float(p))
        powers = tuple(powers)
    radar = RadarConfig(
        wavelength=wavelength,
        bin_width=_number(radar_doc, "r_bin_m", "radar", DEFAULT_BIN_WIDTH),
        snapshots=_integer(radar_doc, "snapshots", "radar",
                           DEFAULT_SNAPSHOTS),
        scatter_var=_number(radar_doc, "sigma2_alpha", "radar",
                            DEFAULT_SCATTER_VAR),
        noise_var=_number(radar_doc, "sigma2_w", "radar", DEFAULT_NOISE_VAR),
        powers=powers,
    )

    cons_doc = doc.get("constraints", {})
    if not isinstance(cons_doc, dict):
        raise ParseError("field constraints must be an object")
    _reject_unknown(cons_doc, _CONSTRAINT_KEYS, "constraints")
    d = _number(cons_doc, "d_m", "constraints", radar.wavelength)
    e = _number(cons_doc, "e_m", "constraints", 2.0 * radar.wavelength)
    pair_bounds = []
    for i, pair in enumerate(cons_doc.get("pairs", [])):
        if not isinstance(pair, dict):
            raise ParseError(f"field constraints.pairs[{i}] must be an object")
        where = f"constraints.pairs[{i}]"
        _reject_unknown(pair, _PAIR_KEYS, where)
        pair_bounds.append((
            _integer(pair, "n", where) - 1,   # files are 1-based
            _integer(pair, "m", where) - 1,
            _number(pair, "d_m", where, d),
            _number(pair, "e_m", where, e),
        ))
    constraints = PlacementConstraints(d=d, e=e, pair_bounds=tuple(pair_bounds))

    if "targets" not in doc:
        raise SchemaError("missing required field targets")
    targets_doc = doc["targets"]
    if not isinstance(targets_doc, list):
        raise ParseError("field targets must be a list")
    targets = []
    for i, tdoc in enumerate(targets_doc):
        if not isinstance(tdoc, dict):
            raise ParseError(f"field targets[{i}] must be an object")
        where = f"targets[{i}]"
        keys = set(tdoc)
        if keys <= _TARGET_XY_KEYS and {"x_m", "y_m"} <= keys:
            xy = (_number(tdoc, "x_m", where), _number(tdoc, "y_m", where))
            targets.append(target_from_cartesian(
                xy, _number(tdoc, "xi", where), _number(tdoc, "zeta", where),
                radar))
        elif keys <= _TARGET_PARAM_KEYS and {"cell", "theta_rad",
                                             "beta"} <= keys:
            targets.append(TargetParams(
                cell=_integer(tdoc, "cell", where),
                theta=_number(tdoc, "theta_rad", where),
                beta=_number(tdoc, "beta", where),
                xi=_number(tdoc, "xi", where),
                zeta=_number(tdoc, "zeta", where),
            ))
        else:
            raise SchemaError(
                f"{where} must carry either (x_m, y_m, xi, zeta) or "
                f"(cell, theta_rad, beta, xi, zeta); got {sorted(keys)}")

    return Scenario(radar=radar, array=geometry, constraints=constraints,
                    targets=tuple(targets), include_bin0=include_bin0)


def scenario_to_dict(scenario):
    """Scenario as a plain dict in the scenario file schema."""
    arr = scenario.array
    doc = {
        "radar": {
            "lambda_m": scenario.radar.wavelength,
            "r_bin_m": scenario.radar.bin_width,
            "snapshots": scenario.radar.snapshots,
            "sigma2_alpha": scenario.radar.scatter_var,
            "sigma2_w": scenario.radar.noise_var,
            "powers_w": list(scenario.radar.powers),
        },
        "array": {
            "mode": arr.mode,
            "tx": arr.tx.tolist(),
            "rx": arr.rx.tolist(),
        },
        "constraints": {
            "d_m": scenario.constraints.d,
            "e_m": scenario.constraints.e,
        },
        "targets": [
            {"cell": t.cell, "theta_rad": t.theta, "beta": t.beta,
             "xi": t.xi, "zeta": t.zeta}
            for t in scenario.targets
        ],
    }
    if scenario.constraints.pair_bounds:
        doc["constraints"]["pairs"] = [
            {"n": n + 1, "m": m + 1, "d_m": lo, "e_m": hi}
            for n, m, lo, hi in scenario.constraints.pair_bounds
        ]
    return doc


def dump_scenario(scenario):
    return json.dumps(scenario_to_dict(scenario), indent=2)
