"""Ground-truthed synthetic telemetry for desk-scale evaluation.

Nominal behavior is a bank of per-sensor periodic value sequences locked to
one global phase: base sensors each play a random repeat-free cycle of a
common period, and coupled sensors replay a base sensor with a fixed lag.
The joint state space is therefore finite and fully covered by any training
run longer than the period, so a nominal test series (started at a random
phase offset) contains no novel words or novel word combinations. Three
anomaly kinds can be injected into the test series:

``unseen_letter``
    culprit sensors report a value absent from the training alphabet;
``unseen_word``
    culprits hold their current value, producing runs of known letters that
    never occur nominally (cycles are repeat-free; needs word_length >= 2
    downstream to materialize as unknown words);
``decoupling``
    coupled culprits keep playing their own cycle at a shifted phase,
    preserving per-sensor marginals while breaking the copy/lag relation
    and the joint-phase lock.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .evaluation import GroundTruthAnomaly

ANOMALY_KINDS = ("unseen_letter", "unseen_word", "decoupling")
NOVEL_VALUE = "99"


@dataclass
class AnomalyInjection:
    kind: str
    start: float
    duration: float
    sensors: object = 2  # explicit name list or a culprit count

    def resolve_window(self, length: int) -> tuple:
        start = _resolve_position(self.start, length)
        duration = _resolve_position(self.duration, length)
        if duration < 1:
            raise ValueError("anomaly duration must be >= 1")
        if start < 0 or start + duration > length:
            raise ValueError(f"anomaly window outside series: start={start}, duration={duration}")
        return start, start + duration


def _resolve_position(value, length: int) -> int:
    # floats strictly inside (0, 1) are relative to the series length
    if isinstance(value, float) and 0.0 < value < 1.0:
        return int(round(value * length))
    return int(value)


@dataclass
class SyntheticSpec:
    """Shape and dynamics of a generated train/test pair."""

    sensors: int = 20
    values_per_sensor: int = 4
    period: int = 12
    length: int = 5000
    coupled_fraction: float = 0.5
    lag: int = 1
    anomalies: list = field(default_factory=list)

    def __post_init__(self):
        if self.sensors < 1:
            raise ValueError("need at least one sensor")
        if self.values_per_sensor < 2:
            raise ValueError("need at least 2 values per sensor")
        if self.period < max(self.values_per_sensor, 3):
            raise ValueError("period must be at least max(values_per_sensor, 3)")
        if not 0.0 <= self.coupled_fraction < 1.0:
            raise ValueError("coupled_fraction must be in [0, 1)")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.length < self.period:
            raise ValueError("length must cover at least one period")

    @property
    def n_coupled(self) -> int:
        return int(self.sensors * self.coupled_fraction)

    @property
    def n_base(self) -> int:
        return self.sensors - self.n_coupled

    def sensor_names(self) -> list:
        return [f"Sensor{i}" for i in range(self.sensors)]

    def base_of(self, sensor_pos: int) -> int:
        """Base sensor position copied by a coupled sensor position."""
        if sensor_pos < self.n_base:
            raise ValueError(f"sensor position {sensor_pos} is a base sensor")
        return (sensor_pos - self.n_base) % self.n_base

    @classmethod
    def from_json_dict(cls, data: dict) -> "SyntheticSpec":
        anomalies = [
            AnomalyInjection(
                kind=a["type"],
                start=a["start"],
                duration=a["duration"],
                sensors=a.get("sensors", 2),
            )
            for a in data.get("anomalies", [])
        ]
        for a in anomalies:
            if a.kind not in ANOMALY_KINDS:
                raise ValueError(f"unknown anomaly type {a.kind!r}")
        return cls(
            sensors=int(data.get("sensors", 20)),
            values_per_sensor=int(data.get("values_per_sensor", 4)),
            period=int(data.get("period", 12)),
            length=int(data.get("length", 5000)),
            coupled_fraction=float(data.get("coupled_fraction", 0.5)),
            lag=int(data.get("lag", 1)),
            anomalies=anomalies,
        )

    def to_json_dict(self) -> dict:
        return {
            "sensors": self.sensors,
            "values_per_sensor": self.values_per_sensor,
            "period": self.period,
            "length": self.length,
            "coupled_fraction": self.coupled_fraction,
            "lag": self.lag,
            "anomalies": [
                {"type": a.kind, "start": a.start, "duration": a.duration, "sensors": a.sensors}
                for a in self.anomalies
            ],
        }


def _cycle_pattern(rng, period: int, values: int) -> np.ndarray:
    """Random length-``period`` sequence: no immediate repeats (wrap included),
    every value present."""
    while True:
        seq = np.empty(period, dtype=np.int64)
        seq[0] = rng.integers(values)
        for t in range(1, period):
            choices = [x for x in range(values) if x != seq[t - 1]]
            seq[t] = choices[rng.integers(len(choices))]
        if seq[-1] == seq[0]:
            continue
        if len(np.unique(seq)) == values:
            return seq


def _phase_positions(spec: SyntheticSpec, patterns, phases, offset: int, length: int) -> np.ndarray:
    cols = np.empty((length, spec.sensors), dtype=np.int64)
    t = np.arange(length)
    for p in range(spec.sensors):
        b = p if p < spec.n_base else spec.base_of(p)
        shift = phases[b] - (spec.lag if p >= spec.n_base else 0)
        cols[:, p] = patterns[b][(t + shift + offset) % spec.period]
    return cols


def _pick_culprits(spec: SyntheticSpec, anomaly: AnomalyInjection, used: set) -> list:
    names = spec.sensor_names()
    if isinstance(anomaly.sensors, (list, tuple)):
        positions = [names.index(s) for s in anomaly.sensors]
        if anomaly.kind == "decoupling" and any(p < spec.n_base for p in positions):
            raise ValueError("decoupling culprits must be coupled sensors")
        return positions
    count = int(anomaly.sensors)
    # default to coupled sensors so the injection does not propagate further
    eligible = [p for p in range(spec.n_base, spec.sensors) if p not in used]
    if len(eligible) < count:
        raise ValueError("not enough unused coupled sensors for anomaly injection")
    return eligible[:count]


def generate_synthetic(spec: SyntheticSpec, seed: int = 0):
    """Deterministic (train frame, test frame, truths) triple."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    patterns = [
        _cycle_pattern(rng, spec.period, spec.values_per_sensor) for _ in range(spec.n_base)
    ]
    phases = rng.integers(0, spec.period, size=spec.n_base)
    test_offset = int(rng.integers(1, spec.period))
    train = _phase_positions(spec, patterns, phases, 0, spec.length)
    test = _phase_positions(spec, patterns, phases, test_offset, spec.length)
    names = spec.sensor_names()

    truths = []
    used = set()
    test_str = test.astype(str).astype(object)
    for anomaly in spec.anomalies:
        if anomaly.kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly type {anomaly.kind!r}")
        lo, hi = anomaly.resolve_window(spec.length)
        positions = _pick_culprits(spec, anomaly, used)
        used.update(positions)
        affected = set(positions)
        for p in positions:
            if anomaly.kind == "unseen_letter":
                test_str[lo:hi, p] = NOVEL_VALUE
            elif anomaly.kind == "unseen_word":
                held = test_str[max(lo - 1, 0), p]
                test_str[lo:hi, p] = held
            else:  # decoupling: own cycle, shifted phase
                b = spec.base_of(p) if p >= spec.n_base else p
                shift = phases[b] - (spec.lag if p >= spec.n_base else 0)
                delta = int(rng.integers(1, spec.period))
                t = np.arange(lo, hi)
                run = patterns[b][(t + shift + test_offset + delta) % spec.period]
                test_str[lo:hi, p] = run.astype(str)
            # copy sensors replay an injected base sensor's window with lag
            if p < spec.n_base:
                for c in range(spec.n_base, spec.sensors):
                    if spec.base_of(c) != p:
                        continue
                    span_lo = lo + spec.lag
                    span_hi = min(hi + spec.lag, spec.length)
                    if span_lo < span_hi:
                        test_str[span_lo:span_hi, c] = test_str[span_lo - spec.lag : span_hi - spec.lag, p]
                        affected.add(c)
        truths.append(
            GroundTruthAnomaly(
                start=lo,
                end=hi - 1,
                culprit_sensors=frozenset(names[p] for p in sorted(affected)),
            )
        )
    truths.sort(key=lambda t: t.start)

    index = pd.RangeIndex(spec.length, name="time")
    train_frame = pd.DataFrame(train.astype(str), columns=names, index=index)
    test_frame = pd.DataFrame(test_str.astype(str), columns=names, index=index)
    return train_frame, test_frame, truths
