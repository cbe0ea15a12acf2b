"""Dataset schema, JSON-Lines loading, and the planted-signal generator.

A sample couples a tokenized note, an indicators x time matrix, and a
binary label vector.  The synthetic generator ties every label to known
trigger tokens and a known channel mean shift, so accuracy and attention
placement can be checked against ground truth.

Dataset file: JSON-Lines, one object per line with keys ``id`` (string),
``note`` (array of strings), ``ts`` (array of N_S arrays of T numbers,
``null`` marks a missing value), ``y`` (array of N_Y 0/1 integers).
Schema file: JSON object with ``indicator_names``, ``label_names``, ``T``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError

__all__ = [
    "EhrSample",
    "TaskSchema",
    "SynthSpec",
    "DEFAULT_INDICATOR_NAMES",
    "DEFAULT_LABEL_NAMES",
    "DEFAULT_STOP_WORDS",
    "default_schema",
    "default_synth_spec",
    "load_schema",
    "save_schema",
    "load_dataset",
    "save_dataset",
    "generate_synthetic",
    "split",
    "normalize_text",
]

# The desk-scale task: 17 vital-sign/lab channels and 25 risk labels,
# labels grouped acute / chronic / mixed.
DEFAULT_INDICATOR_NAMES = [
    "Capillary refill rate",
    "Diastolic blood pressure",
    "Fraction inspired oxygen",
    "Glasgow coma scale eye opening",
    "Glasgow coma scale motor response",
    "Glasgow coma scale total",
    "Glasgow coma scale verbal response",
    "Glucose",
    "Heart rate",
    "Height",
    "Mean blood pressure",
    "Oxygen saturation",
    "Respiratory rate",
    "Systolic blood pressure",
    "Temperature",
    "Weight",
    "pH",
]

DEFAULT_LABEL_NAMES = [
    "Acute and unspecified renal failure",
    "Acute cerebrovascular disease",
    "Acute myocardial infarction",
    "Complications of surgical procedures or medical care",
    "Fluid and electrolyte disorders",
    "Gastrointestinal hemorrhage",
    "Other lower respiratory disease",
    "Other upper respiratory disease",
    "Pleurisy; pneumothorax; pulmonary collapse",
    "Pneumonia",
    "Respiratory failure; insufficiency; arrest",
    "Septicemia (except in labor)",
    "Shock",
    "Chronic kidney disease",
    "Chronic obstructive pulmonary disease and bronchiectasis",
    "Coronary atherosclerosis and other heart disease",
    "Diabetes mellitus without complication",
    "Disorders of lipid metabolism",
    "Essential hypertension",
    "Hypertension with complications and secondary hypertension",
    "Cardiac dysrhythmias",
    "Conduction disorders",
    "Congestive heart failure; nonhypertensive",
    "Diabetes mellitus with complications",
    "Other liver diseases",
]

DEFAULT_STOP_WORDS = frozenset(
    "a an and are as at be by for from has he in is it its of on or "
    "she that the this to was were will with".split()
)

_FILLER_VOCAB = (
    "patient admitted hospital stable daily noted plan continue monitor home "
    "review normal mild left right history exam followup medication dose "
    "improved tolerated discharged course consult labs status without also "
    "seen given started yesterday today morning evening regular diet activity "
    "rest reported denies afebrile alert oriented breath sound clear "
    "extremities edema none repeat order result pending chart nurse team "
    "service unit ward round note summary"
).split()


@dataclass
class EhrSample:
    """One record: note tokens, N_S x T indicator matrix, N_Y binary labels."""

    id: str
    note_tokens: list[str]
    timeseries: np.ndarray
    labels: np.ndarray

    def validate(self, schema: "TaskSchema") -> None:
        n_s, n_y = len(schema.indicator_names), len(schema.label_names)
        if len(self.note_tokens) < 1:
            raise DataFormatError(f"sample {self.id!r}: empty note")
        if self.timeseries.shape != (n_s, schema.T):
            raise DataFormatError(
                f"sample {self.id!r}: timeseries shape {self.timeseries.shape}, "
                f"expected ({n_s}, {schema.T})")
        if self.labels.shape != (n_y,):
            raise DataFormatError(
                f"sample {self.id!r}: {self.labels.shape[0]} labels, expected {n_y}")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataFormatError(f"sample {self.id!r}: labels must be 0/1")


@dataclass
class TaskSchema:
    """Names of the time-series channels and risk labels, plus the step count."""

    indicator_names: list[str]
    label_names: list[str]
    T: int

    def __post_init__(self):
        for group, names in (("indicator", self.indicator_names), ("label", self.label_names)):
            if len(names) == 0 or any(not n for n in names):
                raise ConfigError(f"{group} names must be nonempty")
            if len(set(names)) != len(names):
                raise ConfigError(f"{group} names must be unique")
        if self.T < 1:
            raise ConfigError(f"T must be positive, got {self.T}")

    @property
    def n_indicators(self) -> int:
        return len(self.indicator_names)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)


def default_schema(T: int = 48) -> TaskSchema:
    return TaskSchema(list(DEFAULT_INDICATOR_NAMES), list(DEFAULT_LABEL_NAMES), T)


def load_schema(path) -> TaskSchema:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    missing = {"indicator_names", "label_names", "T"} - set(raw)
    if missing:
        raise DataFormatError(f"{path}: schema missing keys {sorted(missing)}")
    return TaskSchema(list(raw["indicator_names"]), list(raw["label_names"]), int(raw["T"]))


def save_schema(schema: TaskSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"indicator_names": schema.indicator_names,
                   "label_names": schema.label_names,
                   "T": schema.T}, fh, indent=2)
        fh.write("\n")


_SAMPLE_KEYS = {"id", "note", "ts", "y"}


def load_dataset(path, schema: TaskSchema,
                 reference_values: dict[str, float] | None = None) -> list[EhrSample]:
    """Read and validate a JSON-Lines dataset.

    ``null`` entries in ``ts`` are imputed from ``reference_values`` keyed by
    indicator name (0.0 when the table has no entry).  Every violation is
    reported with its line number.
    """
    n_s, n_y, t_steps = schema.n_indicators, schema.n_labels, schema.T
    refs = [float((reference_values or {}).get(name, 0.0)) for name in schema.indicator_names]
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise DataFormatError(f"{path}:{lineno}: record must be an object")
            unknown = set(raw) - _SAMPLE_KEYS
            if unknown:
                raise DataFormatError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            missing = _SAMPLE_KEYS - set(raw)
            if missing:
                raise DataFormatError(f"{path}:{lineno}: missing fields {sorted(missing)}")

            note = raw["note"]
            if not isinstance(note, list) or len(note) < 1 or not all(isinstance(t, str) for t in note):
                raise DataFormatError(f"{path}:{lineno}: 'note' must be a nonempty array of strings")

            ts_raw = raw["ts"]
            if not isinstance(ts_raw, list) or len(ts_raw) != n_s:
                got = len(ts_raw) if isinstance(ts_raw, list) else type(ts_raw).__name__
                raise DataFormatError(f"{path}:{lineno}: 'ts' must have {n_s} rows, got {got}")
            ts = np.empty((n_s, t_steps))
            for i, row in enumerate(ts_raw):
                if not isinstance(row, list) or len(row) != t_steps:
                    raise DataFormatError(
                        f"{path}:{lineno}: 'ts' row {i} must have {t_steps} values")
                for j, v in enumerate(row):
                    if v is None:
                        ts[i, j] = refs[i]
                    elif isinstance(v, (int, float)) and not isinstance(v, bool):
                        ts[i, j] = float(v)
                    else:
                        raise DataFormatError(
                            f"{path}:{lineno}: 'ts' row {i} entry {j} is not a number")

            y_raw = raw["y"]
            if not isinstance(y_raw, list) or len(y_raw) != n_y:
                raise DataFormatError(f"{path}:{lineno}: 'y' must have {n_y} entries")
            if any(v not in (0, 1) or isinstance(v, bool) for v in y_raw):
                raise DataFormatError(f"{path}:{lineno}: 'y' entries must be 0 or 1")

            sample = EhrSample(id=str(raw["id"]), note_tokens=[str(t) for t in note],
                               timeseries=ts, labels=np.array(y_raw, dtype=np.int64))
            samples.append(sample)
    return samples


def save_dataset(samples: list[EhrSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"id": s.id,
                   "note": s.note_tokens,
                   "ts": [[float(v) for v in row] for row in s.timeseries],
                   "y": [int(v) for v in s.labels]}
            fh.write(json.dumps(rec) + "\n")


@dataclass
class SynthSpec:
    """Recipe for planted-signal data.

    Each label owns a disjoint set of trigger tokens and one channel with a
    mean shift; positive labels plant both signals.  ``token_noise_rate``
    is the per-position chance that a filler token is replaced by a random
    trigger token unrelated to the sample's labels, which keeps the text
    signal imperfect.
    """

    seed: int
    n_samples: int
    trigger_tokens: list[list[str]]
    trigger_channels: list[tuple[int, float]]
    base_label_rate: float = 0.3
    token_noise_rate: float = 0.02
    note_length: int = 40
    triggers_per_positive: int = 2
    channel_baselines: list[float] | None = None
    filler_vocab: list[str] = field(default_factory=lambda: list(_FILLER_VOCAB))

    def validate(self, schema: TaskSchema) -> None:
        n_y, n_s = schema.n_labels, schema.n_indicators
        if len(self.trigger_tokens) != n_y or len(self.trigger_channels) != n_y:
            raise ConfigError("need one trigger token set and one trigger channel per label")
        filler = set(self.filler_vocab)
        for j, toks in enumerate(self.trigger_tokens):
            if not toks:
                raise ConfigError(f"label {j} has an empty trigger set")
            if filler & set(toks):
                raise ConfigError(f"label {j} trigger tokens overlap the filler vocabulary")
        for j, (ch, _) in enumerate(self.trigger_channels):
            if not 0 <= ch < n_s:
                raise ConfigError(f"label {j} trigger channel {ch} out of range")
        if self.channel_baselines is not None and len(self.channel_baselines) != n_s:
            raise ConfigError("need one baseline per indicator channel")
        if not 0.0 <= self.base_label_rate <= 1.0:
            raise ConfigError("base_label_rate must lie in [0, 1]")
        if self.note_length < n_y:
            raise ConfigError("note_length must be at least the label count")
        if self.triggers_per_positive < 1:
            raise ConfigError("triggers_per_positive must be >= 1")

    def all_trigger_tokens(self) -> list[str]:
        return [t for toks in self.trigger_tokens for t in toks]


def default_synth_spec(schema: TaskSchema, seed: int = 0, n_samples: int = 1000,
                       base_label_rate: float = 0.3, token_noise_rate: float = 0.02,
                       note_length: int = 32, triggers_per_positive: int = 2,
                       channel_shift: float = 2.0) -> SynthSpec:
    """Two trigger tokens per label; label j shifts channel j mod N_S."""
    n_y, n_s = schema.n_labels, schema.n_indicators
    spec = SynthSpec(
        seed=seed,
        n_samples=n_samples,
        trigger_tokens=[[f"marker{j}a", f"marker{j}b"] for j in range(n_y)],
        trigger_channels=[(j % n_s, channel_shift) for j in range(n_y)],
        base_label_rate=base_label_rate,
        token_noise_rate=token_noise_rate,
        note_length=note_length,
        triggers_per_positive=triggers_per_positive,
    )
    spec.validate(schema)
    return spec


def generate_synthetic(spec: SynthSpec, schema: TaskSchema) -> list[EhrSample]:
    """Draw ``spec.n_samples`` records, deterministic in ``spec.seed``.

    Per sample: labels are independent Bernoulli(base_label_rate); the time
    series is unit gaussian noise plus each positive label's mean shift on
    its channel; the note is filler text with noise substitutions, then one
    trigger token per positive label planted at distinct positions.
    """
    spec.validate(schema)
    rng = np.random.default_rng(spec.seed)
    n_s, n_y, t_steps = schema.n_indicators, schema.n_labels, schema.T
    all_triggers = spec.all_trigger_tokens()
    # Distinct per-channel reference levels, like real vitals; without them
    # the parameter-shared recurrent encoder cannot tell channels apart.
    baselines = np.asarray(spec.channel_baselines) if spec.channel_baselines is not None \
        else np.linspace(-3.0, 3.0, n_s)
    samples = []
    for i in range(spec.n_samples):
        y = (rng.random(n_y) < spec.base_label_rate).astype(np.int64)
        ts = baselines[:, None] + rng.standard_normal((n_s, t_steps))
        for j in np.flatnonzero(y):
            ch, shift = spec.trigger_channels[j]
            ts[ch] += shift

        note = [spec.filler_vocab[k] for k in rng.integers(0, len(spec.filler_vocab),
                                                           size=spec.note_length)]
        noise_mask = rng.random(spec.note_length) < spec.token_noise_rate
        for pos in np.flatnonzero(noise_mask):
            note[pos] = all_triggers[rng.integers(0, len(all_triggers))]
        positives = np.flatnonzero(y)
        if positives.size:
            # One guaranteed slot per positive label, then extra copies
            # round-robin while distinct positions remain.
            want = min(positives.size * spec.triggers_per_positive, spec.note_length)
            slots = rng.choice(spec.note_length, size=want, replace=False)
            for k, pos in enumerate(slots):
                toks = spec.trigger_tokens[positives[k % positives.size]]
                note[pos] = toks[rng.integers(0, len(toks))]

        samples.append(EhrSample(id=f"synth-{i:05d}", note_tokens=note,
                                 timeseries=ts, labels=y))
    return samples


def split(dataset: list[EhrSample], ratio: float, seed: int) -> tuple[list[EhrSample], list[EhrSample]]:
    """Seeded shuffle then cut; the two parts are disjoint and exhaustive."""
    if len(dataset) < 2:
        raise ConfigError("need at least 2 samples to split")
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie strictly in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(round(ratio * len(dataset)))
    train = [dataset[k] for k in order[:cut]]
    test = [dataset[k] for k in order[cut:]]
    return train, test


def normalize_text(text: str, stop_words: frozenset[str] | set[str] = DEFAULT_STOP_WORDS) -> list[str]:
    """Lowercase, strip non-alphabetic characters, drop stop words."""
    cleaned = re.sub(r"[^a-z]+", " ", text.lower())
    return [tok for tok in cleaned.split() if tok not in stop_words]
