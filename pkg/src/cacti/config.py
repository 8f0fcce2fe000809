"""Flat ``section.key = value`` run configuration.

Every run writes its resolved configuration next to its outputs, so a
result can be regenerated from the echo alone. Randomized elements need an
explicit seed; a missing seed raises :class:`ConfigError`.
"""

import math
from dataclasses import dataclass, field

from .forward_model import NoiseModel, generate_mask, triangle_positions
from .gap import SolverConfig
from .scenes import SceneSpec


class ConfigError(ValueError):
    pass


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _str(v):
    return str(v).strip()


def _ints(v):
    if isinstance(v, (tuple, list)):
        return tuple(int(x) for x in v)
    return tuple(int(x) for x in str(v).split(",") if x.strip())


def _floats(v):
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _strs(v):
    if isinstance(v, (tuple, list)):
        return tuple(str(x) for x in v)
    return tuple(x.strip() for x in str(v).split(",") if x.strip())


# key -> (parser, default); None marks "unset".
SCHEMA = {
    "scene.kind": (_str, "moving_square"),
    "scene.rows": (_int, 64),
    "scene.cols": (_int, 64),
    "scene.frames": (_int, None),
    "scene.seed": (_int, None),
    "scene.size": (_int, None),
    "scene.velocity": (_floats, None),
    "scene.angular_step": (_float, None),
    "scene.spokes": (_int, None),
    "mask.rows": (_int, None),
    "mask.cols": (_int, None),
    "mask.fill": (_float, 0.5),
    "mask.seed": (_int, None),
    "mask.upsample": (_int, 1),
    "motion.C": (_float, 14.0),
    "motion.d": (_float, 1.0),
    "noise.kind": (_str, "none"),
    "noise.sigma": (_float, 0.0),
    "noise.seed": (_int, None),
    "solver.transform": (_strs, ("dct", "dct", "dct")),
    "solver.partition": (_str, "block"),
    "solver.block": (_ints, (2, 2, 2)),
    "solver.weighting": (_str, "uniform"),
    "solver.radius_rule": (_str, "nondecreasing"),
    "solver.max_iterations": (_int, 300),
    "solver.stop_tolerance": (_float, 1e-6),
    "output.snapshot": (_str, None),
    "output.truth": (_str, None),
    "output.mask": (_str, None),
}


def _format(value):
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        values = {}
        for key, raw in self.values.items():
            values[key] = self._parse(key, raw)
        self.values = values

    @staticmethod
    def _parse(key, raw):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        if raw is None:
            return None
        try:
            return parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key][1])

    def update(self, overrides):
        """Apply overrides, skipping ``None`` values (flags that were not given)."""
        for key, raw in overrides.items():
            if raw is not None:
                self.values[key] = self._parse(key, raw)
        return self

    def require(self, key):
        value = self[key]
        if value is None:
            raise ConfigError(f"{key} is required")
        return value

    def to_text(self):
        lines = []
        for key in SCHEMA:
            value = self[key]
            if value is not None:
                lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        return cls(values)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    # Builders ---------------------------------------------------------------

    def n_frames(self):
        return triangle_positions(self["motion.C"], self["motion.d"]).n_frames

    def profile(self):
        try:
            return triangle_positions(self["motion.C"], self["motion.d"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def scene_spec(self):
        params = {}
        for key, name in (
            ("scene.size", "size"),
            ("scene.velocity", "velocity"),
            ("scene.angular_step", "angular_step"),
            ("scene.spokes", "spokes"),
        ):
            if self[key] is not None:
                params[name] = self[key]
        frames = self["scene.frames"] or self.n_frames()
        try:
            return SceneSpec(
                kind=self["scene.kind"],
                rows=self["scene.rows"],
                cols=self["scene.cols"],
                frames=frames,
                seed=self.require("scene.seed"),
                params=params,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def mask(self):
        """Mask sized to stay inside the active area for any ``d`` at this ``C``."""
        rows = self["mask.rows"] or self["scene.rows"] - math.ceil(self["motion.C"])
        cols = self["mask.cols"] or self["scene.cols"]
        try:
            return generate_mask(
                rows, cols, self["mask.fill"], self.require("mask.seed"), self["mask.upsample"]
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def noise(self):
        kind = self["noise.kind"]
        if kind == "none":
            return NoiseModel()
        try:
            return NoiseModel(kind, self["noise.sigma"], self.require("noise.seed"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def solver(self):
        transform = self["solver.transform"]
        if len(transform) == 1:
            transform = transform * 3
        try:
            return SolverConfig(
                max_iterations=self["solver.max_iterations"],
                stop_tolerance=self["solver.stop_tolerance"],
                transform=tuple(transform),
                partition=self["solver.partition"],
                block_shape=tuple(self["solver.block"]),
                weighting=self["solver.weighting"],
                radius_rule=self["solver.radius_rule"],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

