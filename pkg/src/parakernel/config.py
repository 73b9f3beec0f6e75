"""Run configuration: a strict INI dialect on top of :mod:`configparser`.

Every key is typed by the schema below; unknown sections or keys, duplicate
keys and malformed values are rejected with the offending line number.
Potentials live in ``[potential.NAME]`` sections and are referenced by NAME.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .errors import ConfigError

GEOMETRY_KINDS = ("flat-plane", "half-cylinder", "model", "log-plane")
POTENTIAL_KINDS = ("bump", "power", "zero", "sum")
ENVELOPES = ("subcritical", "critical")


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _name_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    parse.__name__ = "choice"
    return parse


def _optional(kind):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else kind(text)

    parse.__name__ = kind.__name__
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
        "quad_rtol": (float, 1e-8),
    },
    "geometry": {
        "kind": (_choice(GEOMETRY_KINDS), "flat-plane"),
        "N": (_optional(int), None),
        "beta": (float, 0.5),
        "blend_radius": (float, 1.0),
        "grid.decades": (float, 6.0),
        "grid.per_decade": (int, 64),
    },
    "profile": {
        "potential": (str, "q"),
        "tol": (float, 1e-10),
    },
    "classify": {
        "potential": (str, "q"),
        "flux_rel": (float, 1e-6),
        "growth_threshold": (float, 3.0),
    },
    "coupling": {
        "w1": (str, "w1"),
        "w2": (str, "w2"),
        "q": (str, "q"),
        "c_lo": (float, 0.0),
        "c_hi": (float, 10.0),
        "tol": (float, 1e-3),
        "retry_budget": (int, 3),
    },
    "green": {
        "profile": (str, "q"),
        "r_min": (float, 10.0),
        "r_max": (float, 1e3),
        "per_decade": (int, 16),
        "norm_potential": (_optional(str), None),
        "samples": (_float_list, (0.0, 1.0, 3.0, 10.0)),
    },
    "kato": {
        "potential": (str, "q"),
        "k_max": (int, 60),
        "rel_tol": (float, 1e-4),
        "div_tol": (float, 1e-2),
    },
    "heat": {
        "potential": (str, "q"),
        "r_max": (_optional(float), None),
        "t_min": (float, 1.0),
        "t_max": (float, 100.0),
        "t_points": (int, 9),
        "per_decade": (int, 64),
        "theta": (float, 0.5),
        "step_ratio": (float, 0.02),
        "delta_width": (float, 0.1),
        "envelope": (_choice(ENVELOPES), "subcritical"),
        "r_factor": (float, 3.0),
        "band_limit": (float, 50.0),
        "gaussian_params": (_float_list, (1 / 8, 1 / 6, 1 / 4, 1 / 2)),
    },
    "montecarlo": {
        "profile": (str, "q"),
        "potential": (str, "w"),
        "x0": (float, 0.0),
        "T": (float, 1000.0),
        "dt": (float, 1e-3),
        "paths": (int, 10000),
        "r_out": (_optional(float), None),
        "refine": (_bool, False),
    },
}

POTENTIAL_SCHEMA = {
    "kind": (_choice(POTENTIAL_KINDS), None),
    "center": (float, None),
    "width": (float, None),
    "amplitude": (float, 1.0),
    "exponent": (float, None),
    "coupling": (float, 1.0),
    "terms": (_name_list, ()),
}

_REQUIRED = {"bump": ("center", "width"), "power": ("exponent",), "sum": ("terms",), "zero": ()}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=#\s][^=#]*?)\s*=")


@dataclass
class RunConfig:
    sections: dict
    potentials: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def seed(self):
        return self.sections["run"]["seed"]

    @property
    def out(self):
        return self.sections["run"]["out"]

    def geometry(self):
        from . import geometry

        g = self.sections["geometry"]
        return geometry.build(
            g["kind"], dimension=g["N"], beta=g["beta"], blend_radius=g["blend_radius"],
            quad_rtol=self.sections["run"]["quad_rtol"], per_decade=g["grid.per_decade"],
        )

    @property
    def r_max(self):
        return 10.0 ** self.sections["geometry"]["grid.decades"]

    def potential(self, name, _seen=()):
        from . import potentials

        if name not in self.potentials:
            raise ConfigError(f"potential '{name}' is not defined (missing [potential.{name}])")
        if name in _seen:
            raise ConfigError(f"potential '{name}' refers to itself")
        fields = self.potentials[name]
        terms = [self.potential(t, (*_seen, name)) for t in fields["terms"]]
        return potentials.build(
            fields["kind"], center=fields["center"], width=fields["width"], amplitude=fields["amplitude"],
            exponent=fields["exponent"], coupling=fields["coupling"], terms=terms,
        )


def _line_index(text):
    """(section, key) -> 1-based line number, and section -> header line."""
    keys, heads = {}, {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            heads.setdefault(section, n)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            keys.setdefault((section, m.group(1).strip()), n)
    return keys, heads


def _schema_for(section):
    if section.startswith("potential."):
        return POTENTIAL_SCHEMA
    return SCHEMA.get(section)


def _typed(schema, section, raw, lines):
    out = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw[key]!r} ({exc})", lines.get((section, key))
                ) from None
        else:
            out[key] = default
    return out


def parse_config(text, overrides=()):
    """Parse config text; ``overrides`` are ``section.key=value`` strings applied on top."""
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None, strict=True, empty_lines_in_values=False, default_section="\0",
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key '{exc.option}' in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", line) from None

    lines, heads = _line_index(text)
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    explicit = {(s, k) for s, kv in raw.items() for k in kv}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        path, value = item.split("=", 1)
        parts = path.strip().split(".")
        # potential sections carry a dotted name, geometry keys may be dotted
        n_section = 2 if parts[0] == "potential" else 1
        section, key = ".".join(parts[:n_section]), ".".join(parts[n_section:])
        if not key:
            raise ConfigError(f"override has no key: {item!r}")
        raw.setdefault(section, {})[key] = value.strip()
        explicit.add((section, key))

    sections = {}
    pots = {}
    for section, kv in raw.items():
        schema = _schema_for(section)
        if schema is None:
            raise ConfigError(f"unknown section [{section}]", heads.get(section))
        for key in kv:
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in [{section}]", lines.get((section, key)))
        typed = _typed(schema, section, kv, lines)
        if schema is POTENTIAL_SCHEMA:
            name = section.split(".", 1)[1]
            if not name:
                raise ConfigError("potential section needs a name", heads.get(section))
            if typed["kind"] is None:
                raise ConfigError(f"[{section}] needs a kind", heads.get(section))
            for req in _REQUIRED[typed["kind"]]:
                if typed[req] in (None, ()):
                    raise ConfigError(f"[{section}] kind {typed['kind']} needs '{req}'", heads.get(section))
            pots[name] = typed
        else:
            sections[section] = typed
    for section, schema in SCHEMA.items():
        if section not in sections:
            sections[section] = {k: d for k, (_, d) in schema.items()}
    return RunConfig(sections, pots, explicit)


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize(cfg):
    """Normalized text form: schema key order, one ``key = value`` per line."""
    chunks = []
    for section, schema in SCHEMA.items():
        body = [f"{k} = {_format(cfg.sections[section][k])}" for k in schema]
        chunks.append(f"[{section}]\n" + "\n".join(body))
    for name, fields in cfg.potentials.items():
        body = [f"{k} = {_format(fields[k])}" for k in POTENTIAL_SCHEMA if fields[k] not in (None, ())]
        chunks.append(f"[potential.{name}]\n" + "\n".join(body))
    return "\n\n".join(chunks) + "\n"
