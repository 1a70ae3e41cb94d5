"""Experiment configuration: sectioned key-value text, validation, presets.

A configuration file has [channel], [grid], [noise], [power], [harness],
[sweep], [optimizer] sections plus one [link:<label>] section per
scheme/detector pair under comparison.  Unknown sections or keys are
rejected; parse errors carry the offending key path.
"""
from __future__ import annotations

import configparser
import importlib.resources
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .modulation import SCHEME_KINDS, SchemeDescriptor, bits_per_symbol
from .types import ChannelGeometry

DETECTOR_KINDS = (
    "ftd",
    "atd",
    "mlda",
    "mlsd",
    "bandedmlsd",
    "ads",
    "addf",
    "dmads",
    "dfesprt",
    "mcd",
    "mcpm2stage",
)

SWEEP_AXES = ("m", "tau", "snr_db", "t_b")

OPTIMIZE = "optimize"
ANALYTIC = "analytic"


class ConfigError(ValueError):
    """Invalid configuration; message lists every offending key path."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class LinkSpec:
    """One scheme/detector pair under test, as configured."""

    label: str
    scheme_kind: str = "bcsk"
    k: int = 2
    k_active: int = 1
    b_info: int = 1
    alpha: Union[float, str] = 0.75
    channels: int = 0
    detector: str = "ftd"
    gamma: Union[float, str] = OPTIMIZE
    l_prime: Optional[int] = None
    order: Union[int, str] = 0
    p_d: float = 0.95
    p_fa: float = 0.05
    band: Optional[int] = None
    precoder: str = "none"
    ab_delay: Union[float, str] = OPTIMIZE
    ab_scale: Union[float, str] = OPTIMIZE
    csi: str = "oracle"
    pilot_symbols: int = 0

    def scheme(self, alpha: Optional[float] = None) -> SchemeDescriptor:
        a = self.alpha if alpha is None else alpha
        return SchemeDescriptor(
            kind=self.scheme_kind,
            k=self.k,
            k_active=self.k_active,
            b_info=self.b_info,
            alpha=a if isinstance(a, float) else 0.75,
            num_channels=self.channels,
        )


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    geometry: ChannelGeometry
    t_b: float
    n: int
    memory: int
    tau: float
    snr_db: Optional[float]
    lambda_s: Optional[float]
    molecules_per_bit: float
    links: Tuple[LinkSpec, ...]
    block_symbols: int
    max_blocks: int
    min_errors: int
    min_bits: int
    seed: int
    sweep_axis: str
    sweep_grid: Tuple[float, ...]
    opt_blocks: int = 20
    opt_grid_points: int = 15
    opt_refine_rounds: int = 1


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


# Keys accepted per section; link keys depend on scheme/detector/precoder.
_SECTION_KEYS = {
    "channel": ("r0", "rr", "d"),
    "grid": ("t_b", "n", "l", "tau"),
    "noise": ("snr_db", "lambda_s"),
    "power": ("m",),
    "harness": ("block_symbols", "max_blocks", "min_errors", "min_bits", "seed"),
    "sweep": ("axis", "grid"),
    "optimizer": ("blocks", "grid_points", "refine_rounds"),
}

_SCHEME_KEYS = {
    "bcsk": (),
    "ppm": ("k",),
    "mcpm": ("k", "alpha"),
    "mosk": ("k",),
    "dmosk": (),
    "mcsk": (),
    "gmosk": ("k", "k_active"),
    "maaf": ("k", "b_info"),
    "mssk": ("channels",),
}

_DETECTOR_KEYS = {
    "ftd": ("gamma",),
    "atd": ("gamma",),
    "ads": ("gamma",),
    "dmads": ("gamma", "order"),
    "addf": ("gamma", "l_prime"),
    "mlda": ("l_prime",),
    "mlsd": (),
    "bandedmlsd": ("band",),
    "dfesprt": ("p_d", "p_fa", "l_prime"),
    "mcd": (),
    "mcpm2stage": ("gamma",),
}

_COHERENT = ("mlda", "mlsd", "bandedmlsd", "addf", "dfesprt")


class _Collector:
    """Accumulates problems so a bad config reports everything at once."""

    def __init__(self):
        self.problems = []

    def add(self, path, message):
        self.problems.append(f"{path}: {message}")

    def raise_if_any(self):
        if self.problems:
            raise ConfigError(self.problems)


def _get(parser, section, key, convert, errors, required=True, default=None):
    if not parser.has_option(section, key):
        if required:
            errors.add(f"{section}/{key}", "missing required key")
        return default
    raw = parser.get(section, key).strip()
    try:
        return convert(raw)
    except ValueError as exc:
        errors.add(f"{section}/{key}", str(exc))
        return default


def _float_or(raw: str, *words):
    low = raw.lower()
    if low in words:
        return low
    return float(raw)


def _int_or(raw: str, *words):
    low = raw.lower()
    if low in words:
        return low
    return int(raw)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text into an ExperimentConfig.

    Raises ConfigError listing every missing key, unknown key and
    invariant violation, with section/key paths.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc

    errors = _Collector()

    link_sections = []
    for section in parser.sections():
        if section.startswith("link:"):
            label = section[5:].strip()
            if not label:
                errors.add(section, "link sections need a label, e.g. [link:ftd]")
            link_sections.append(section)
        elif section not in _SECTION_KEYS:
            errors.add(section, "unknown section")

    for section, keys in _SECTION_KEYS.items():
        if parser.has_section(section):
            for key in parser.options(section):
                if key not in keys:
                    errors.add(f"{section}/{key}", "unknown key")
        elif section not in ("optimizer",):
            errors.add(section, "missing required section")

    r0 = _get(parser, "channel", "r0", float, errors)
    rr = _get(parser, "channel", "rr", float, errors)
    diff = _get(parser, "channel", "d", float, errors)
    t_b = _get(parser, "grid", "t_b", float, errors)
    n = _get(parser, "grid", "n", int, errors)
    memory = _get(parser, "grid", "l", int, errors)
    tau = _get(parser, "grid", "tau", float, errors, required=False, default=0.0)

    snr_db = None
    lambda_s = None
    if parser.has_section("noise"):
        has_snr = parser.has_option("noise", "snr_db")
        has_lam = parser.has_option("noise", "lambda_s")
        if has_snr == has_lam:
            errors.add("noise", "exactly one of snr_db or lambda_s must be set")
        if has_snr:
            snr_db = _get(parser, "noise", "snr_db", float, errors)
        if has_lam:
            lambda_s = _get(parser, "noise", "lambda_s", float, errors)
            if lambda_s is not None and lambda_s < 0:
                errors.add("noise/lambda_s", "must be nonnegative")

    m_per_bit = _get(parser, "power", "m", float, errors)

    block_symbols = _get(parser, "harness", "block_symbols", int, errors)
    max_blocks = _get(parser, "harness", "max_blocks", int, errors)
    min_errors = _get(parser, "harness", "min_errors", int, errors, required=False, default=100)
    min_bits = _get(parser, "harness", "min_bits", int, errors, required=False, default=0)
    seed = _get(parser, "harness", "seed", int, errors, required=False, default=1)

    axis = _get(parser, "sweep", "axis", str, errors)
    grid_raw = _get(parser, "sweep", "grid", str, errors)
    sweep_grid: Tuple[float, ...] = ()
    if grid_raw is not None:
        try:
            sweep_grid = tuple(float(v) for v in grid_raw.split(",") if v.strip())
        except ValueError:
            errors.add("sweep/grid", f"not a comma-separated number list: {grid_raw!r}")
        if not sweep_grid:
            errors.add("sweep/grid", "needs at least one value")
    if axis is not None:
        axis = axis.lower()
        if axis not in SWEEP_AXES:
            errors.add("sweep/axis", f"must be one of {', '.join(SWEEP_AXES)}")

    opt_blocks = _get(parser, "optimizer", "blocks", int, errors, required=False, default=20)
    opt_grid = _get(parser, "optimizer", "grid_points", int, errors, required=False, default=15)
    opt_refine = _get(parser, "optimizer", "refine_rounds", int, errors, required=False, default=1)

    links = []
    if not link_sections:
        errors.add("link", "at least one [link:<label>] section is required")
    for section in link_sections:
        links.append(_parse_link(parser, section, errors))

    errors.raise_if_any()

    # Structural validation of the assembled values.
    problems = _Collector()
    try:
        geometry = ChannelGeometry(r0, rr, diff)
    except ValueError as exc:
        problems.add("channel", str(exc))
        geometry = None
    if t_b <= 0:
        problems.add("grid/t_b", "must be positive")
    if n < 1:
        problems.add("grid/n", "must be >= 1")
    if memory < 1:
        problems.add("grid/l", "must be >= 1")
    if m_per_bit <= 0:
        problems.add("power/m", "must be positive")
    if block_symbols < 1:
        problems.add("harness/block_symbols", "must be >= 1")
    if max_blocks < 1:
        problems.add("harness/max_blocks", "must be >= 1")

    if axis == "snr_db" and lambda_s is not None:
        problems.add("sweep/axis", "an snr_db sweep needs the noise given as snr_db")

    labels = [link.label for link in links]
    if len(set(labels)) != len(labels):
        problems.add("link", "duplicate link labels")

    for link in links:
        path = f"link:{link.label}"
        try:
            scheme = link.scheme()
            b = bits_per_symbol(scheme)
        except ValueError as exc:
            problems.add(path, str(exc))
            continue
        if isinstance(link.alpha, float) and not 0.5 < link.alpha < 1.0:
            problems.add(f"{path}/alpha", "alpha must satisfy alpha in (0.5, 1)")
        if link.l_prime is not None and not 1 <= link.l_prime <= memory:
            problems.add(f"{path}/l_prime", f"must be in [1, l={memory}]")
        if link.band is not None and not 1 <= link.band <= memory:
            problems.add(f"{path}/band", f"must be in [1, l={memory}]")
        if isinstance(link.order, int) and not 0 <= link.order < scheme.samples_per_symbol(n):
            problems.add(f"{path}/order", "derivative order must satisfy 0 <= m < samples per symbol")
        if link.detector == "dfesprt" and not 0.0 < link.p_fa < link.p_d < 1.0:
            problems.add(f"{path}/p_d", "need 0 < p_fa < p_d < 1")
        if link.csi not in ("oracle", "estimated"):
            problems.add(f"{path}/csi", "must be oracle or estimated")
        if link.csi == "estimated":
            if link.detector not in _COHERENT:
                problems.add(f"{path}/csi", f"estimated csi needs a coherent detector, not {link.detector}")
            if link.pilot_symbols < memory:
                problems.add(f"{path}/pilot_symbols", f"must be >= l={memory} for identifiability")
        if link.precoder not in ("none", "atract", "ab"):
            problems.add(f"{path}/precoder", "must be none, atract or ab")
        if link.precoder != "none" and link.scheme_kind != "bcsk":
            problems.add(f"{path}/precoder", "precoders apply to bcsk links only")
        if link.precoder == "ab" and link.detector not in ("ftd", "atd", "ads", "dmads"):
            problems.add(
                f"{path}/precoder",
                "the signed a-b statistic needs a threshold detector (ftd, atd, ads, dmads)",
            )
        if link.detector == "bandedmlsd" and link.band is None:
            problems.add(f"{path}/band", "bandedmlsd needs an explicit band")
        if max_blocks * block_symbols * b < 10_000:
            problems.add(
                f"{path}", f"bit budget max_blocks*block_symbols*B = {max_blocks * block_symbols * b} < 10000"
            )
        _check_pairing(link, problems, path)

    problems.raise_if_any()

    return ExperimentConfig(
        geometry=geometry,
        t_b=t_b,
        n=n,
        memory=memory,
        tau=tau,
        snr_db=snr_db,
        lambda_s=lambda_s,
        molecules_per_bit=m_per_bit,
        links=tuple(links),
        block_symbols=block_symbols,
        max_blocks=max_blocks,
        min_errors=min_errors,
        min_bits=min_bits,
        seed=seed,
        sweep_axis=axis,
        sweep_grid=sweep_grid,
        opt_blocks=opt_blocks,
        opt_grid_points=opt_grid,
        opt_refine_rounds=opt_refine,
    )


_PAIRINGS = {
    "bcsk": ("ftd", "atd", "ads", "dmads", "addf", "mlda", "mlsd", "bandedmlsd", "dfesprt"),
    "ppm": ("mcd",),
    "mcpm": ("mcpm2stage",),
    "mosk": ("mcd",),
    "mssk": ("mcd",),
    "gmosk": ("mcd",),
    "maaf": ("mcd",),
    "dmosk": ("ftd",),
    "mcsk": ("ftd",),
}


def _check_pairing(link: LinkSpec, problems: _Collector, path: str) -> None:
    allowed = _PAIRINGS[link.scheme_kind]
    if link.detector not in allowed:
        problems.add(
            f"{path}/detector",
            f"{link.detector} does not demodulate {link.scheme_kind}; choose from {', '.join(allowed)}",
        )
    if link.gamma == ANALYTIC and link.detector != "ftd":
        problems.add(f"{path}/gamma", "analytic threshold is defined for ftd only")


def _parse_link(parser, section: str, errors: _Collector) -> LinkSpec:
    label = section[5:].strip()
    kind = _get(parser, section, "scheme", str, errors, required=True, default="bcsk")
    det = _get(parser, section, "detector", str, errors, required=True, default="ftd")
    kind = (kind or "bcsk").lower()
    det = (det or "ftd").lower()
    if kind not in SCHEME_KINDS:
        errors.add(f"{section}/scheme", f"unknown scheme {kind!r}")
        kind = "bcsk"
    if det not in DETECTOR_KINDS:
        errors.add(f"{section}/detector", f"unknown detector {det!r}")
        det = "ftd"

    precoder = "none"
    if parser.has_option(section, "precoder"):
        precoder = parser.get(section, "precoder").strip().lower()

    allowed = {"scheme", "detector", "precoder", "csi"}
    allowed.update(_SCHEME_KEYS.get(kind, ()))
    allowed.update(_DETECTOR_KEYS.get(det, ()))
    if precoder == "ab":
        allowed.update(("ab_delay", "ab_scale"))
    if parser.has_option(section, "csi") and parser.get(section, "csi").strip().lower() == "estimated":
        allowed.add("pilot_symbols")
    for key in parser.options(section):
        if key not in allowed:
            errors.add(f"{section}/{key}", "unknown key")

    spec = LinkSpec(label=label, scheme_kind=kind, detector=det, precoder=precoder)
    spec.k = _get(parser, section, "k", int, errors, required=False, default=spec.k)
    spec.k_active = _get(parser, section, "k_active", int, errors, required=False, default=spec.k_active)
    spec.b_info = _get(parser, section, "b_info", int, errors, required=False, default=spec.b_info)
    spec.channels = _get(parser, section, "channels", int, errors, required=False, default=spec.channels)
    spec.alpha = _get(
        parser, section, "alpha", lambda r: _float_or(r, OPTIMIZE), errors, required=False, default=spec.alpha
    )
    spec.gamma = _get(
        parser,
        section,
        "gamma",
        lambda r: _float_or(r, OPTIMIZE, ANALYTIC),
        errors,
        required=False,
        default=spec.gamma,
    )
    spec.l_prime = _get(parser, section, "l_prime", int, errors, required=False, default=None)
    spec.order = _get(
        parser, section, "order", lambda r: _int_or(r, OPTIMIZE), errors, required=False, default=spec.order
    )
    spec.p_d = _get(parser, section, "p_d", float, errors, required=False, default=spec.p_d)
    spec.p_fa = _get(parser, section, "p_fa", float, errors, required=False, default=spec.p_fa)
    spec.band = _get(parser, section, "band", int, errors, required=False, default=None)
    spec.ab_delay = _get(
        parser, section, "ab_delay", lambda r: _float_or(r, OPTIMIZE), errors, required=False, default=spec.ab_delay
    )
    spec.ab_scale = _get(
        parser, section, "ab_scale", lambda r: _float_or(r, OPTIMIZE), errors, required=False, default=spec.ab_scale
    )
    spec.csi = (_get(parser, section, "csi", str, errors, required=False, default="oracle") or "oracle").lower()
    spec.pilot_symbols = _get(parser, section, "pilot_symbols", int, errors, required=False, default=0)
    return spec


def render_config(config: ExperimentConfig) -> str:
    """Canonical text form; parse_config(render_config(c)) == c."""
    lines = []
    lines.append("[channel]")
    lines.append(f"r0 = {_fmt(config.geometry.r0)}")
    lines.append(f"rr = {_fmt(config.geometry.r_r)}")
    lines.append(f"d = {_fmt(config.geometry.diff_coef)}")
    lines.append("")
    lines.append("[grid]")
    lines.append(f"t_b = {_fmt(config.t_b)}")
    lines.append(f"n = {config.n}")
    lines.append(f"l = {config.memory}")
    lines.append(f"tau = {_fmt(config.tau)}")
    lines.append("")
    lines.append("[noise]")
    if config.snr_db is not None:
        lines.append(f"snr_db = {_fmt(config.snr_db)}")
    else:
        lines.append(f"lambda_s = {_fmt(config.lambda_s)}")
    lines.append("")
    lines.append("[power]")
    lines.append(f"m = {_fmt(config.molecules_per_bit)}")
    lines.append("")
    lines.append("[harness]")
    lines.append(f"block_symbols = {config.block_symbols}")
    lines.append(f"max_blocks = {config.max_blocks}")
    lines.append(f"min_errors = {config.min_errors}")
    lines.append(f"min_bits = {config.min_bits}")
    lines.append(f"seed = {config.seed}")
    lines.append("")
    lines.append("[sweep]")
    lines.append(f"axis = {config.sweep_axis}")
    lines.append("grid = " + ", ".join(_fmt(v) for v in config.sweep_grid))
    lines.append("")
    lines.append("[optimizer]")
    lines.append(f"blocks = {config.opt_blocks}")
    lines.append(f"grid_points = {config.opt_grid_points}")
    lines.append(f"refine_rounds = {config.opt_refine_rounds}")
    for link in config.links:
        lines.append("")
        lines.append(f"[link:{link.label}]")
        lines.append(f"scheme = {link.scheme_kind}")
        for key in _SCHEME_KEYS[link.scheme_kind]:
            lines.append(f"{key} = {_fmt(getattr(link, 'channels' if key == 'channels' else key))}")
        lines.append(f"detector = {link.detector}")
        for key in _DETECTOR_KEYS[link.detector]:
            value = getattr(link, key)
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value)}")
        lines.append(f"precoder = {link.precoder}")
        if link.precoder == "ab":
            lines.append(f"ab_delay = {_fmt(link.ab_delay)}")
            lines.append(f"ab_scale = {_fmt(link.ab_scale)}")
        lines.append(f"csi = {link.csi}")
        if link.csi == "estimated":
            lines.append(f"pilot_symbols = {link.pilot_symbols}")
    lines.append("")
    return "\n".join(lines)


def preset_names() -> list:
    """Shipped figure presets, in natural order."""
    root = importlib.resources.files("dimcsim.presets")
    names = [p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini")]
    return sorted(names, key=lambda s: (len(s), s))


def preset_text(name: str) -> str:
    root = importlib.resources.files("dimcsim.presets")
    path = root / f"{name}.ini"
    if not path.is_file():
        raise ConfigError([f"preset/{name}: unknown preset (have {', '.join(preset_names())})"])
    return path.read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))
