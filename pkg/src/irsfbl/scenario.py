"""Scenario files: INI documents describing one system configuration.

Example::

    [dimensions]
    M = 16
    N = 16
    L = 32
    n = 36

    [noise]
    sigma2_dbm = -80
    power_dbm = 15

    [geometry]
    d_bs_u = 50
    d_bs_irs = 40
    d_irs_u = 50
    c1_log10 = -2.305
    c2 = 0.05
    c3_log10 = -2.595
    alpha1 = 2.2
    alpha2 = 3.67

    [correlations]
    R = ula 0.5 10 10 16
    D = ula 0.5 5 5 16
    T_irs = ula 0.5 0 5 32
    R_irs = csv:r_irs.csv

    [codeword]
    kind = all-ones

    [rates]
    grid = -3:0:0.5

    [optimizer]
    kappa = 0.1

    [mc]
    count = 100000
    seed = 7

Correlation entries are ``ula <spacing> <mean angle> <spread> <count>``,
``identity <k>``, ``zero <k>`` or ``csv:<path>`` (relative to the scenario
file). Without ``[geometry]`` both links have unit path gain.
"""

from __future__ import annotations

import configparser
import re
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import (CorrelationSpec, PathLoss, SystemConfig, build_ula_correlation,
                      dbm_to_watts, load_correlation_csv)
from .errors import DomainError, SchemaError
from .montecarlo import KINDS, CodewordSpec
from .phase_opt import OptimizerOptions

__all__ = ["Scenario", "load_scenario", "parse_scenario", "parse_grid", "bundled_scenario"]

CORRELATION_KEYS = ("R", "D", "T_irs", "R_irs")
_SECTIONS = {
    "dimensions": {"M", "N", "L", "n"},
    "noise": {"sigma2_dbm", "power_dbm"},
    "geometry": {"d_bs_u", "d_bs_irs", "d_irs_u", "c1", "c2", "c3", "c1_log10",
                 "c2_log10", "c3_log10", "alpha1", "alpha2"},
    "correlations": set(CORRELATION_KEYS),
    "codeword": {"kind", "path"},
    "rates": {"r", "R", "grid"},
    "optimizer": {"c", "kappa", "lambda0", "h", "ftol", "gtol", "max_iter", "armijo"},
    "mc": {"count", "seed", "bins"},
}


@dataclass(frozen=True, eq=False)
class Scenario:
    """A parsed scenario.

    ``r_values`` are second-order rates; ``rate_values`` are absolute rates
    in nats per antenna that are converted once the mean capacity is known.
    """

    config: SystemConfig
    codeword: CodewordSpec
    r_values: tuple = ()
    rate_values: tuple = ()
    optimizer: OptimizerOptions = OptimizerOptions()
    mc_count: int = 10_000
    mc_seed: int = 0
    mc_bins: int = 60
    source: str = "<string>"

    def second_order_rates(self, mean_capacity: float) -> np.ndarray:
        scale = np.sqrt(self.config.M * self.config.n)
        from_rates = [scale * (R - mean_capacity) for R in self.rate_values]
        return np.array(list(self.r_values) + from_rates, dtype=float)


class _Reader:
    """Typed access to a parsed INI document with located error messages."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise SchemaError(f"{source}: {exc}") from exc

    def line_of(self, section: str, key: str | None = None) -> int | None:
        in_section = False
        for i, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("["):
                in_section = line.strip("[]").strip() == section
                if in_section and key is None:
                    return i
            elif in_section and key is not None:
                name = re.split(r"[=:]", line, maxsplit=1)[0].strip()
                if name == key:
                    return i
        return None

    def fail(self, section: str, key: str | None, msg: str):
        line = self.line_of(section, key)
        where = f"[{section}]" + (f" {key}" if key else "")
        loc = f"{self.source}:{line}" if line else self.source
        raise SchemaError(f"{loc}: {where}: {msg}")

    def has(self, section: str) -> bool:
        return self.cp.has_section(section)

    def require(self, section: str):
        if not self.has(section):
            raise SchemaError(f"{self.source}: missing required section [{section}]")

    def raw(self, section: str, key: str, default=None, required=False):
        if self.has(section) and self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            if not self.has(section):
                self.require(section)
            self.fail(section, None, f"missing required key {key!r}")
        return default

    def number(self, section, key, kind=float, default=None, required=False):
        val = self.raw(section, key, required=required)
        if val is None:
            return default
        try:
            out = kind(val)
        except ValueError:
            self.fail(section, key, f"expected {kind.__name__}, got {val!r}")
        if kind is float and not np.isfinite(out):
            self.fail(section, key, f"value must be finite, got {val!r}")
        return out

    def check_keys(self):
        for section in self.cp.sections():
            allowed = _SECTIONS.get(section)
            if allowed is None:
                self.fail(section, None, "unknown section")
            for key in self.cp.options(section):
                if key not in allowed:
                    self.fail(section, key, "unknown key")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` with ``stop`` included when it lies on the grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise SchemaError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise SchemaError(f"grid must be numeric, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise SchemaError(f"grid needs step > 0 and stop >= start, got {text!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _float_list(reader: _Reader, section: str, key: str) -> tuple:
    val = reader.raw(section, key)
    if val is None:
        return ()
    try:
        return tuple(float(v) for v in re.split(r"[,\s]+", val) if v)
    except ValueError:
        reader.fail(section, key, f"expected a list of numbers, got {val!r}")


def _correlation(reader: _Reader, key: str, size: int, base: Path) -> np.ndarray:
    val = reader.raw("correlations", key, required=True)
    if val.startswith("csv:"):
        path = base / val[4:].strip()
        try:
            A = load_correlation_csv(path)
        except (OSError, ValueError) as exc:
            reader.fail("correlations", key, str(exc))
    else:
        words = val.split() or [""]
        kind, args = words[0].lower(), words[1:]
        try:
            if kind == "ula" and len(args) == 4:
                spec = CorrelationSpec(float(args[0]), float(args[1]), float(args[2]), int(args[3]))
                A = build_ula_correlation(spec)
            elif kind == "identity" and len(args) == 1:
                A = np.eye(int(args[0]), dtype=complex)
            elif kind == "zero" and len(args) == 1:
                A = np.zeros((int(args[0]),) * 2, dtype=complex)
            else:
                reader.fail("correlations", key,
                            "expected 'ula d eta spread count', 'identity k', 'zero k' or 'csv:path'")
        except SchemaError:
            raise
        except (ValueError, DomainError) as exc:
            reader.fail("correlations", key, str(exc))
    if A.shape != (size, size):
        reader.fail("correlations", key, f"matrix must be {size}x{size}, got {A.shape[0]}x{A.shape[1]}")
    return A


def _gain(reader: _Reader, name: str) -> float:
    lin = reader.number("geometry", name)
    log = reader.number("geometry", f"{name}_log10")
    if (lin is None) == (log is None):
        reader.fail("geometry", name, f"give exactly one of {name} or {name}_log10")
    return lin if lin is not None else 10.0 ** log


def parse_scenario(text: str, *, source: str = "<string>", base: Path | None = None) -> Scenario:
    reader = _Reader(text, source)
    reader.require("dimensions")
    reader.check_keys()
    base = Path(".") if base is None else base

    dims = {}
    for key in ("M", "N", "L", "n"):
        v = reader.number("dimensions", key, int, required=True)
        if v < 1:
            reader.fail("dimensions", key, f"must be >= 1, got {v}")
        dims[key] = v
    M, N, L, n = dims["M"], dims["N"], dims["L"], dims["n"]

    noise = dbm_to_watts(reader.number("noise", "sigma2_dbm", default=30.0))
    power = dbm_to_watts(reader.number("noise", "power_dbm", default=30.0))

    reader.require("correlations")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mats = {key: _correlation(reader, key, N if key in ("R", "D") else L, base)
                for key in CORRELATION_KEYS}

    try:
        if reader.has("geometry"):
            a1 = reader.number("geometry", "alpha1", required=True)
            a2 = reader.number("geometry", "alpha2", required=True)
            dist = {k: reader.number("geometry", k, required=True)
                    for k in ("d_bs_u", "d_bs_irs", "d_irs_u")}
            c1, c2, c3 = _gain(reader, "c1"), _gain(reader, "c2"), _gain(reader, "c3")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                config = SystemConfig.from_path_losses(
                    M, N, L, n, mats["R"], mats["D"], mats["T_irs"], mats["R_irs"],
                    noise_power=noise, transmit_power=power,
                    bs_irs=PathLoss(c1, dist["d_bs_irs"], a1),
                    irs_u=PathLoss(c2, dist["d_irs_u"], a1),
                    bs_u=PathLoss(c3, dist["d_bs_u"], a2))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                config = SystemConfig(M, N, L, n, mats["R"], mats["D"], mats["T_irs"],
                                      mats["R_irs"], noise_power=noise, transmit_power=power)
    except DomainError as exc:
        raise SchemaError(f"{source}: {exc}") from exc

    kind = reader.raw("codeword", "kind", default="all-ones")
    if kind not in KINDS:
        reader.fail("codeword", "kind", f"must be one of {', '.join(KINDS)}")
    matrix = None
    if kind == "explicit":
        path = base / reader.raw("codeword", "path", required=True)
        try:
            matrix = _load_codeword(path)
            codeword = CodewordSpec(kind, M, n, matrix)
        except (OSError, ValueError) as exc:
            reader.fail("codeword", "path", str(exc))
    else:
        try:
            codeword = CodewordSpec(kind, M, n)
        except DomainError as exc:
            reader.fail("codeword", "kind", str(exc))

    r_values = _float_list(reader, "rates", "r")
    grid = reader.raw("rates", "grid")
    if grid is not None:
        try:
            r_values = r_values + tuple(parse_grid(grid))
        except SchemaError as exc:
            reader.fail("rates", "grid", str(exc))
    rate_values = _float_list(reader, "rates", "R")

    opt_kwargs = {}
    for key, kind_ in (("c", float), ("kappa", float), ("lambda0", float), ("h", float),
                       ("ftol", float), ("gtol", float), ("max_iter", int)):
        v = reader.number("optimizer", key, kind_)
        if v is not None:
            opt_kwargs[key] = v
    armijo = reader.raw("optimizer", "armijo")
    if armijo is not None:
        opt_kwargs["armijo"] = armijo
    try:
        opts = OptimizerOptions(**opt_kwargs)
    except DomainError as exc:
        reader.fail("optimizer", None, str(exc))

    count = reader.number("mc", "count", int, default=10_000)
    seed = reader.number("mc", "seed", int, default=0)
    bins = reader.number("mc", "bins", int, default=60)
    if count < 1:
        reader.fail("mc", "count", "must be >= 1")
    if seed < 0:
        reader.fail("mc", "seed", "must be >= 0")
    if bins < 1:
        reader.fail("mc", "bins", "must be >= 1")

    return Scenario(config, codeword, r_values, rate_values, opts, count, seed, bins, source)


def _load_codeword(path: Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split(",")]
            if len(vals) % 2:
                raise ValueError(f"{path}: odd number of values in a row")
            rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    return np.array(rows)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, source=str(path), base=path.parent)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``correlated_link``, ``identity_rx``, ``rayleigh_toy``)."""
    ref = resources.files("irsfbl") / "scenarios" / f"{name}.ini"
    with resources.as_file(ref) as p:
        if not p.exists():
            raise SchemaError(f"no bundled scenario named {name!r}")
        return p
