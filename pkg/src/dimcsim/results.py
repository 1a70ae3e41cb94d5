"""CSV persistence for BER reports.

The column set and order are frozen; rows sort by (sweep value, detector
label).  The fully resolved configuration is echoed as comment lines
ahead of the header for provenance.  Wall-clock timings are redacted to
zero unless explicitly requested, so a rerun with the same seed produces
a byte-identical file.
"""
from __future__ import annotations

from typing import Iterable, List

from .config import render_config
from .harness import BerReport

COLUMNS = (
    "sweep_var",
    "sweep_value",
    "scheme",
    "detector",
    "bits",
    "errors",
    "ber",
    "ci_low",
    "ci_high",
    "optimized_params",
    "seed",
    "runtime_s",
)


def _params_field(optimized: dict) -> str:
    return ";".join(f"{k}={optimized[k]:.8g}" for k in sorted(optimized))


def emit_results(reports: Iterable[BerReport], include_runtime: bool = False) -> str:
    """Render reports as CSV text (deterministic for a fixed report set)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to emit")
    reports.sort(key=lambda r: (r.sweep_value, r.detector))
    lines: List[str] = []
    for cfg_line in render_config(reports[0].config).rstrip("\n").split("\n"):
        lines.append(f"# {cfg_line}" if cfg_line else "#")
    lines.append(",".join(COLUMNS))
    for r in reports:
        runtime = r.runtime_s if include_runtime else 0.0
        lines.append(
            ",".join(
                (
                    r.sweep_var,
                    f"{r.sweep_value:.10g}",
                    r.scheme,
                    r.detector,
                    str(r.bits),
                    str(r.errors),
                    f"{r.ber:.6e}",
                    f"{r.ci_low:.6e}",
                    f"{r.ci_high:.6e}",
                    _params_field(r.optimized),
                    str(r.seed),
                    f"{runtime:.3f}",
                )
            )
        )
    return "\n".join(lines) + "\n"
