"""Result rows, deterministic CSV emission, and dependency-free SVG charts.

CSV layout: comment lines (config hash, rate-convention note, timestamp),
one fixed header line, then one row per grid cell. Numbers are formatted
with repr-stable %.10g so identical inputs give identical bytes; the
timestamp comment is the only line that varies between reruns.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

from .errors import ConfigError, UsageError

HEADER = "experiment,variant,seed,snr_db,chan_type,rate,n_elements,nmse_linear,nmse_db,trials"
CR_NOTE = "rate r = k/D, the fraction of latent coordinates transmitted (D = element count at reference config)"


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    variant: str
    seed: int
    snr_db: float
    chan_type: str
    rate: float
    n_elements: int
    nmse_linear: float
    nmse_db: float
    trials: int

    def __post_init__(self):
        if self.nmse_linear < 0:
            raise ConfigError(f"ResultRow: nmse_linear must be >= 0, got {self.nmse_linear}")
        if self.trials < 1:
            raise ConfigError(f"ResultRow: trials must be >= 1, got {self.trials}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)


def render_csv(rows: list[ResultRow], config_hash: str, timestamp: str | None = None) -> str:
    if not rows:
        raise UsageError("render_csv: no rows to emit")
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat()
    buf = io.StringIO()
    buf.write(f"# config_hash {config_hash}\n")
    buf.write(f"# cr_convention {CR_NOTE}\n")
    buf.write(f"# timestamp {timestamp}\n")
    buf.write(HEADER + "\n")
    for row in rows:
        d = asdict(row)
        buf.write(",".join(_fmt(d[k]) for k in HEADER.split(",")) + "\n")
    return buf.getvalue()


def emit_results(rows: list[ResultRow], path: str, config_hash: str,
                 timestamp: str | None = None) -> None:
    """Write the CSV; refuses to touch the filesystem for empty row lists."""
    text = render_csv(rows, config_hash, timestamp)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def read_results(path: str) -> list[ResultRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != HEADER.split(","):
        raise ConfigError(f"read_results: unexpected header {reader.fieldnames}")
    for rec in reader:
        rows.append(ResultRow(
            experiment=rec["experiment"], variant=rec["variant"], seed=int(rec["seed"]),
            snr_db=float(rec["snr_db"]), chan_type=rec["chan_type"], rate=float(rec["rate"]),
            n_elements=int(rec["n_elements"]), nmse_linear=float(rec["nmse_linear"]),
            nmse_db=float(rec["nmse_db"]), trials=int(rec["trials"]),
        ))
    return rows


# ---------------------------------------------------------------------------
# plotting

_PALETTE = ("#1f6fb2", "#d1495b", "#3a9d6e", "#8e5ba6", "#c98a2b", "#4f5d75")


def write_svg_lines(path: str, series: dict, x_label: str, y_label: str,
                    width: int = 640, height: int = 420) -> None:
    """series: name -> list of (x, y) pairs; one polyline per name."""
    if not series or all(len(pts) == 0 for pts in series.values()):
        raise UsageError("write_svg_lines: nothing to plot")
    pts_all = [p for pts in series.values() for p in pts]
    xs = [p[0] for p in pts_all]
    ys = [p[1] for p in pts_all]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    ml, mr, mt, mb = 64, 16, 16, 48

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    out.append(f'<line x1="{ml}" y1="{height-mb}" x2="{width-mr}" y2="{height-mb}" stroke="black"/>')
    out.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height-mb}" stroke="black"/>')
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{px(xv):.1f}" y="{height-mb+16}" font-size="11" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml-6}" y="{py(yv)+4:.1f}" font-size="11" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{(ml+width-mr)//2}" y="{height-10}" font-size="12" text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="14" y="{(mt+height-mb)//2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {(mt+height-mb)//2})">{y_label}</text>')
    for i, (name, pts) in enumerate(sorted(series.items())):
        if not pts:
            continue
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in sorted(pts))
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        out.append(f'<text x="{width-mr-6}" y="{mt+14+14*i}" font-size="11" text-anchor="end" fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out))


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
