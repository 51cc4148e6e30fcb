"""CSV / JSON / SVG export of run reports."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from xml.sax.saxutils import escape

from .protocol import RunReport

CSV_FIELDS = ("axis", "value", "task", "mean", "std", "n_seeds", "seed_scores", "top_k", "fingerprint")
FORMATS = ("csv", "json", "svg")


def _rows(reports):
    for r in reports:
        yield {"axis": r.axis, "value": r.value, "task": r.task, "mean": f"{r.mean:.6f}",
               "std": f"{r.std:.6f}", "n_seeds": len(r.events),
               "seed_scores": ";".join(f"{s}:{v:.6f}" for s, v in r.seed_scores.items()),
               "top_k": r.top_k, "fingerprint": r.fingerprint}


def reports_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(_rows(reports))
    return buf.getvalue()


def reports_json(reports) -> str:
    payload = {"std_convention": "population over seeds",
               "score": "per seed: mean of the top_k eval-event success rates",
               "reports": [r.to_dict() for r in reports]}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def axis_svg(reports, title: str) -> str:
    """Grouped bar chart: one group per task, one bar per axis value, std whiskers."""
    tasks = list(dict.fromkeys(r.task for r in reports))
    values = list(dict.fromkeys(r.value for r in reports))
    bar_w, gap, pad_l, pad_b, plot_h = 22, 28, 50, 60, 200
    group_w = len(values) * bar_w + gap
    width = pad_l + len(tasks) * group_w + 20 + 140
    height = plot_h + pad_b + 40
    y0 = 30 + plot_h
    palette = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
           f'<title>{escape(title)}</title>',
           f'<text x="{pad_l}" y="18" font-size="13" font-family="sans-serif">{escape(title)}</text>',
           f'<line x1="{pad_l}" y1="{y0}" x2="{width - 150}" y2="{y0}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="30" x2="{pad_l}" y2="{y0}" stroke="black"/>']
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y0 - tick * plot_h
        out.append(f'<text x="{pad_l - 6}" y="{y + 4:.1f}" font-size="10" text-anchor="end" '
                   f'font-family="sans-serif">{tick:.2f}</text>')
    by_key = {(r.task, r.value): r for r in reports}
    for ti, task in enumerate(tasks):
        gx = pad_l + 10 + ti * group_w
        for vi, val in enumerate(values):
            r = by_key.get((task, val))
            if r is None:
                continue
            x = gx + vi * bar_w
            h = r.mean * plot_h
            color = palette[vi % len(palette)]
            out.append(f'<rect x="{x}" y="{y0 - h:.2f}" width="{bar_w - 4}" height="{h:.2f}" fill="{color}"/>')
            cx = x + (bar_w - 4) / 2
            lo, hi = max(r.mean - r.std, 0.0), min(r.mean + r.std, 1.0)
            out.append(f'<line x1="{cx:.1f}" y1="{y0 - lo * plot_h:.2f}" x2="{cx:.1f}" '
                       f'y2="{y0 - hi * plot_h:.2f}" stroke="black"/>')
        out.append(f'<text x="{gx + len(values) * bar_w / 2:.1f}" y="{y0 + 16}" font-size="11" '
                   f'text-anchor="middle" font-family="sans-serif">{escape(task)}</text>')
    lx = width - 140
    for vi, val in enumerate(values):
        y = 40 + vi * 16
        out.append(f'<rect x="{lx}" y="{y - 9}" width="10" height="10" fill="{palette[vi % len(palette)]}"/>')
        out.append(f'<text x="{lx + 14}" y="{y}" font-size="10" font-family="sans-serif">{escape(str(val))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_report(reports, out_dir, formats=FORMATS) -> list[Path]:
    """Write ``reports.csv``, ``reports.json`` and one SVG per ablation axis."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to export")
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ValueError(f"unknown formats {sorted(bad)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / "reports.csv"
        p.write_text(reports_csv(reports))
        written.append(p)
    if "json" in formats:
        p = out / "reports.json"
        p.write_text(reports_json(reports))
        written.append(p)
    if "svg" in formats:
        for axis in dict.fromkeys(r.axis or "runs" for r in reports):
            group = [r for r in reports if (r.axis or "runs") == axis]
            p = out / f"{axis}.svg"
            p.write_text(axis_svg(group, f"{axis}: top-k success, mean and std over seeds"))
            written.append(p)
    return written


def load_reports(path) -> list[RunReport]:
    """Reports from a ``reports.json`` file or every ``*.json`` run record in a directory."""
    p = Path(path)
    if p.is_file():
        data = json.loads(p.read_text())
        return [RunReport.from_dict(d) for d in data.get("reports", [data])]
    files = sorted(p.glob("runs/*.json")) or sorted(p.glob("*.json"))
    reports = []
    for f in files:
        data = json.loads(f.read_text())
        if "reports" in data:
            reports += [RunReport.from_dict(d) for d in data["reports"]]
        elif "events" in data:
            reports.append(RunReport.from_dict(data))
    if not reports:
        raise FileNotFoundError(f"no run reports under {p}")
    return reports
