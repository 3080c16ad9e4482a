"""Accuracy-vs-epoch SVG charts from epoch CSV logs."""

import csv
import io
from dataclasses import dataclass
from html import escape
from pathlib import Path

from .errors import LeafnetError
from .trainer import EPOCH_CSV_HEADER

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


class MalformedLogError(LeafnetError, ValueError):
    pass


@dataclass
class Run:
    name: str
    epochs: list
    train_acc: list
    val_acc: list

    def best_epoch(self):
        """Epoch with the highest validation accuracy; earliest wins ties."""
        best = max(range(len(self.val_acc)), key=lambda i: (self.val_acc[i], -i))
        return self.epochs[best], self.val_acc[best]


def parse_epoch_csv(text, name="run"):
    lines = text.splitlines()
    if not lines or lines[0].strip() != EPOCH_CSV_HEADER:
        raise MalformedLogError(f"{name}: line 1: expected header {EPOCH_CSV_HEADER!r}")
    epochs, train_acc, val_acc = [], [], []
    for lineno, row in enumerate(csv.reader(io.StringIO("\n".join(lines[1:]))), start=2):
        if not row:
            continue
        if len(row) != 6:
            raise MalformedLogError(f"{name}: line {lineno}: expected 6 fields, got {len(row)}")
        try:
            e, ta, va = int(row[0]), float(row[2]), float(row[4])
            float(row[1]), float(row[3])
        except ValueError as exc:
            raise MalformedLogError(f"{name}: line {lineno}: {exc}") from None
        if not (0 <= ta <= 1 and 0 <= va <= 1):
            raise MalformedLogError(f"{name}: line {lineno}: accuracy outside [0, 1]")
        if epochs and e <= epochs[-1]:
            raise MalformedLogError(f"{name}: line {lineno}: epoch {e} is not increasing")
        epochs.append(e)
        train_acc.append(ta)
        val_acc.append(va)
    if not epochs:
        raise MalformedLogError(f"{name}: no epoch rows")
    return Run(name, epochs, train_acc, val_acc)


def load_runs(paths, names=None):
    names = names or [Path(p).stem if Path(p).stem != "epochs" else Path(p).parent.name
                      for p in paths]
    return [parse_epoch_csv(Path(p).read_text(), n) for p, n in zip(paths, names)]


def render_svg(runs, width=720, height=440):
    left, right, top, bottom = 64, 180, 30, 54
    pw, ph = width - left - right, height - top - bottom
    max_epoch = max(max(r.epochs) for r in runs)
    min_epoch = min(min(r.epochs) for r in runs)
    span = max(max_epoch - min_epoch, 1)

    def sx(e):
        return left + (e - min_epoch) / span * pw

    def sy(a):
        return top + (1 - a) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
        'Train and validation accuracy vs. epoch</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(6):
        a = i / 5
        out.append(f'<line x1="{left - 4}" y1="{sy(a):.1f}" x2="{left}" y2="{sy(a):.1f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(a) + 4:.1f}" text-anchor="end">{a:.1f}</text>')
    ticks = sorted({min_epoch, max_epoch} | {min_epoch + round(span * i / 5) for i in range(6)})
    for e in ticks:
        out.append(f'<line x1="{sx(e):.1f}" y1="{top + ph}" x2="{sx(e):.1f}" '
                   f'y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{sx(e):.1f}" y="{top + ph + 18}" text-anchor="middle">{e}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               'Epoch</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">Accuracy</text>')

    legend_y = top + 10
    for k, run in enumerate(runs):
        colour = PALETTE[k % len(PALETTE)]
        for series, values, dash in (("train", run.train_acc, ""),
                                     ("val", run.val_acc, ' stroke-dasharray="6 4"')):
            pts = " L ".join(f"{sx(e):.2f} {sy(a):.2f}" for e, a in zip(run.epochs, values))
            label = escape(f"{run.name} {series}")
            out.append(f'<path d="M {pts}" fill="none" stroke="{colour}" stroke-width="1.8"'
                       f'{dash}><title>{label}</title></path>')
            for e, a in zip(run.epochs, values):
                out.append(f'<circle cx="{sx(e):.2f}" cy="{sy(a):.2f}" r="2" fill="{colour}"/>')
            lx = left + pw + 14
            out.append(f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 24}" y2="{legend_y}" '
                       f'stroke="{colour}" stroke-width="1.8"{dash}/>')
            out.append(f'<text x="{lx + 30}" y="{legend_y + 4}">{label}</text>')
            legend_y += 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summary_table(runs):
    rows = ["run,best_epoch,best_val_acc,final_train_acc,final_val_acc"]
    for r in runs:
        e, a = r.best_epoch()
        rows.append(f"{r.name},{e},{a:.6f},{r.train_acc[-1]:.6f},{r.val_acc[-1]:.6f}")
    return "\n".join(rows) + "\n"
