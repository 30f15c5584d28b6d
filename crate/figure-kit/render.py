#!/usr/bin/env python3
"""Draw figures from cirlt CSV outputs.

    render.py --kind {convergence,profile,overlay} --in a.csv [--in b.csv] --out fig.png

Nothing is recomputed: every plotted number is read from the CSV. A
`<out>.source.txt` sidecar records the sha256 of each input and of the
`manifest.json` next to it, when one exists.
"""

import argparse
import csv
import hashlib
import sys
from pathlib import Path

SCHEMAS = {
    "convergence": ["n", "delta", "median_sup_err", "p90_sup_err", "monotone_ok_fraction"],
    "profile": ["y_mid", "density"],
}


class SchemaMismatch(Exception):
    pass


class MissingInput(Exception):
    pass


def read_csv(path, kind):
    if not path.is_file():
        raise MissingInput(str(path))
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if kind == "overlay":
        eps = [h for h in header[2:-1] if h.startswith("L_eps_")]
        ok = len(header) >= 4 and header[:2] == ["t", "R"] and header[-1] == "L_hat" and len(eps) == len(header) - 3
    else:
        ok = header == SCHEMAS[kind]
    if not ok:
        raise SchemaMismatch(f"{path}: header {header} does not fit kind `{kind}`")
    cols = {h: [float(r[i]) for r in body] for i, h in enumerate(header)}
    return header, cols


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def draw(kind, tables, labels, ax):
    if kind == "convergence":
        for path, (_, c) in tables:
            delta = [abs(d) for d in c["delta"]]
            for stat in ("median_sup_err", "p90_sup_err"):
                ax.plot(delta, c[stat], marker="o", label=f"{path.stem}: {stat}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(labels[0] or "|delta|")
        ax.set_ylabel(labels[1] or "sup error")
    elif kind == "profile":
        for path, (_, c) in tables:
            ax.plot(c["y_mid"], c["density"], drawstyle="steps-mid", label=path.stem)
        ax.set_xlabel(labels[0] or "y")
        ax.set_ylabel(labels[1] or "ell(t, y)")
    else:
        for path, (header, c) in tables:
            smallest = header[-2]
            for col in ("R", smallest, "L_hat"):
                ax.plot(c["t"], c[col], label=f"{path.stem}: {col}")
        ax.set_xlabel(labels[0] or "t")
        ax.set_ylabel(labels[1] or "value")
    ax.legend(fontsize="small")


def render(kind, inputs, out, xlabel=None, ylabel=None, logx=False, logy=False):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tables = [(p, read_csv(p, kind)) for p in inputs]
    with plt.style.context("default"):
        fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
        draw(kind, tables, (xlabel, ylabel), ax)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        fig.tight_layout()
        fig.savefig(out, metadata={"Software": None})
        plt.close(fig)

    lines = []
    for p in inputs:
        lines.append(f"{p.name} {sha256(p)}")
        m = p.parent / "manifest.json"
        if m.is_file():
            lines.append(f"{p.name}:manifest.json {sha256(m)}")
    Path(str(out) + ".source.txt").write_text("\n".join(lines) + "\n")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", required=True, choices=["convergence", "profile", "overlay"])
    ap.add_argument("--in", dest="inputs", required=True, action="append", type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--xlabel")
    ap.add_argument("--ylabel")
    ap.add_argument("--logx", action="store_true")
    ap.add_argument("--logy", action="store_true")
    a = ap.parse_args(argv)
    try:
        render(a.kind, a.inputs, a.out, a.xlabel, a.ylabel, a.logx, a.logy)
    except (SchemaMismatch, MissingInput) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
