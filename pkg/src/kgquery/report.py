"""Count tables, metric tables and figures written next to them."""
from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TOPOLOGIES = ("SDAG", "Multi", "Cyclic")
# fixed PNG metadata keeps figures byte-identical across runs
PNG_META = {"Software": None}


def count_matrix(table: Mapping[tuple, int], k: int):
    """Rows: constant counts. Columns: (existential count, topology) that occur for ``k``."""
    keys = [key for key in table if key[0] == k]
    rows = sorted({key[1] for key in keys})
    cols = sorted({(key[2], key[3]) for key in keys}, key=lambda c: (c[0], TOPOLOGIES.index(c[1])))
    mat = [[table.get((k, c, e, t), 0) for e, t in cols] for c in rows]
    return rows, cols, mat


def format_count_tables(table: Mapping[tuple, int], sep: str = "\t") -> str:
    lines = []
    for k in sorted({key[0] for key in table}):
        rows, cols, mat = count_matrix(table, k)
        lines.append(f"k={k}")
        lines.append(sep.join(["c\\e"] + [f"e={e}:{t}" for e, t in cols] + ["sum"]))
        for c, row in zip(rows, mat):
            lines.append(sep.join([f"c={c}"] + [str(x) for x in row] + [str(sum(row))]))
        col_sums = [sum(col) for col in zip(*mat)] if mat else []
        lines.append(sep.join(["sum"] + [str(x) for x in col_sums] + [str(sum(col_sums))]))
        lines.append("")
    total = sum(table.values())
    lines.append(f"total{sep}{total}")
    return "\n".join(lines) + "\n"


def plot_count_tables(table: Mapping[tuple, int], path: str | os.PathLike) -> None:
    ks = sorted({key[0] for key in table})
    fig, axes = plt.subplots(1, len(ks), figsize=(5.5 * len(ks), 3.2), squeeze=False)
    for ax, k in zip(axes[0], ks):
        rows, cols, mat = count_matrix(table, k)
        arr = np.array(mat, dtype=float)
        ax.imshow(arr, cmap="Blues", aspect="auto")
        for (i, j), v in np.ndenumerate(arr):
            ax.text(j, i, str(int(v)), ha="center", va="center", fontsize=8)
        ax.set_xticks(range(len(cols)), [f"e={e}\n{t}" for e, t in cols], fontsize=7)
        ax.set_yticks(range(len(rows)), [f"c={c}" for c in rows])
        ax.set_title(f"k={k}: {int(arr.sum())} types")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def _metric_names(report) -> list[tuple[str, str]]:
    names = []
    for fam in report["families"]:
        seen = []
        for cell in report["cells"]:
            for m in cell.get(fam, {}):
                if m not in seen:
                    seen.append(m)
        names += [(fam, m) for m in seen]
    return names


def write_metric_csv(report: dict, path: str | os.PathLike) -> None:
    names = _metric_names(report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "k", "c", "e", "topology", "n_types", "n_queries"] + [f"{f}.{m}" for f, m in names])
        for group in ("cells", "rows", "columns"):
            for row in report[group]:
                key = row["key"]
                if group == "cells":
                    k, c, e, t = key
                elif group == "rows":
                    (k, c), e, t = key, "", ""
                else:
                    (k, e, t), c = key, ""
                vals = [f"{row[f][m]:.6f}" if f in row and m in row[f] else "" for f, m in names]
                w.writerow([group, k, c, e, t, row["n_types"], row["n_queries"]] + vals)


def plot_metric_report(report: dict, directory: str | os.PathLike, stem: str = "report") -> list[Path]:
    """One bar chart per (metric family, k): cell scores grouped by topology column."""
    d = Path(directory)
    written = []
    for fam in report["families"]:
        for k in sorted({cell["key"][0] for cell in report["cells"]}):
            cells = [c for c in report["cells"] if c["key"][0] == k and fam in c]
            if not cells:
                continue
            metrics = list(cells[0][fam])
            labels = [f"c{c['key'][1]} e{c['key'][2]} {c['key'][3]}" for c in cells]
            x = np.arange(len(cells))
            width = 0.8 / len(metrics)
            fig, ax = plt.subplots(figsize=(max(5.0, 0.5 * len(cells) + 2), 3.4))
            for j, m in enumerate(metrics):
                ax.bar(x + j * width, [c[fam][m] for c in cells], width, label=m)
            ax.set_xticks(x + 0.4 - width / 2, labels, rotation=60, ha="right", fontsize=7)
            ax.set_ylim(0, 1)
            ax.set_ylabel("score")
            ax.set_title(f"{fam} metrics, k={k}")
            ax.legend(fontsize=7, ncol=len(metrics))
            fig.tight_layout()
            path = d / f"{stem}_{fam}_k{k}.png"
            fig.savefig(path, metadata=PNG_META)
            plt.close(fig)
            written.append(path)
    return written
