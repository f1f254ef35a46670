"""Convert a TU-format dataset directory (DS_A.txt, DS_graph_indicator.txt, ...) to the
single-file text format read by ``gntk.data.parse_dataset``.

    python scripts/tu_to_txt.py path/to/MUTAG data/MUTAG.txt
"""
import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np


def convert(src: Path) -> str:
    name = src.name
    read = lambda suffix: np.loadtxt(src / f"{name}_{suffix}.txt", delimiter=",", dtype=np.int64, ndmin=1)
    indicator = read("graph_indicator")
    labels = read("graph_labels")
    edges = np.atleast_2d(read("A")) if (src / f"{name}_A.txt").exists() else np.zeros((0, 2), int)
    tag_file = src / f"{name}_node_labels.txt"
    tags = read("node_labels") if tag_file.exists() else np.zeros(len(indicator), np.int64)
    if tags.ndim > 1:
        tags = tags[:, 0]

    n_graphs = len(labels)
    sizes = np.bincount(indicator, minlength=n_graphs + 1)[1:]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    nbrs = defaultdict(set)
    for u, v in edges - 1:
        if u != v:
            nbrs[u].add(v)
            nbrs[v].add(u)
    out = [str(n_graphs)]
    for g in range(n_graphs):
        start, count = offsets[g], int(sizes[g])
        out.append(f"{count} {labels[g]}")
        for u in range(start, start + count):
            local = sorted(v - start for v in nbrs[u])
            out.append(" ".join(map(str, [tags[u], len(local), *local])))
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path)
    ap.add_argument("dst", type=Path)
    args = ap.parse_args()
    args.dst.write_text(convert(args.src))
