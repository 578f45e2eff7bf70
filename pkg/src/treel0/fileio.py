"""Canonical on-disk formats.

All indices are 1-based in files (populations, categories, tree nodes);
gene columns carry gene IDs, not indices. Floats are written with repr(),
whose shortest-round-trip property makes write/read bit-exact, so output
files are byte-identical across thread counts.

Formats:

* expression `pop_<k>.tsv` (categorical: `pop_<k>_cat_<c>.tsv`): header
  `gene<TAB>sample...`, one row per gene;
* hypergraph `hypergraph.tsv`: header `src dst weight`;
* inferred networks: `network.tsv` with header `population gene_i gene_j
  value` for all off-diagonal edges, plus `pop_<k>.diag.tsv` per population
  (header `gene value`, all p rows, which also fixes the gene universe);
* categorical inferred components: `pop_<k>.global.tsv`,
  `pop_<k>_cat_<c>.local.tsv`, `pop_<k>_cat_<c>.total.tsv` edge lists with
  header `gene_i gene_j value`, each with a `.diag.tsv` companion;
* ground truth: `truth_pop_<k>.tsv` (categorical adds
  `truth_pop_<k>_cat_<c>.tsv`) edge lists `gene_i gene_j value`;
* model selection: `scores.tsv` with header `gamma lambda nu ebic df_total`;
* every run: `run.json` metadata.
"""

from __future__ import annotations

import json
import os
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MismatchedGeneSets, ShapeMismatch
from .model import (
    CategoricalPrecisionSet,
    EdgeDict,
    ExpressionMatrix,
    PrecisionSet,
    TreeHypergraph,
)


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# expression


def write_expression(path: str, em: ExpressionMatrix) -> None:
    with open(path, "w") as fh:
        fh.write("gene\t" + "\t".join(em.samples) + "\n")
        for i, g in enumerate(em.genes):
            fh.write(g + "\t" + "\t".join(_fmt(v) for v in em.values[i]) + "\n")


def read_expression(path: str, population: int = 0) -> ExpressionMatrix:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) < 1:
            raise ShapeMismatch(f"{path}: empty header")
        samples = header[1:]
        genes: List[str] = []
        rows: List[List[float]] = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(samples) + 1:
                raise ShapeMismatch(
                    f"{path}: row '{parts[0]}' has {len(parts) - 1} values,"
                    f" expected {len(samples)}"
                )
            genes.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return ExpressionMatrix(
        np.asarray(rows, dtype=np.float64), genes, list(samples), population
    )


_POP_RE = re.compile(r"^pop_(\d+)\.tsv$")
_POP_CAT_RE = re.compile(r"^pop_(\d+)_cat_(\d+)\.tsv$")


def read_expression_dir(dirpath: str) -> List[ExpressionMatrix]:
    """All `pop_<k>.tsv` in a directory, ordered and validated contiguous."""
    found: Dict[int, str] = {}
    for name in os.listdir(dirpath):
        m = _POP_RE.match(name)
        if m:
            found[int(m.group(1))] = os.path.join(dirpath, name)
    if not found:
        raise ShapeMismatch(f"{dirpath}: no pop_<k>.tsv expression files")
    K = max(found)
    missing = [k for k in range(1, K + 1) if k not in found]
    if missing:
        raise ShapeMismatch(f"{dirpath}: missing pop_{missing[0]}.tsv")
    return [read_expression(found[k], population=k - 1) for k in range(1, K + 1)]


def read_categorical_expression_dir(dirpath: str) -> List[List[ExpressionMatrix]]:
    """All `pop_<k>_cat_<c>.tsv`, as data[k][c], validated as a full grid."""
    found: Dict[Tuple[int, int], str] = {}
    for name in os.listdir(dirpath):
        m = _POP_CAT_RE.match(name)
        if m:
            found[(int(m.group(1)), int(m.group(2)))] = os.path.join(dirpath, name)
    if not found:
        raise ShapeMismatch(f"{dirpath}: no pop_<k>_cat_<c>.tsv expression files")
    K = max(k for k, _ in found)
    C = max(c for _, c in found)
    out: List[List[ExpressionMatrix]] = []
    for k in range(1, K + 1):
        row = []
        for c in range(1, C + 1):
            if (k, c) not in found:
                raise ShapeMismatch(f"{dirpath}: missing pop_{k}_cat_{c}.tsv")
            row.append(read_expression(found[(k, c)], population=k - 1))
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# hypergraph


def write_hypergraph(path: str, tree: TreeHypergraph) -> None:
    with open(path, "w") as fh:
        fh.write("src\tdst\tweight\n")
        for u, v, w in tree.edges:
            fh.write(f"{u + 1}\t{v + 1}\t{_fmt(w)}\n")


def read_hypergraph(path: str) -> TreeHypergraph:
    edges = []
    max_node = 0
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["src", "dst", "weight"]:
            raise ShapeMismatch(f"{path}: expected header 'src\\tdst\\tweight'")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            s, d, w = line.split("\t")
            u, v = int(s) - 1, int(d) - 1
            edges.append((u, v, float(w)))
            max_node = max(max_node, u + 1, v + 1)
    return TreeHypergraph.from_edges(max(max_node, len(edges) + 1), edges)


# ---------------------------------------------------------------------------
# edge lists and diagonals


def _write_edge_list(path: str, genes: List[str], edges: EdgeDict) -> None:
    with open(path, "w") as fh:
        fh.write("gene_i\tgene_j\tvalue\n")
        for (i, j) in sorted(edges):
            fh.write(f"{genes[i]}\t{genes[j]}\t{_fmt(edges[(i, j)])}\n")


def _read_edge_list(path: str, index: Dict[str, int]) -> EdgeDict:
    out: EdgeDict = {}
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["gene_i", "gene_j", "value"]:
            raise ShapeMismatch(f"{path}: expected header 'gene_i\\tgene_j\\tvalue'")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            gi, gj, v = line.split("\t")
            if gi not in index or gj not in index:
                raise MismatchedGeneSets(f"{path}: unknown gene '{gi if gi not in index else gj}'")
            i, j = index[gi], index[gj]
            if i > j:
                i, j = j, i
            out[(i, j)] = float(v)
    return out


def _write_diag(path: str, genes: List[str], diag: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("gene\tvalue\n")
        for g, v in zip(genes, diag):
            fh.write(f"{g}\t{_fmt(v)}\n")


def _read_diag(path: str) -> Tuple[List[str], np.ndarray]:
    genes: List[str] = []
    vals: List[float] = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["gene", "value"]:
            raise ShapeMismatch(f"{path}: expected header 'gene\\tvalue'")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            g, v = line.split("\t")
            genes.append(g)
            vals.append(float(v))
    return genes, np.asarray(vals, dtype=np.float64)


# ---------------------------------------------------------------------------
# inferred networks


def write_precision_set(dirpath: str, pset: PrecisionSet) -> None:
    os.makedirs(dirpath, exist_ok=True)
    with open(os.path.join(dirpath, "network.tsv"), "w") as fh:
        fh.write("population\tgene_i\tgene_j\tvalue\n")
        for k in range(pset.n_populations):
            for (i, j) in sorted(pset.edges[k]):
                fh.write(
                    f"{k + 1}\t{pset.genes[i]}\t{pset.genes[j]}\t"
                    f"{_fmt(pset.edges[k][(i, j)])}\n"
                )
    for k in range(pset.n_populations):
        _write_diag(
            os.path.join(dirpath, f"pop_{k + 1}.diag.tsv"),
            pset.genes,
            pset.diagonals[k],
        )


def read_precision_set(dirpath: str) -> PrecisionSet:
    diag_files: Dict[int, str] = {}
    pat = re.compile(r"^pop_(\d+)\.diag\.tsv$")
    for name in os.listdir(dirpath):
        m = pat.match(name)
        if m:
            diag_files[int(m.group(1))] = os.path.join(dirpath, name)
    if not diag_files:
        raise ShapeMismatch(f"{dirpath}: no pop_<k>.diag.tsv files")
    K = max(diag_files)
    genes: Optional[List[str]] = None
    diagonals = []
    for k in range(1, K + 1):
        if k not in diag_files:
            raise ShapeMismatch(f"{dirpath}: missing pop_{k}.diag.tsv")
        g, d = _read_diag(diag_files[k])
        if genes is None:
            genes = g
        elif g != genes:
            raise MismatchedGeneSets(f"{dirpath}: diagonal gene lists disagree")
        diagonals.append(d)
    index = {g: i for i, g in enumerate(genes)}
    edges: List[EdgeDict] = [dict() for _ in range(K)]
    net_path = os.path.join(dirpath, "network.tsv")
    with open(net_path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["population", "gene_i", "gene_j", "value"]:
            raise ShapeMismatch(f"{net_path}: unexpected header")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pop, gi, gj, v = line.split("\t")
            k = int(pop) - 1
            if not (0 <= k < K):
                raise ShapeMismatch(f"{net_path}: population {pop} out of range")
            if gi not in index or gj not in index:
                raise MismatchedGeneSets(f"{net_path}: unknown gene in edge row")
            i, j = index[gi], index[gj]
            if i > j:
                i, j = j, i
            edges[k][(i, j)] = float(v)
    return PrecisionSet(genes, diagonals, edges, {})


def write_categorical_set(dirpath: str, cset: CategoricalPrecisionSet) -> None:
    os.makedirs(dirpath, exist_ok=True)
    genes = cset.genes
    for k in range(cset.n_populations):
        _write_edge_list(
            os.path.join(dirpath, f"pop_{k + 1}.global.tsv"), genes, cset.global_edges[k]
        )
        _write_diag(
            os.path.join(dirpath, f"pop_{k + 1}.global.diag.tsv"),
            genes,
            cset.global_diagonals[k],
        )
        for c in range(cset.n_categories):
            stem = f"pop_{k + 1}_cat_{c + 1}"
            _write_edge_list(
                os.path.join(dirpath, f"{stem}.local.tsv"), genes, cset.local_edges[k][c]
            )
            _write_diag(
                os.path.join(dirpath, f"{stem}.local.diag.tsv"),
                genes,
                cset.local_diagonals[k][c],
            )
            diag, edges = cset.total(k, c)
            _write_edge_list(os.path.join(dirpath, f"{stem}.total.tsv"), genes, edges)
            _write_diag(os.path.join(dirpath, f"{stem}.total.diag.tsv"), genes, diag)


# ---------------------------------------------------------------------------
# ground truth


def write_truth(dirpath: str, genes: List[str],
                precisions: Sequence[np.ndarray],
                category_precisions: Optional[Sequence[Sequence[np.ndarray]]] = None) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for k, th in enumerate(precisions):
        iu, ju = np.nonzero(np.triu(th, 1))
        edges = {(int(i), int(j)): float(th[i, j]) for i, j in zip(iu, ju)}
        _write_edge_list(os.path.join(dirpath, f"truth_pop_{k + 1}.tsv"), genes, edges)
    if category_precisions is not None:
        for k, row in enumerate(category_precisions):
            for c, th in enumerate(row):
                iu, ju = np.nonzero(np.triu(th, 1))
                edges = {(int(i), int(j)): float(th[i, j]) for i, j in zip(iu, ju)}
                _write_edge_list(
                    os.path.join(dirpath, f"truth_pop_{k + 1}_cat_{c + 1}.tsv"),
                    genes,
                    edges,
                )


def read_truth_dir(dirpath: str, genes: List[str]) -> PrecisionSet:
    """truth_pop_<k>.tsv edge lists against a caller-supplied gene universe;
    truth diagonals are not stored, so they read back as zeros."""
    pat = re.compile(r"^truth_pop_(\d+)\.tsv$")
    found: Dict[int, str] = {}
    for name in os.listdir(dirpath):
        m = pat.match(name)
        if m:
            found[int(m.group(1))] = os.path.join(dirpath, name)
    if not found:
        raise ShapeMismatch(f"{dirpath}: no truth_pop_<k>.tsv files")
    K = max(found)
    index = {g: i for i, g in enumerate(genes)}
    diagonals = [np.zeros(len(genes)) for _ in range(K)]
    edges = []
    for k in range(1, K + 1):
        if k not in found:
            raise ShapeMismatch(f"{dirpath}: missing truth_pop_{k}.tsv")
        edges.append(_read_edge_list(found[k], index))
    return PrecisionSet(list(genes), diagonals, edges, {})


# ---------------------------------------------------------------------------
# scores and metadata


def write_scores(path: str, rows: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        fh.write("gamma\tlambda\tnu\tebic\tdf_total\n")
        for r in rows:
            fh.write(
                f"{_fmt(r['gamma'])}\t{_fmt(r['lambda'])}\t{_fmt(r['nu'])}\t"
                f"{_fmt(r['ebic'])}\t{int(r['df_total'])}\n"
            )


def write_run_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_distance_matrix(path: str) -> np.ndarray:
    """Square whitespace/TSV numeric matrix for the mst subcommand."""
    mat = np.loadtxt(path, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeMismatch(f"{path}: distance matrix must be square")
    if not np.allclose(mat, mat.T, atol=1e-9):
        raise ShapeMismatch(f"{path}: distance matrix must be symmetric")
    return mat
