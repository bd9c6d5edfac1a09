"""File formats: CSV matrices, versioned ``fit.json`` and result tables.

Matrices are read from dense CSV (``0``/``1``/``NA``) or, for networks, from
a 1-based edge list whose first line is ``nodes=N``.  Fitted states are JSON
documents carrying a ``schema_version``; readers refuse unknown major
versions.  Tabular outputs (metrics, replication rows, plot data) are CSV.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .metrics import RankDiagnostics
from .model import AttributeMatrix, LatentConfig, SocialNetwork
from .simulation import REPLICATION_COLUMNS, ReplicationResult, SimulationReplicate
from .vbem import FitOptions, FitResult, VariationalState

__all__ = [
    "ParseError",
    "SchemaVersionError",
    "SCHEMA_VERSION",
    "read_social_network",
    "read_attribute_matrix",
    "read_matrix_csv",
    "write_matrix_csv",
    "fit_to_dict",
    "fit_from_dict",
    "save_fit",
    "load_fit",
    "ellipse_radii",
    "write_positions",
    "write_rank_pairs",
    "write_replication",
    "write_replicate_data",
    "read_truth",
    "write_rows",
]

SCHEMA_VERSION = "1.0"
MISSING_TOKENS = frozenset({"", "na", "nan", "null"})


class ParseError(ValueError):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class SchemaVersionError(ValueError):
    """``fit.json`` written by an incompatible schema version."""


# --------------------------------------------------------------------------
# matrices

def _parse_cell(token, path, line, col, binary):
    tok = token.strip()
    if tok.lower() in MISSING_TOKENS:
        return math.nan
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(path, line, f"column {col}: not a number: {tok!r}") from None
    if not math.isfinite(val):
        raise ParseError(path, line, f"column {col}: non-finite value {tok!r}")
    if binary and val not in (0.0, 1.0):
        raise ParseError(path, line, f"column {col}: non-binary entry {tok!r}")
    return val


def _is_header(row):
    for tok in row:
        t = tok.strip()
        if t.lower() in MISSING_TOKENS:
            continue
        try:
            float(t)
        except ValueError:
            return True
    return False


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            return [(i, row) for i, row in enumerate(csv.reader(fh), start=1)
                    if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise ParseError(path, None, f"cannot read file: {exc.strerror}") from exc


def read_matrix_csv(path, header="auto", binary=True):
    """Dense numeric CSV; returns ``(matrix, column_names or None)``.

    ``header`` is ``"auto"`` (first row is a header if any cell is
    non-numeric), ``True`` or ``False``.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError(path, None, "file is empty")
    names = None
    if header is True or (header == "auto" and _is_header(rows[0][1])):
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise ParseError(path, None, "no data rows after the header")
    width = len(names) if names is not None else len(rows[0][1])
    data = []
    for line, row in rows:
        if len(row) != width:
            raise ParseError(path, line,
                             f"expected {width} columns, found {len(row)}")
        data.append([_parse_cell(tok, path, line, c + 1, binary)
                     for c, tok in enumerate(row)])
    return np.array(data, dtype=np.float64), names


def read_social_network(path, format="dense_csv", directed=False) -> SocialNetwork:
    """Read a binary network from dense CSV or from a ``nodes=N`` edge list.

    Raises
    ------
    ParseError
        On ragged rows, non-binary entries, out-of-range node indices or an
        asymmetric matrix declared undirected.
    """
    if format == "dense_csv":
        mat, _ = read_matrix_csv(path)
        if mat.shape[0] != mat.shape[1]:
            raise ParseError(path, None,
                             f"adjacency matrix must be square, got {mat.shape}")
    elif format == "edge_list":
        mat = _read_edge_list(path, directed)
    else:
        raise ValueError(f"unknown network format {format!r}")
    try:
        return SocialNetwork(mat, directed=directed)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc


def _read_edge_list(path, directed):
    lines = []
    try:
        with open(path) as fh:
            for i, raw in enumerate(fh, start=1):
                text = raw.split("#", 1)[0].strip()
                if text:
                    lines.append((i, text))
    except OSError as exc:
        raise ParseError(path, None, f"cannot read file: {exc.strerror}") from exc
    if not lines:
        raise ParseError(path, None, "file is empty")
    line, first = lines[0]
    key, sep, value = first.partition("=")
    if key.strip().lower() != "nodes" or not sep:
        raise ParseError(path, line, "first line must be 'nodes=N'")
    try:
        n = int(value)
    except ValueError:
        raise ParseError(path, line, f"bad node count {value.strip()!r}") from None
    if n < 2:
        raise ParseError(path, line, "node count must be >= 2")
    mat = np.zeros((n, n))
    for line, text in lines[1:]:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise ParseError(path, line, f"expected 'i,j', found {text!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, line, f"non-integer node index in {text!r}") from None
        for idx in (i, j):
            if not 1 <= idx <= n:
                raise ParseError(path, line, f"node index {idx} outside 1..{n}")
        if i == j:
            continue
        mat[i - 1, j - 1] = 1.0
        if not directed:
            mat[j - 1, i - 1] = 1.0
    return mat


def read_attribute_matrix(path) -> AttributeMatrix:
    """Read an ``N x M`` binary matrix whose first row names the attributes."""
    rows = _read_rows(path)
    if not rows:
        raise ParseError(path, None, "file is empty")
    if not _is_header(rows[0][1]):
        raise ParseError(path, rows[0][0], "attribute file needs a header of names")
    mat, names = read_matrix_csv(path, header=True)
    try:
        return AttributeMatrix(mat, names=names)
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from exc


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "NA" if math.isnan(x) else repr(x)
    return str(x)


def write_matrix_csv(path, matrix, names=None):
    """Dense CSV with ``NA`` for missing entries and round-trip float text."""
    mat = np.asarray(matrix, dtype=np.float64)
    present = mat[~np.isnan(mat)]
    # 0/1 data are written as integers, everything else round-trips as repr
    integral = bool(np.all(present == np.round(present)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if names is not None:
            w.writerow(names)
        for row in mat:
            w.writerow("NA" if np.isnan(v) else (str(int(v)) if integral else repr(float(v)))
                       for v in row)


def write_rows(path, rows, columns):
    """CSV with a fixed column order; floats written with ``repr``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(_fmt(row[c]) for c in columns)


# --------------------------------------------------------------------------
# fit.json

def _arr(x):
    return None if x is None else np.asarray(x).tolist()


def fit_to_dict(result: FitResult, attribute_names=None, extra=None) -> dict:
    s = result.state
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model_kind": result.model_kind,
        "config": {
            "dim": result.config.dim if result.config else s.dim,
            "prior_var_person": result.config.prior_var_person if result.config else 1.0,
            "prior_var_attribute": result.config.prior_var_attribute if result.config else 1.0,
        },
        "options": None if result.options is None else {
            k: getattr(result.options, k)
            for k in FitOptions.__dataclass_fields__},
        "state": {
            "mean_persons": _arr(s.mean_persons),
            "cov_persons": _arr(s.cov_persons),
            "mean_attributes": _arr(s.mean_attributes),
            "cov_attributes": _arr(s.cov_attributes),
            "alpha0": s.alpha0,
            "alpha1": s.alpha1,
        },
        "objective_trace": list(result.objective_trace),
        "initial_objective": result.initial_objective,
        "iterations_run": result.iterations_run,
        "converged": result.converged,
        "diagnostics": dict(result.diagnostics),
        "attribute_names": None if attribute_names is None else list(attribute_names),
    }
    if extra:
        doc["extra"] = extra
    return doc


def _check_version(doc, path):
    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if not isinstance(version, str):
        raise SchemaVersionError(f"{path}: missing schema_version")
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise SchemaVersionError(
            f"{path}: unsupported schema_version {version!r} "
            f"(this reader understands {SCHEMA_VERSION.split('.')[0]}.x)")


def fit_from_dict(doc: dict, path="<dict>") -> FitResult:
    _check_version(doc, path)
    try:
        st = doc["state"]
        state = VariationalState(
            np.array(st["mean_persons"], dtype=np.float64),
            np.array(st["cov_persons"], dtype=np.float64),
            None if st["mean_attributes"] is None else np.array(st["mean_attributes"], dtype=np.float64),
            None if st["cov_attributes"] is None else np.array(st["cov_attributes"], dtype=np.float64),
            st["alpha0"], st["alpha1"])
        opts = doc.get("options")
        return FitResult(
            state=state,
            objective_trace=tuple(float(v) for v in doc["objective_trace"]),
            iterations_run=int(doc["iterations_run"]),
            converged=bool(doc["converged"]),
            model_kind=doc["model_kind"],
            initial_objective=float(doc.get("initial_objective", math.nan)),
            diagnostics=dict(doc.get("diagnostics", {})),
            options=None if opts is None else FitOptions(**opts),
            config=LatentConfig(**doc["config"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, None, f"malformed fit document: {exc}") from exc


def save_fit(result: FitResult, path, attribute_names=None, extra=None):
    doc = fit_to_dict(result, attribute_names, extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_fit(path):
    """Returns ``(FitResult, attribute_names or None)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(path, None, f"cannot read file: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    return fit_from_dict(doc, path), doc.get("attribute_names")


# --------------------------------------------------------------------------
# result tables

def ellipse_radii(cov, level=0.8) -> np.ndarray:
    """Per-axis half-widths ``z * sqrt(diag(cov))`` of a central normal
    interval with the given coverage (``z = 1.2816`` for 80%)."""
    z = norm.ppf(0.5 + level / 2.0)
    return z * np.sqrt(np.diag(np.asarray(cov, dtype=np.float64)))


def write_positions(path, result: FitResult, attribute_names=None, level=0.8):
    """One row per node: kind, index, name, coordinates, ellipse radii."""
    s = result.state
    dim = s.dim
    cols = (["kind", "index", "name"] + [f"x{d + 1}" for d in range(dim)]
            + [f"radius{d + 1}" for d in range(dim)])
    rows = []
    blocks = [("person", s.mean_persons, s.cov_persons, None)]
    if s.mean_attributes is not None:
        blocks.append(("attribute", s.mean_attributes, s.cov_attributes,
                       attribute_names))
    for kind, means, cov, names in blocks:
        radii = ellipse_radii(cov, level)
        for i, x in enumerate(means):
            row = {"kind": kind, "index": i + 1,
                   "name": names[i] if names is not None else f"{kind}{i + 1}"}
            row.update({f"x{d + 1}": x[d] for d in range(dim)})
            row.update({f"radius{d + 1}": radii[d] for d in range(dim)})
            rows.append(row)
    write_rows(path, rows, cols)


def write_rank_pairs(path, diag: RankDiagnostics):
    cols = ["panel", "x_label", "y_label", "x_rank", "y_rank", "spearman",
            "reference_intercept", "reference_slope"]
    rows = []
    for panel in ("persons", "attributes", "attribute_pairs"):
        pair = getattr(diag, panel)
        if pair is None:
            continue
        for xr, yr in zip(pair.x_ranks, pair.y_ranks):
            rows.append(dict(panel=panel, x_label=pair.x_label,
                             y_label=pair.y_label, x_rank=float(xr),
                             y_rank=float(yr), spearman=pair.spearman,
                             reference_intercept=pair.reference_intercept,
                             reference_slope=pair.reference_slope))
    write_rows(path, rows, cols)


def write_replication(outdir, result: ReplicationResult):
    """``replication.csv`` plus long-format plot data for the AAE, intercept
    error and distance-ratio figures, and a ``metrics.csv`` summary."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "replication.csv", result.rows, REPLICATION_COLUMNS)

    aae = []
    for row in result.rows:
        for matrix, model, col in (("social", "aplsm", "aae_social_aplsm"),
                                   ("social", "lsm", "aae_social_lsm"),
                                   ("attributes", "aplsm", "aae_attr_aplsm"),
                                   ("attributes", "blsm", "aae_attr_blsm")):
            aae.append(dict(replicate=row["replicate"], matrix=matrix,
                            model=model, aae=row[col]))
    write_rows(out / "plot_aae.csv", aae, ["replicate", "matrix", "model", "aae"])

    alpha = [dict(replicate=row["replicate"], parameter=p, error=row[f"{p}_error"])
             for row in result.rows for p in ("alpha0", "alpha1")]
    write_rows(out / "plot_alpha_error.csv", alpha, ["replicate", "parameter", "error"])

    ratio = []
    for row in result.rows:
        for side, tag in (("person", "ratio_person_"), ("attribute", "ratio_attr_")):
            for col in REPLICATION_COLUMNS:
                if col.startswith(tag):
                    ratio.append(dict(replicate=row["replicate"], side=side,
                                      quantile=col[len(tag):], ratio=row[col]))
    write_rows(out / "plot_distance_ratio.csv", ratio,
               ["replicate", "side", "quantile", "ratio"])

    summary = result.summary()
    write_rows(out / "metrics.csv",
               [dict(metric=k, value=v) for k, v in summary.items()],
               ["metric", "value"])


def write_replicate_data(outdir, rep: SimulationReplicate, spec=None):
    """Data and truth files of one replicate (readable by :func:`read_truth`)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    m = rep.sampled_yia.n_attributes
    names = [f"attr{a + 1}" for a in range(m)]
    yi = rep.sampled_yi.entries.copy()
    np.fill_diagonal(yi, 0.0)
    write_matrix_csv(out / "y_i.csv", yi)
    write_matrix_csv(out / "y_ia.csv", rep.sampled_yia.entries, names)
    write_matrix_csv(out / "true_prob_social.csv", rep.true_prob_social)
    write_matrix_csv(out / "true_prob_attr.csv", rep.true_prob_attr, names)
    write_matrix_csv(out / "true_persons.csv", rep.true_positions.persons)
    write_matrix_csv(out / "true_attributes.csv", rep.true_positions.attributes)
    meta = {"replicate_index": rep.replicate_index,
            "replicate_seed": list(rep.replicate_seed)}
    if spec is not None:
        meta.update(alpha0=spec.alpha0, alpha1=spec.alpha1, spec=spec.to_dict())
    with open(out / "truth.json", "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def read_truth(truth_dir) -> dict:
    """Load the truth files written by :func:`write_replicate_data`.

    Missing files are simply absent from the returned dict.
    """
    d = Path(truth_dir)
    if not d.is_dir():
        raise ParseError(d, None, "truth directory does not exist")
    out = {}
    for key, fname in (("prob_social", "true_prob_social.csv"),
                       ("prob_attr", "true_prob_attr.csv"),
                       ("persons", "true_persons.csv"),
                       ("attributes", "true_attributes.csv")):
        path = d / fname
        if path.exists():
            out[key] = read_matrix_csv(path, binary=False)[0]
    meta = d / "truth.json"
    if meta.exists():
        try:
            with open(meta) as fh:
                out["meta"] = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(meta, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not out:
        raise ParseError(d, None, "no truth files found")
    return out
