"""Per-iteration metrics as CSV, one row per iteration."""

import csv
import io

__all__ = ["COLUMNS", "format_metrics", "write_metrics_csv", "read_metrics_csv"]

COLUMNS = ("iteration", "loss", "grad_norm", "inner_product", "aggregate_norm",
           "byzantine_count", "selected_index", "selected_is_byzantine", "diverged")


def _num(x):
    # 17 significant digits round-trip every float64
    return f"{x:.17g}"


def _row(r):
    sib = -1 if r.selected_is_byzantine is None else int(r.selected_is_byzantine)
    return [r.iteration, _num(r.loss), _num(r.grad_norm), _num(r.inner_product),
            _num(r.aggregate_norm), r.byzantine_count,
            -1 if r.selected_index is None else r.selected_index, sib, int(r.diverged)]


def format_metrics(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in trace.metrics:
        w.writerow(_row(r))
    return buf.getvalue()


def write_metrics_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_metrics(trace))


def read_metrics_csv(path):
    """Rows as dicts with ints and floats restored."""
    ints = {"iteration", "byzantine_count", "selected_index", "selected_is_byzantine",
            "diverged"}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [{k: int(v) if k in ints else float(v) for k, v in row.items()}
                for row in reader]
