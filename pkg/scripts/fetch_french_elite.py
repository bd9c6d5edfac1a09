"""Convert the French financial elite data into the package's CSV layout.

The data set is not redistributed with this package. Point the script at
local copies or at URLs you have access to::

    python scripts/fetch_french_elite.py \
        --social adjacency.csv --attributes attributes.csv \
        --out data/french_elite

Inputs are dense CSV files. ``--row-names`` drops a leading column of person
labels; attribute files must carry a header of attribute names. The output
directory receives ``y_i.csv`` (N x N, no header) and ``y_ia.csv`` (header
plus N x M), which ``aplsm fit`` and ``APLSM_FRENCH_DIR`` expect.
"""
import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

import numpy as np

from aplsm.io import ParseError, write_matrix_csv
from aplsm.model import AttributeMatrix, SocialNetwork


def _open_source(source):
    if source.startswith(("http://", "https://")):
        with urllib.request.urlopen(source, timeout=60) as resp:
            return resp.read().decode("utf-8-sig")
    return Path(source).read_text(encoding="utf-8-sig")


def _parse(text, source, row_names, header):
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    names = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if row_names:
            names = names[1:]
    data = []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        cells = row[1:] if row_names else row
        try:
            data.append([float(c) if c.strip() else np.nan for c in cells])
        except ValueError as exc:
            raise ParseError(source, lineno, str(exc)) from None
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise ParseError(source, None, f"ragged rows (widths {sorted(widths)})")
    return np.array(data), names


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--social", required=True, help="path or URL of the adjacency CSV")
    p.add_argument("--attributes", required=True, help="path or URL of the attribute CSV")
    p.add_argument("--out", default="data/french_elite")
    p.add_argument("--row-names", action="store_true",
                   help="first column holds person labels")
    p.add_argument("--social-header", action="store_true",
                   help="adjacency CSV has a header row")
    p.add_argument("--binarize", action="store_true",
                   help="map every positive adjacency entry to 1")
    args = p.parse_args(argv)

    try:
        y, _ = _parse(_open_source(args.social), args.social, args.row_names,
                      args.social_header)
        x, names = _parse(_open_source(args.attributes), args.attributes,
                          args.row_names, True)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.binarize:
        y = np.where(np.isnan(y), np.nan, (y > 0).astype(float))
    try:
        net = SocialNetwork(y)
        attrs = AttributeMatrix(x, names=names)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if net.n_persons != attrs.n_persons:
        print(f"error: {net.n_persons} persons in the network, "
              f"{attrs.n_persons} in the attribute file", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = net.entries.copy()
    np.fill_diagonal(entries, 0.0)
    write_matrix_csv(out / "y_i.csv", entries)
    write_matrix_csv(out / "y_ia.csv", attrs.entries, list(attrs.names))
    print(f"wrote {out}/y_i.csv ({net.n_persons} persons) and "
          f"{out}/y_ia.csv ({attrs.n_attributes} attributes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
