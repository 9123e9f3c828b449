"""Read GWAS summary statistics and turn odds ratios into z-values."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .model import Dataset

DEFAULT_COLUMNS = {"snp_id": "SNP", "chromosome": "CHR", "position": "BP",
                   "or_value": "OR", "se": "SE"}


@dataclass(frozen=True)
class SummaryStatsRecord:
    snp_id: str
    chromosome: str
    position: int
    or_value: float
    se: float

    def __post_init__(self):
        if not self.or_value > 0:
            raise ValueError(f"OR must be > 0 (got {self.or_value})")
        if not self.se > 0:
            raise ValueError(f"SE must be > 0 (got {self.se})")

    @property
    def z(self):
        return math.log(self.or_value) / self.se


@dataclass
class IngestResult:
    datasets: dict
    records: dict
    rejects: list = field(default_factory=list)  # (line number, reason, raw line)

    @property
    def n_parsed(self):
        return sum(len(v) for v in self.records.values())

    @property
    def n_rejected(self):
        return len(self.rejects)

    def rejects_tsv(self):
        out = io.StringIO()
        out.write("line\treason\traw\n")
        for line, reason, raw in self.rejects:
            # keep one reject per row even when the raw line was tab-delimited
            out.write(f"{line}\t{reason}\t{raw.replace(chr(9), ' | ')}\n")
        return out.getvalue()


def chromosome_key(c):
    c = str(c)
    bare = re.sub(r"^chr", "", c, flags=re.IGNORECASE)
    return (0, int(bare), "") if bare.isdigit() else (1, 0, bare)


def _sniff(header_line, delimiter):
    if delimiter in (None, "auto"):
        if "\t" in header_line:
            return "\t"
        if "," in header_line:
            return ","
        return None  # whitespace
    return {"tab": "\t", "comma": ",", "whitespace": None}.get(delimiter, delimiter)


def _split(line, delim):
    if delim is None:
        return line.split()
    return next(csv.reader([line], delimiter=delim))


def ingest_summary_stats(path, column_map=None, delimiter=None) -> IngestResult:
    """Parse a delimited summary-statistics file into per-chromosome datasets.

    Rows with unparsable fields or nonpositive OR/SE are collected in
    ``rejects`` instead of aborting the run.  Each chromosome's rows are
    ordered by position.
    """
    cmap = {**DEFAULT_COLUMNS, **(column_map or {})}
    text = Path(path).read_text()
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise ValueError(f"{path}: empty file")
    delim = _sniff(lines[0], delimiter)
    header = [h.strip() for h in _split(lines[0], delim)]
    lookup = {h.lower(): i for i, h in enumerate(header)}
    idx = {}
    missing = []
    for field_name, col in cmap.items():
        if col.lower() in lookup:
            idx[field_name] = lookup[col.lower()]
        else:
            missing.append(col)
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")

    by_chrom, rejects = {}, []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = _split(line, delim)
        try:
            if len(parts) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(parts)}")
            rec = SummaryStatsRecord(
                snp_id=parts[idx["snp_id"]].strip(),
                chromosome=parts[idx["chromosome"]].strip(),
                position=int(parts[idx["position"]]),
                or_value=float(parts[idx["or_value"]]),
                se=float(parts[idx["se"]]))
            if not (math.isfinite(rec.or_value) and math.isfinite(rec.se)):
                raise ValueError("non-finite OR or SE")
        except ValueError as exc:
            rejects.append((n, str(exc), line))
            continue
        by_chrom.setdefault(rec.chromosome, []).append(rec)
    if not by_chrom:
        raise ValueError(f"{path}: no parsable rows")

    datasets, records = {}, {}
    for chrom in sorted(by_chrom, key=chromosome_key):
        recs = sorted(by_chrom[chrom], key=lambda r: r.position)
        records[chrom] = recs
        datasets[chrom] = Dataset(z=[r.z for r in recs],
                                  meta={"chromosome": chrom, "source": str(path)})
    return IngestResult(datasets=datasets, records=records, rejects=rejects)


def records_to_text(records, delimiter="\t"):
    """Write records back in the default column layout."""
    cols = list(DEFAULT_COLUMNS.values())
    out = io.StringIO()
    out.write(delimiter.join(cols) + "\n")
    for r in records:
        out.write(delimiter.join([r.snp_id, r.chromosome, str(r.position),
                                  repr(r.or_value), repr(r.se)]) + "\n")
    return out.getvalue()
