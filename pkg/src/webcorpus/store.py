"""The joined datasheet, the image-folder layout, and the train/val split."""

from __future__ import annotations

import csv
import logging
import math
import os
import random
import shutil
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .fetcher import SENTINEL, PageMetrics
from .taxonomy import category_by_id
from .webshot import InvalidName, WebshotMeta, parse_name

logger = logging.getLogger(__name__)

DATASHEET_NAME = "datasheet.csv"

DATASHEET_HEADER = [
    "name", "url", "country", "continent", "category_id", "technique",
    "time_ms", "bytes", "images", "script_files", "css_files", "tables",
    "iframes", "style_tags", "img_bytes", "img_width", "img_height",
]


class DuplicateName(ValueError):
    """An append would reuse datasheet names; nothing was written."""

    def __init__(self, names: Sequence[str]) -> None:
        super().__init__(f"duplicate datasheet names: {', '.join(sorted(names))}")
        self.names = tuple(sorted(names))


class EmptyClass(ValueError):
    """A class directory offered no files to split."""


@dataclass(frozen=True)
class DatasetRow:
    """One datasheet record joining provenance, page metrics and the webshot."""

    name: str
    url: str
    country: str
    continent: str
    category_id: int
    technique: str
    metrics: PageMetrics
    webshot: WebshotMeta | None = None

    def to_csv(self) -> list:
        img = ((self.webshot.img_bytes, self.webshot.img_width, self.webshot.img_height)
               if self.webshot else (SENTINEL, SENTINEL, SENTINEL))
        return [self.name, self.url, self.country, self.continent,
                self.category_id, self.technique, *self.metrics.as_tuple(), *img]

    @classmethod
    def from_csv(cls, row: Mapping[str, str]) -> "DatasetRow":
        metrics = PageMetrics(
            time_ms=float(row["time_ms"]), bytes=int(row["bytes"]),
            images=int(row["images"]), script_files=int(row["script_files"]),
            css_files=int(row["css_files"]), tables=int(row["tables"]),
            iframes=int(row["iframes"]), style_tags=int(row["style_tags"]))
        webshot = None
        if int(row["img_bytes"]) != SENTINEL:
            webshot = WebshotMeta(name=row["name"], img_bytes=int(row["img_bytes"]),
                                  img_width=int(row["img_width"]),
                                  img_height=int(row["img_height"]))
        return cls(name=row["name"], url=row["url"], country=row["country"],
                   continent=row["continent"], category_id=int(row["category_id"]),
                   technique=row["technique"], metrics=metrics, webshot=webshot)


def read_datasheet(path: str | Path) -> list[DatasetRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DATASHEET_HEADER:
            raise ValueError(f"{path}: expected header {DATASHEET_HEADER}, "
                             f"got {reader.fieldnames}")
        return [DatasetRow.from_csv(row) for row in reader]


def _read_raw(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def append_rows(path: str | Path, rows: Sequence[DatasetRow]) -> int:
    """Atomically append rows to the datasheet; returns the count written.

    Existing content is preserved byte for byte: the sheet is rebuilt into a
    temp file and renamed over the original, so a crash mid-append leaves
    the prior sheet intact. Raises DuplicateName (writing nothing) if any
    row's name is already present or repeated within ``rows``.
    """
    path = Path(path)
    existing_text = path.read_text(encoding="utf-8") if path.exists() else ""
    existing_names: set[str] = set()
    if existing_text:
        existing_names = {row["name"] for row in _read_raw(path)}
    offenders = []
    batch_names: set[str] = set()
    for row in rows:
        if row.name in existing_names or row.name in batch_names:
            offenders.append(row.name)
        batch_names.add(row.name)
    if offenders:
        raise DuplicateName(offenders)
    if not rows:
        return 0
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".datasheet-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(existing_text)
            writer = csv.writer(fh)
            if not existing_text:
                writer.writerow(DATASHEET_HEADER)
            for row in rows:
                writer.writerow(row.to_csv())
        os.replace(tmp_name, path)
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
    return len(rows)


def set_webshots(path: str | Path, metas: Mapping[str, WebshotMeta]) -> int:
    """Fill the image columns of existing rows, keyed by name; atomic rewrite.

    Returns how many rows were updated. Names absent from the sheet raise
    KeyError so a mis-joined capture run is caught early.
    """
    path = Path(path)
    rows = read_datasheet(path)
    by_name = {row.name for row in rows}
    missing = set(metas) - by_name
    if missing:
        raise KeyError(f"names not in datasheet: {', '.join(sorted(missing))}")
    updated = 0
    out_rows = []
    for row in rows:
        meta = metas.get(row.name)
        if meta is not None:
            row = DatasetRow(name=row.name, url=row.url, country=row.country,
                             continent=row.continent, category_id=row.category_id,
                             technique=row.technique, metrics=row.metrics, webshot=meta)
            updated += 1
        out_rows.append(row)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".datasheet-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(DATASHEET_HEADER)
            for row in out_rows:
                writer.writerow(row.to_csv())
        os.replace(tmp_name, path)
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
    return updated


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train share and the shuffle seed."""

    ratio_train: float = 0.8
    seed: int = 1337

    def __post_init__(self) -> None:
        if not 0 < self.ratio_train < 1:
            raise ValueError(f"ratio_train must be in (0, 1), got {self.ratio_train}")


@dataclass
class SplitResult:
    train: dict[str, list[Path]] = field(default_factory=dict)
    val: dict[str, list[Path]] = field(default_factory=dict)

    def counts(self) -> dict[str, tuple[int, int]]:
        return {label: (len(self.train[label]), len(self.val[label]))
                for label in self.train}


def split_assign(files: Sequence[str | Path], spec: SplitSpec,
                 label: str = "") -> tuple[list[Path], list[Path]]:
    """Deterministically partition one class's files into (train, val).

    Files are sorted by name, shuffled by a Mersenne-Twister generator
    seeded with ``"<seed>:<label>"`` (so adding a class never reshuffles the
    others), and the first floor(ratio * n) go to train. The floor is taken
    over exact rational arithmetic so 0.8 of 3182 is 2545, never 2544.
    """
    paths = sorted((Path(f) for f in files), key=lambda p: p.name)
    if not paths:
        raise EmptyClass(f"class {label!r} has no files")
    rng = random.Random(f"{spec.seed}:{label}")
    rng.shuffle(paths)
    n_train = int(Fraction(str(spec.ratio_train)) * len(paths))
    return paths[:n_train], paths[n_train:]


def discover_class_dirs(root: str | Path) -> dict[str, list[Path]]:
    """Map each immediate subdirectory of ``root`` to its (recursive) files."""
    root = Path(root)
    classes = {}
    for entry in sorted(root.iterdir()):
        if entry.is_dir():
            files = sorted(p for p in entry.rglob("*") if p.is_file())
            classes[entry.name] = files
    return classes


def split(class_dirs: Mapping[str, Sequence[str | Path]], spec: SplitSpec,
          out_root: str | Path, *, move: bool = False) -> SplitResult:
    """Split every class into ``train/<label>`` and ``val/<label>`` folders.

    Copies by default; pass ``move=True`` to relocate the originals.
    """
    out_root = Path(out_root)
    result = SplitResult()
    transfer = shutil.move if move else shutil.copy2
    for label in sorted(class_dirs):
        train_files, val_files = split_assign(class_dirs[label], spec, label)
        for subset, files in (("train", train_files), ("val", val_files)):
            target_dir = out_root / subset / label
            target_dir.mkdir(parents=True, exist_ok=True)
            placed = []
            for source in files:
                target = target_dir / Path(source).name
                transfer(str(source), str(target))
                placed.append(target)
            getattr(result, subset)[label] = placed
    return result


@dataclass
class VerifyReport:
    """Inconsistencies between the datasheet and the image tree."""

    orphan_files: list[str] = field(default_factory=list)
    orphan_rows: list[str] = field(default_factory=list)
    sentinel_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.orphan_files or self.orphan_rows or self.sentinel_violations)

    def lines(self) -> list[str]:
        out = []
        out.extend(f"orphan-file: {n}" for n in self.orphan_files)
        out.extend(f"orphan-row: {n}" for n in self.orphan_rows)
        out.extend(f"sentinel-violation: {n}" for n in self.sentinel_violations)
        return out


_METRIC_COLUMNS = DATASHEET_HEADER[6:14]


def verify(root: str | Path, datasheet: str | Path | None = None) -> VerifyReport:
    """Cross-check datasheet rows against files on disk; report-only.

    Flags files with no webshot row, rows claiming a webshot with no file,
    and rows whose metric fields mix sentinels with real values.
    """
    root = Path(root)
    sheet_path = Path(datasheet) if datasheet else root / DATASHEET_NAME
    raw_rows = _read_raw(sheet_path) if sheet_path.exists() else []
    report = VerifyReport()
    claimed: set[str] = set()
    for row in raw_rows:
        name = row["name"]
        values = [float(row[c]) for c in _METRIC_COLUMNS]
        if any(v == SENTINEL for v in values) and not all(v == SENTINEL for v in values):
            report.sentinel_violations.append(name)
        if int(row["img_bytes"]) != SENTINEL:
            claimed.add(name)
    on_disk = {p.name for p in root.rglob("*.jpg")}
    report.orphan_files = sorted(on_disk - claimed)
    report.orphan_rows = sorted(claimed - on_disk)
    return report


@dataclass
class SummaryEntry:
    files: int = 0
    bytes: int = 0


@dataclass
class DatasetSummary:
    """File counts and byte totals per (category, technique)."""

    entries: dict[tuple[str, str], SummaryEntry] = field(default_factory=dict)
    unrecognized: int = 0

    def entry(self, category_title: str, technique: str) -> SummaryEntry:
        return self.entries.setdefault((category_title, technique), SummaryEntry())

    def total_files(self) -> int:
        return sum(e.files for e in self.entries.values())

    def total_bytes(self) -> int:
        return sum(e.bytes for e in self.entries.values())


def summarize(root: str | Path) -> DatasetSummary:
    """Census the image tree per category and technique, with byte totals."""
    summary = DatasetSummary()
    for path in Path(root).rglob("*.jpg"):
        try:
            parsed = parse_name(path.name)
        except InvalidName:
            summary.unrecognized += 1
            continue
        entry = summary.entry(category_by_id(parsed.category_id).title,
                              parsed.technique.value)
        entry.files += 1
        entry.bytes += path.stat().st_size
    return summary


def _human_bytes(n: int) -> str:
    value = float(n)
    for unit in ("B", "KB", "MB", "GB"):
        if value < 1024 or unit == "GB":
            return f"{value:.0f} {unit}" if unit == "B" else f"{value:.1f} {unit}"
        value /= 1024
    return f"{n} B"


def format_summary(summary: DatasetSummary) -> str:
    """Render the census as a per-category table with technique columns."""
    techniques = ("Browsing", "Searching")
    titles = sorted({title for title, _ in summary.entries})
    lines = [f"{'Category':<28}" + "".join(f"{t:>22}" for t in techniques) + f"{'Total':>10}"]
    for title in titles:
        cells = []
        total = 0
        for technique in techniques:
            entry = summary.entries.get((title, technique), SummaryEntry())
            cells.append(f"{entry.files} ({_human_bytes(entry.bytes)})")
            total += entry.files
        lines.append(f"{title:<28}" + "".join(f"{c:>22}" for c in cells) + f"{total:>10}")
    lines.append(f"{'Total':<28}" + "".join(
        f"{sum(e.files for (t, tech), e in summary.entries.items() if tech == technique):>22}"
        for technique in techniques) + f"{summary.total_files():>10}")
    if summary.unrecognized:
        lines.append(f"unrecognized files: {summary.unrecognized}")
    return "\n".join(lines)
