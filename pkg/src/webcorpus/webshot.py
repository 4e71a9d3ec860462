"""Full-page screenshot orchestration and the webshot naming grammar."""

from __future__ import annotations

import enum
import io
import logging
import re
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Protocol, Sequence

from PIL import Image, UnidentifiedImageError

from .collector import UrlRecord
from .taxonomy import Category, Country, Technique

logger = logging.getLogger(__name__)

DEFAULT_VIEWPORT = (992, 744)
DEFAULT_TIMEOUT = 60.0
DEFAULT_SESSIONS = 2
DEFAULT_JPG_QUALITY = 90
# Guards pathological pages; the tallest page worth keeping is just under this.
DEFAULT_HEIGHT_CAP = 50_000

_NAME_RE = re.compile(r"^([BS])([1-6])(.+)_([1-9][0-9]*)\.jpg$")


class InvalidName(ValueError):
    """A webshot name that does not follow the naming grammar."""


class ParsedName(NamedTuple):
    technique: Technique
    category_id: int
    country: str
    seq: int


def make_name(technique: Technique, category: Category, country: Country | str,
              seq: int) -> str:
    """Build a webshot name: ``<B|S><category digit><CountryName>_<seq>.jpg``.

    Spaces in the country name are removed so the name stays one token.
    """
    if seq < 1:
        raise ValueError(f"seq must be >= 1, got {seq}")
    compact = country.compact_name if isinstance(country, Country) else country.replace(" ", "")
    if not compact:
        raise ValueError("country name must be non-empty")
    return f"{technique.letter}{category.id}{compact}_{seq}.jpg"


def parse_name(name: str) -> ParsedName:
    """Invert :func:`make_name`; raises InvalidName if the grammar does not match."""
    match = _NAME_RE.match(name)
    if not match:
        raise InvalidName(f"webshot name {name!r} does not match the naming grammar")
    letter, digit, country, seq = match.groups()
    return ParsedName(Technique.from_letter(letter), int(digit), country, int(seq))


@dataclass(frozen=True)
class WebshotMeta:
    """Identity and size of one captured image; ``name`` is the datasheet join key."""

    name: str
    img_bytes: int
    img_width: int
    img_height: int

    def __post_init__(self) -> None:
        parse_name(self.name)
        if self.img_bytes < 1 or self.img_width < 1 or self.img_height < 1:
            raise ValueError(f"webshot sizes must be >= 1: {self}")


class CaptureKind(enum.Enum):
    TIMEOUT = "timeout"
    NAVIGATION = "navigation"
    PROTOCOL = "protocol"


class CaptureFailure(Exception):
    def __init__(self, kind: CaptureKind, detail: str) -> None:
        super().__init__(f"{kind.value}: {detail}")
        self.kind = kind
        self.detail = detail


class CaptureEndpoint(Protocol):
    """Browser automation endpoint: renders a page to encoded image bytes."""

    def render(self, url: str, viewport: tuple[int, int], timeout: float) -> bytes:
        """Return an encoded full-page image; raises CaptureFailure."""
        ...


_STYLE_HEIGHT_RE = re.compile(r"height\s*:\s*(\d+)px", re.IGNORECASE)


class FakeRenderer:
    """Offline capture endpoint used for tests and desk runs.

    Pre-registered images are served as-is. Otherwise the page is downloaded
    and laid out with one simplistic rule: the rendered height is the sum of
    ``height:<N>px`` inline styles on the body's direct children (at least
    the viewport height), and the width is the viewport width. Each block is
    drawn as a colored band so output images differ per page.
    """

    def __init__(self, fetch_timeout: float = 10.0) -> None:
        self.fetch_timeout = fetch_timeout
        self._canned: dict[str, bytes] = {}

    def register(self, url: str, image_bytes: bytes) -> None:
        self._canned[url] = image_bytes

    def _block_heights(self, html: str) -> list[int]:
        from .htmltree import parse_html

        root = parse_html(html)
        body = next((el for el in root.iter() if el.tag == "body"), None)
        blocks = body.children if body is not None else root.children
        heights = []
        for block in blocks:
            match = _STYLE_HEIGHT_RE.search(block.attr("style") or "")
            if match:
                heights.append(int(match.group(1)))
        return heights

    def render(self, url: str, viewport: tuple[int, int], timeout: float) -> bytes:
        if url in self._canned:
            return self._canned[url]
        import requests

        try:
            response = requests.get(url, timeout=min(timeout, self.fetch_timeout))
            response.raise_for_status()
        except requests.exceptions.Timeout as exc:
            raise CaptureFailure(CaptureKind.TIMEOUT, str(exc)) from exc
        except requests.RequestException as exc:
            raise CaptureFailure(CaptureKind.NAVIGATION, str(exc)) from exc
        width, min_height = viewport
        heights = self._block_heights(response.text)
        total = max(min_height, sum(heights))
        image = Image.new("RGB", (width, total), "white")
        y = 0
        for i, block_height in enumerate(heights):
            shade = (hash((url, i)) & 0x7F) + 96
            image.paste((shade, 255 - shade, 160), (0, y, width, min(total, y + block_height)))
            y += block_height
        buffer = io.BytesIO()
        image.save(buffer, "PNG")
        return buffer.getvalue()


class CommandEndpoint:
    """Spawned-process endpoint driving an external screenshot command.

    The template is a shell-like string with ``{url}``, ``{width}``,
    ``{height}`` and ``{out}`` placeholders, e.g.::

        chromium --headless --window-size={width},{height} --screenshot={out} {url}
    """

    def __init__(self, template: str) -> None:
        self.argv_template = shlex.split(template)

    def render(self, url: str, viewport: tuple[int, int], timeout: float) -> bytes:
        with tempfile.TemporaryDirectory(prefix="webshot-") as tmp:
            out_path = Path(tmp) / "capture.png"
            argv = [arg.format(url=url, width=viewport[0], height=viewport[1],
                               out=out_path) for arg in self.argv_template]
            try:
                proc = subprocess.run(argv, timeout=timeout, capture_output=True)
            except subprocess.TimeoutExpired as exc:
                raise CaptureFailure(CaptureKind.TIMEOUT, f"{argv[0]} timed out") from exc
            except OSError as exc:
                raise CaptureFailure(CaptureKind.PROTOCOL, str(exc)) from exc
            if proc.returncode != 0:
                raise CaptureFailure(
                    CaptureKind.NAVIGATION,
                    f"{argv[0]} exited {proc.returncode}: {proc.stderr[-400:]!r}")
            if not out_path.is_file():
                raise CaptureFailure(CaptureKind.PROTOCOL, "command wrote no image")
            return out_path.read_bytes()


def _render_jpg(url: str, viewport: tuple[int, int], timeout: float, *,
                endpoint: CaptureEndpoint, quality: int,
                height_cap: int) -> tuple[bytes, int, int]:
    """Render and normalize to JPG; returns (jpg bytes, width, height).

    Dimensions are read back from the encoded bytes rather than trusted from
    the endpoint. Images taller than ``height_cap`` are cropped to the cap.
    """
    raw = endpoint.render(url, viewport, timeout)
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise CaptureFailure(CaptureKind.PROTOCOL,
                             f"endpoint returned undecodable image: {exc}") from exc
    if image.height > height_cap:
        image = image.crop((0, 0, image.width, height_cap))
        jpg = None
    elif image.format == "JPEG":
        jpg = raw
    else:
        jpg = None
    if jpg is None:
        buffer = io.BytesIO()
        image.convert("RGB").save(buffer, "JPEG", quality=quality)
        jpg = buffer.getvalue()
    with Image.open(io.BytesIO(jpg)) as encoded:
        return jpg, encoded.width, encoded.height


def capture(url: str, viewport: tuple[int, int] = DEFAULT_VIEWPORT,
            timeout: float = DEFAULT_TIMEOUT, *, endpoint: CaptureEndpoint,
            name: str, quality: int = DEFAULT_JPG_QUALITY,
            height_cap: int = DEFAULT_HEIGHT_CAP) -> tuple[bytes, WebshotMeta]:
    """Capture one full-page webshot under an already-decided name.

    Raises CaptureFailure; callers batching captures record the webshot as
    missing rather than aborting.
    """
    parse_name(name)
    jpg, width, height = _render_jpg(url, viewport, timeout, endpoint=endpoint,
                                     quality=quality, height_cap=height_cap)
    return jpg, WebshotMeta(name=name, img_bytes=len(jpg), img_width=width,
                            img_height=height)


GroupKey = tuple[str, int, str]


def group_key(technique: Technique, category: Category, country: Country | str) -> GroupKey:
    compact = country.compact_name if isinstance(country, Country) else country.replace(" ", "")
    return (technique.letter, category.id, compact)


@dataclass
class NameAllocator:
    """Hands out sequential webshot names per (technique, category, country)."""

    start_seq: Mapping[GroupKey, int] | None = None
    _next: dict[GroupKey, int] = field(default_factory=dict)

    def next_name(self, technique: Technique, category: Category,
                  country: Country | str) -> str:
        key = group_key(technique, category, country)
        seq = self._next.get(key)
        if seq is None:
            seq = (self.start_seq or {}).get(key, 1)
        self._next[key] = seq + 1
        return make_name(technique, category, key[2], seq)


def capture_batch(records: Sequence[UrlRecord], out_dir: str | Path, *,
                  endpoint: CaptureEndpoint,
                  viewport: tuple[int, int] = DEFAULT_VIEWPORT,
                  timeout: float = DEFAULT_TIMEOUT,
                  sessions: int = DEFAULT_SESSIONS,
                  start_seq: Mapping[GroupKey, int] | None = None,
                  datasheet: str | Path | None = None,
                  quality: int = DEFAULT_JPG_QUALITY,
                  height_cap: int = DEFAULT_HEIGHT_CAP) -> list[WebshotMeta]:
    """Capture a batch into per-category folders with gap-free numbering.

    Sequence numbers are consumed by successes only: failed captures are
    logged and skipped, and the next success in the same group takes the
    next number. Renders run on up to ``sessions`` parallel sessions; name
    assignment follows input order. When ``datasheet`` is given, one row per
    success is appended (page metrics sentineled, to be filled by a fetch
    pass keyed on the same names).
    """
    out_dir = Path(out_dir)
    allocator = NameAllocator(start_seq=start_seq)
    metas: list[WebshotMeta] = []
    rows = []

    def render(record: UrlRecord):
        try:
            return _render_jpg(record.url, viewport, timeout, endpoint=endpoint,
                               quality=quality, height_cap=height_cap)
        except CaptureFailure as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, sessions)) as pool:
        for record, outcome in zip(records, pool.map(render, records)):
            if isinstance(outcome, CaptureFailure):
                logger.warning("capture: %s failed (%s)", record.url, outcome)
                continue
            jpg, width, height = outcome
            name = allocator.next_name(record.technique, record.category, record.country)
            target = out_dir / record.category.slug / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(jpg)
            meta = WebshotMeta(name=name, img_bytes=len(jpg), img_width=width,
                               img_height=height)
            metas.append(meta)
            rows.append((record, meta))
    if datasheet is not None and rows:
        from . import store

        store.append_rows(datasheet, [
            store.DatasetRow(
                name=meta.name, url=record.url, country=record.country.name,
                continent=record.country.continent, category_id=record.category.id,
                technique=record.technique.value,
                metrics=store.PageMetrics.failed(), webshot=meta)
            for record, meta in rows])
    return metas
