"""Download page source, time it, and count the structural markup parameters."""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import requests

from .collector import UrlRecord
from .htmltree import parse_html

logger = logging.getLogger(__name__)

SENTINEL = -1

DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_REDIRECTS = 5
DEFAULT_WORKERS = 8
DEFAULT_USER_AGENT = (
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 "
    "(KHTML, like Gecko) Chrome/120.0 Safari/537.36"
)

_METRIC_FIELDS = ("time_ms", "bytes", "images", "script_files", "css_files",
                  "tables", "iframes", "style_tags")


@dataclass(frozen=True)
class PageMetrics:
    """The eight quantitative page parameters.

    A record is atomic with respect to failure: either every field is >= 0
    (successful fetch) or every field is exactly -1 (failed fetch).
    """

    time_ms: float
    bytes: int
    images: int
    script_files: int
    css_files: int
    tables: int
    iframes: int
    style_tags: int

    def __post_init__(self) -> None:
        values = [getattr(self, name) for name in _METRIC_FIELDS]
        if not (all(v >= 0 for v in values) or all(v == SENTINEL for v in values)):
            raise ValueError(f"metrics must be all >= 0 or all {SENTINEL}: {values}")

    @classmethod
    def failed(cls) -> "PageMetrics":
        """The fully-sentineled record written for a failed fetch."""
        return cls(*([SENTINEL] * 8))

    @property
    def is_failure(self) -> bool:
        return self.time_ms == SENTINEL

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in _METRIC_FIELDS)


class FailureKind(enum.Enum):
    TIMEOUT = "timeout"
    HTTP_STATUS = "http_status"
    TLS = "tls"
    CONNECTION = "connection"


class FetchFailure(Exception):
    """A download failed; ``kind`` classifies it, ``status`` set for HTTP errors."""

    def __init__(self, kind: FailureKind, detail: str, status: int | None = None) -> None:
        super().__init__(f"{kind.value}"
                         f"{f' {status}' if status is not None else ''}: {detail}")
        self.kind = kind
        self.status = status
        self.detail = detail


class FetchResult(NamedTuple):
    html: str
    time_ms: float
    bytes: int


def fetch(url: str, timeout: float = DEFAULT_TIMEOUT, *,
          max_redirects: int = DEFAULT_MAX_REDIRECTS,
          user_agent: str = DEFAULT_USER_AGENT,
          session: requests.Session | None = None) -> FetchResult:
    """Download ``url`` and measure wall-clock time and body size.

    The clock runs from the moment the request is issued until the body has
    been fully read; redirects are followed up to ``max_redirects`` and the
    final body is measured. ``bytes`` is the decompressed source size.

    Raises FetchFailure on timeout, TLS/connection errors, or any final
    status >= 300.
    """
    if timeout <= 0:
        raise ValueError("timeout must be > 0")
    own_session = session is None
    sess = session or requests.Session()
    sess.max_redirects = max_redirects
    start = time.perf_counter()
    try:
        response = sess.get(url, timeout=timeout, allow_redirects=True,
                            headers={"User-Agent": user_agent})
    except requests.exceptions.SSLError as exc:
        raise FetchFailure(FailureKind.TLS, str(exc)) from exc
    except requests.exceptions.Timeout as exc:
        raise FetchFailure(FailureKind.TIMEOUT, str(exc)) from exc
    except requests.RequestException as exc:
        raise FetchFailure(FailureKind.CONNECTION, str(exc)) from exc
    finally:
        if own_session:
            sess.close()
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    if response.status_code >= 300:
        raise FetchFailure(FailureKind.HTTP_STATUS,
                           f"final status for {url}", status=response.status_code)
    return FetchResult(html=response.text, time_ms=elapsed_ms,
                       bytes=len(response.content))


class StructuralCounts(NamedTuple):
    images: int
    script_files: int
    css_files: int
    tables: int
    iframes: int
    style_tags: int


def _rel_has_stylesheet(rel: str | None) -> bool:
    return rel is not None and "stylesheet" in rel.lower().split()


def extract_metrics(html: str) -> StructuralCounts:
    """Count the six structural parameters over the recovered element tree.

    Scripts count only when they reference an external file (``src``
    attribute present); inline scripts are deliberately excluded. CSS files
    are ``<link>`` elements whose ``rel`` contains ``stylesheet``,
    case-insensitively.
    """
    images = scripts = css = tables = iframes = styles = 0
    for element in parse_html(html).iter():
        tag = element.tag
        if tag == "img":
            images += 1
        elif tag == "script":
            if element.has_attr("src"):
                scripts += 1
        elif tag == "link":
            if _rel_has_stylesheet(element.attr("rel")):
                css += 1
        elif tag == "table":
            tables += 1
        elif tag == "iframe":
            iframes += 1
        elif tag == "style":
            styles += 1
    return StructuralCounts(images, scripts, css, tables, iframes, styles)


def measure(record: UrlRecord, timeout: float = DEFAULT_TIMEOUT, *,
            max_redirects: int = DEFAULT_MAX_REDIRECTS,
            user_agent: str = DEFAULT_USER_AGENT) -> PageMetrics:
    """Fetch and measure one URL; failures yield the fully-sentineled record.

    Never raises for per-URL problems, so batch runs keep going.
    """
    try:
        result = fetch(record.url, timeout, max_redirects=max_redirects,
                       user_agent=user_agent)
    except FetchFailure as exc:
        logger.warning("measure: %s failed (%s)", record.url, exc)
        return PageMetrics.failed()
    counts = extract_metrics(result.html)
    return PageMetrics(result.time_ms, result.bytes, *counts)


def measure_all(records: Sequence[UrlRecord], timeout: float = DEFAULT_TIMEOUT, *,
                workers: int = DEFAULT_WORKERS,
                max_redirects: int = DEFAULT_MAX_REDIRECTS,
                user_agent: str = DEFAULT_USER_AGENT) -> list[PageMetrics]:
    """Measure a batch with a bounded worker pool; results keep input order.

    Each worker starts its own clock when its request is actually issued, so
    timings are isolated from pool scheduling delay.
    """
    if not records:
        return []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(
            lambda r: measure(r, timeout, max_redirects=max_redirects,
                              user_agent=user_agent),
            records))
