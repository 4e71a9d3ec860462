"""URL acquisition: search-engine query templates and web-directory crawling."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence
from urllib.parse import urlparse

from .htmltree import Element, SelectorRule, parse_html, parse_selector
from .taxonomy import Category, Country, Technique, category_by_id

logger = logging.getLogger(__name__)

DEFAULT_LINK_LIMIT = 100

URL_LIST_HEADER = ["url", "country", "continent", "category_id", "technique"]

# Directory region segment for each continent in the countries file.
REGION_BY_CONTINENT = {
    "Africa": "Africa",
    "Americas": "Americas",
    "Asia": "Asia",
    "Europe": "Europe",
    "Oceania": "Oceania",
}

DIRECTORY_BASE = "https://botw.org/top/Regional/"


class EmptyCountryCode(ValueError):
    """The country has no cc_tld to build a ``site:`` filter from."""


class UnknownRegion(ValueError):
    """The country's continent has no directory region mapping."""


class EmptyInput(ValueError):
    """collect() needs at least one country and one category."""


class BackendUnavailable(RuntimeError):
    """The results-page backend could not serve the request."""


class QuotaExceeded(RuntimeError):
    """A live backend refused the request because of rate limiting."""


def build_search_query(country: Country, category: Category) -> str:
    """Build the engine query: ``site:<cc_tld> <kw1> OR ... OR <kwN> ext:html``.

    Whitespace is normalized to single spaces.
    """
    if not country.cc_tld.strip():
        raise EmptyCountryCode(f"country {country.name!r} has a blank cc_tld")
    phrase = " OR ".join(category.keywords)
    query = f"site:{country.cc_tld} {phrase} ext:html"
    return " ".join(query.split())


def build_directory_url(country: Country, category: Category) -> str:
    """Build the directory path ``.../Regional/<Region>/<Country>/<Category>/``."""
    region = REGION_BY_CONTINENT.get(country.continent)
    if region is None:
        raise UnknownRegion(f"no directory region for continent {country.continent!r}")
    country_segment = country.name.strip().replace(" ", "-")
    return f"{DIRECTORY_BASE}{region}/{country_segment}/{category.slug}/"


class Backend(Protocol):
    """Source of results-page documents, live or canned."""

    def fetch(self, request: str, limit: int) -> str:
        """Return the raw HTML of the results page for ``request``.

        ``request`` is a search query (Searching) or a directory URL
        (Browsing). Raises BackendUnavailable or QuotaExceeded on failure.
        """
        ...


def request_key(request: str) -> str:
    """Stable filename key for a query or URL."""
    return hashlib.sha256(request.encode("utf-8")).hexdigest()[:16]


class FixtureBackend:
    """Serves canned results pages from a directory, keyed by request hash."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path_for(self, request: str) -> Path:
        return self.root / f"{request_key(request)}.html"

    def register(self, request: str, document: str) -> Path:
        """Store a canned document for ``request``; returns the fixture path."""
        path = self.path_for(request)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(document, encoding="utf-8")
        return path

    def fetch(self, request: str, limit: int) -> str:
        path = self.path_for(request)
        if not path.is_file():
            raise BackendUnavailable(f"no fixture for request {request!r} ({path.name})")
        return path.read_text(encoding="utf-8")


class HttpBackend:
    """Live backend that treats the request as a URL to download.

    Suitable for Browsing, where the request is the directory page URL.
    There is no shipped live adapter for search engines; plug one in by
    implementing the Backend protocol.
    """

    def __init__(self, timeout: float = 30.0, user_agent: str | None = None) -> None:
        self.timeout = timeout
        self.user_agent = user_agent

    def fetch(self, request: str, limit: int) -> str:
        if urlparse(request).scheme not in ("http", "https"):
            raise BackendUnavailable(
                "live backend only fetches URLs (Browsing); "
                f"cannot run search query {request!r}")
        import requests

        headers = {"User-Agent": self.user_agent} if self.user_agent else None
        try:
            response = requests.get(request, timeout=self.timeout, headers=headers)
        except requests.RequestException as exc:
            raise BackendUnavailable(str(exc)) from exc
        if response.status_code == 429:
            raise QuotaExceeded(f"rate limited fetching {request}")
        if response.status_code >= 400:
            raise BackendUnavailable(f"HTTP {response.status_code} for {request}")
        return response.text


# Results-page chrome that should never yield result links.
DEFAULT_EXCLUDE_SELECTORS = ("nav", "header", "footer", "[role=navigation]", ".ads")


@dataclass(frozen=True)
class LinkRules:
    """Which anchors on a results page count as result links.

    An anchor is kept when its href is an absolute http/https URL and neither
    the anchor nor any ancestor matches an exclude selector.
    """

    exclude: tuple[SelectorRule, ...] = field(
        default_factory=lambda: tuple(parse_selector(s) for s in DEFAULT_EXCLUDE_SELECTORS))

    @classmethod
    def from_selectors(cls, selectors: Iterable[str]) -> "LinkRules":
        return cls(exclude=tuple(parse_selector(s) for s in selectors))

    def excluded(self, anchor: Element) -> bool:
        for rule in self.exclude:
            if rule.matches(anchor) or any(rule.matches(a) for a in anchor.ancestors()):
                return True
        return False


def _is_absolute_http(url: str) -> bool:
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def _iter_result_anchors(root: Element, rules: LinkRules):
    for element in root.iter():
        if element.tag != "a":
            continue
        href = (element.attr("href") or "").strip()
        if not _is_absolute_http(href):
            continue
        if rules.excluded(element):
            continue
        yield href, element


def parse_result_links(document: str, rules: LinkRules | None = None) -> list[str]:
    """Extract result URLs from a results page, in page order, de-duplicated."""
    rules = rules or LinkRules()
    seen: set[str] = set()
    links: list[str] = []
    for href, _ in _iter_result_anchors(parse_html(document), rules):
        if href not in seen:
            seen.add(href)
            links.append(href)
    return links


def search_backend_fetch(query: str, limit: int = DEFAULT_LINK_LIMIT, *,
                         backend: Backend, rules: LinkRules | None = None) -> str:
    """Fetch a results page holding at most ``limit`` distinct result links.

    Backends may return pages with more links than requested (fixtures
    especially); the surplus is cut off at the anchor that would introduce
    link ``limit + 1``, mimicking an engine capped at ``limit`` results.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    document = backend.fetch(query, limit)
    rules = rules or LinkRules()
    seen: set[str] = set()
    for href, element in _iter_result_anchors(parse_html(document), rules):
        if href in seen:
            continue
        if len(seen) == limit:
            return document[:element.offset]
        seen.add(href)
    return document


@dataclass(frozen=True)
class UrlRecord:
    """A collected link plus its provenance."""

    url: str
    country: Country
    category: Category
    technique: Technique

    def __post_init__(self) -> None:
        if not _is_absolute_http(self.url):
            raise ValueError(f"url must be absolute http/https, got {self.url!r}")


def collect(countries: Sequence[Country], categories: Sequence[Category],
            technique: Technique, backend: Backend, *,
            limit: int = DEFAULT_LINK_LIMIT,
            rules: LinkRules | None = None) -> list[UrlRecord]:
    """Collect labeled URLs over the country x category cross product.

    Backend failures are logged per (country, category) pair and iteration
    continues. URLs are de-duplicated globally within the run. For Searching
    the results page is capped at ``limit`` links; directory pages are taken
    whole.
    """
    if not countries or not categories:
        raise EmptyInput("need at least one country and one category")
    records: list[UrlRecord] = []
    seen: set[str] = set()
    for country in countries:
        for category in categories:
            try:
                if technique is Technique.SEARCHING:
                    request = build_search_query(country, category)
                    document = search_backend_fetch(request, limit, backend=backend,
                                                    rules=rules)
                else:
                    request = build_directory_url(country, category)
                    document = backend.fetch(request, limit)
            except (EmptyCountryCode, UnknownRegion, BackendUnavailable,
                    QuotaExceeded) as exc:
                logger.warning("collect: %s / %s failed: %s",
                               country.name, category.key, exc)
                continue
            for url in parse_result_links(document, rules):
                if url in seen:
                    continue
                seen.add(url)
                records.append(UrlRecord(url, country, category, technique))
    return records


def append_url_list(path: str | Path, records: Iterable[UrlRecord]) -> int:
    """Append records to the URL list CSV, writing the header if new."""
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    written = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(URL_LIST_HEADER)
        for record in records:
            writer.writerow([record.url, record.country.name, record.country.continent,
                             record.category.id, record.technique.value])
            written += 1
    return written


def read_url_list(path: str | Path) -> list[UrlRecord]:
    """Read a URL list CSV back into records.

    The CSV does not carry cc_tlds, so the reconstructed countries have a
    blank ``cc_tld``; downstream stages never need it.
    """
    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != URL_LIST_HEADER:
            raise ValueError(f"{path}: expected header {URL_LIST_HEADER}, "
                             f"got {reader.fieldnames}")
        for row in reader:
            records.append(UrlRecord(
                url=row["url"],
                country=Country(row["country"], "", row["continent"]),
                category=category_by_id(int(row["category_id"])),
                technique=Technique(row["technique"]),
            ))
    return records
