"""Countries, categories and acquisition techniques shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

CONTINENTS = ("Africa", "Americas", "Asia", "Europe", "Oceania")


class Technique(enum.Enum):
    """How a URL was acquired: directory crawling or search-engine queries."""

    BROWSING = "Browsing"
    SEARCHING = "Searching"

    @property
    def letter(self) -> str:
        return self.value[0]

    @classmethod
    def from_letter(cls, letter: str) -> "Technique":
        for t in cls:
            if t.letter == letter:
                return t
        raise ValueError(f"unknown technique letter {letter!r}")


@dataclass(frozen=True)
class Category:
    """One of the six fixed page topics, with its search keywords and URL slug."""

    id: int
    key: str
    title: str
    slug: str
    keywords: tuple[str, ...]


CATEGORIES: tuple[Category, ...] = (
    Category(1, "ArtsEntertainment", "Arts and Entertainment", "Arts-and-Entertainment",
             ("arts", "entertainment", "dance", "museums", "theatre", "literature",
              "artists", "galleries")),
    Category(2, "BusinessEconomy", "Business and Economy", "Business-and-Economy",
             ("business", "economy", "marketing", "computers", "internet", "construction",
              "financial", "industry", "shopping", "restaurant")),
    Category(3, "Education", "Education", "Education",
             ("education", "academy", "university", "college", "school")),
    Category(4, "Government", "Government", "Government",
             ("government", "military", "presidency")),
    Category(5, "NewsMedia", "News and Media", "News-and-Media",
             ("news", "media", "magazine", "radio", "television", "newspaper")),
    Category(6, "ScienceEnvironment", "Science and Environment", "Science-and-Environment",
             ("science", "environment", "archaeology")),
)

_BY_ID = {c.id: c for c in CATEGORIES}
_BY_KEY = {c.key: c for c in CATEGORIES}


def category_by_id(category_id: int) -> Category:
    try:
        return _BY_ID[int(category_id)]
    except (KeyError, ValueError):
        raise KeyError(f"no category with id {category_id!r}") from None


def category_by_key(key: str) -> Category:
    try:
        return _BY_KEY[key]
    except KeyError:
        raise KeyError(f"no category named {key!r}") from None


@dataclass(frozen=True)
class Country:
    """A country as configured in the countries file.

    ``cc_tld`` is the country-code top-level domain without the leading dot
    (e.g. ``"es"``). Instances loaded through :func:`load_countries` are
    validated; hand-built ones may carry a blank ``cc_tld``, which the query
    builder rejects at use time.
    """

    name: str
    cc_tld: str
    continent: str

    @property
    def compact_name(self) -> str:
        """Country name with spaces removed, as used in webshot names."""
        return self.name.replace(" ", "")


class CountriesFileError(ValueError):
    """Raised when the countries file has a malformed or invalid record."""


def _validate_country(country: Country, where: str) -> None:
    if not country.name.strip():
        raise CountriesFileError(f"{where}: empty country name")
    code = country.cc_tld
    if not (2 <= len(code) <= 3) or not code.isalpha() or code != code.lower():
        raise CountriesFileError(
            f"{where}: cc_tld {code!r} must be 2-3 lowercase letters")
    if country.continent not in CONTINENTS:
        raise CountriesFileError(
            f"{where}: continent {country.continent!r} not one of {CONTINENTS}")


def load_countries(path: str | Path) -> list[Country]:
    """Read the tab-separated countries file: ``name<TAB>cc_tld<TAB>continent``.

    Blank lines and lines starting with ``#`` are skipped.
    """
    countries = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CountriesFileError(
                f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        country = Country(name=parts[0].strip(), cc_tld=parts[1].strip(),
                          continent=parts[2].strip())
        _validate_country(country, f"{path}:{lineno}")
        if country.name in seen:
            raise CountriesFileError(f"{path}:{lineno}: duplicate country {country.name!r}")
        seen.add(country.name)
        countries.append(country)
    return countries
