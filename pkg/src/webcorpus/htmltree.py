"""Lenient HTML element-tree parsing built on the stdlib tokenizer.

Real-world pages are frequently malformed, so the builder recovers instead of
failing: unknown end tags are dropped, unclosed elements are closed when an
ancestor closes, and ``<script>``/``<style>`` bodies are treated as opaque
text (tags inside them are never materialized). Text nodes are not kept; the
pipeline only needs the element structure and attributes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterator

# Elements that never take content and therefore never go on the open stack.
VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

ROOT_TAG = "#root"


@dataclass
class Element:
    tag: str
    attrs: dict[str, str]
    parent: "Element | None" = None
    children: list["Element"] = field(default_factory=list)
    offset: int = 0  # position of the start tag in the source text

    def attr(self, name: str, default: str | None = None) -> str | None:
        return self.attrs.get(name, default)

    def has_attr(self, name: str) -> bool:
        return name in self.attrs

    def classes(self) -> tuple[str, ...]:
        return tuple(self.attrs.get("class", "").split())

    def ancestors(self) -> Iterator["Element"]:
        node = self.parent
        while node is not None and node.tag != ROOT_TAG:
            yield node
            node = node.parent

    def iter(self) -> Iterator["Element"]:
        """Depth-first iteration in document order, excluding the root."""
        for child in self.children:
            yield child
            yield from child.iter()


class _TreeBuilder(HTMLParser):
    def __init__(self, text: str) -> None:
        super().__init__(convert_charrefs=True)
        self.root = Element(ROOT_TAG, {})
        self._stack = [self.root]
        # getpos() reports (line, column); precompute line starts to turn
        # that into a flat offset.
        self._line_starts = [0]
        pos = 0
        for line in text.split("\n"):
            pos += len(line) + 1
            self._line_starts.append(pos)

    def _offset(self) -> int:
        line, col = self.getpos()
        return self._line_starts[line - 1] + col

    def _open(self, tag: str, attrs: list[tuple[str, str | None]], push: bool) -> None:
        attr_map: dict[str, str] = {}
        for name, value in attrs:
            attr_map.setdefault(name, value if value is not None else "")
        element = Element(tag, attr_map, parent=self._stack[-1], offset=self._offset())
        self._stack[-1].children.append(element)
        if push:
            self._stack.append(element)

    def handle_starttag(self, tag, attrs):
        self._open(tag, attrs, push=tag not in VOID_ELEMENTS)

    def handle_startendtag(self, tag, attrs):
        self._open(tag, attrs, push=False)

    def handle_endtag(self, tag):
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # stray end tag: ignore


def parse_html(text: str) -> Element:
    """Parse possibly-malformed HTML into an element tree; never raises."""
    builder = _TreeBuilder(text)
    try:
        builder.feed(text)
        builder.close()
    except Exception:  # pragma: no cover - tokenizer recovery of last resort
        pass
    return builder.root


def count_tags(root: Element, tag: str) -> int:
    return sum(1 for el in root.iter() if el.tag == tag)


@dataclass(frozen=True)
class SelectorRule:
    """A minimal CSS-like selector: ``tag``, ``.class``, ``#id``, ``[attr=value]``.

    A compound selector such as ``nav.menu[role=navigation]`` requires all of
    its parts to match a single element.
    """

    tag: str | None = None
    class_: str | None = None
    id_: str | None = None
    attr: tuple[str, str | None] | None = None

    def matches(self, element: Element) -> bool:
        if self.tag is not None and element.tag != self.tag:
            return False
        if self.class_ is not None and self.class_ not in element.classes():
            return False
        if self.id_ is not None and element.attr("id") != self.id_:
            return False
        if self.attr is not None:
            name, value = self.attr
            if not element.has_attr(name):
                return False
            if value is not None and element.attr(name) != value:
                return False
        return True


def parse_selector(text: str) -> SelectorRule:
    """Compile a selector string into a :class:`SelectorRule`."""
    import re

    pattern = re.compile(
        r"^(?P<tag>[a-zA-Z][\w-]*)?"
        r"(?:\.(?P<cls>[\w-]+))?"
        r"(?:#(?P<id>[\w-]+))?"
        r"(?:\[(?P<attr>[\w-]+)(?:=(?P<val>[^\]]*))?\])?$"
    )
    m = pattern.match(text.strip())
    if not m or not any(m.groupdict().values()):
        raise ValueError(f"unsupported selector {text!r}")
    attr = None
    if m.group("attr"):
        attr = (m.group("attr").lower(), m.group("val"))
    return SelectorRule(
        tag=m.group("tag").lower() if m.group("tag") else None,
        class_=m.group("cls"),
        id_=m.group("id"),
        attr=attr,
    )
