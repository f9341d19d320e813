"""Byte-level comparison of two PDFs and object-level diagnosis of differences."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .latexbuild import CompileRecipe
from .manifest import BuildMode, ProjectManifest
from .pdfparse import PdfObject, PdfParse, Stream, parse_pdf_objects
from .pipeline import run_build

METADATA_DATE = "metadata-date"
TRAILER_ID = "trailer-id"
PTEX_BANNER = "ptex-banner"
CONTENT_STREAM = "content-stream"
STRUCTURE = "structure"
OTHER = "other"

_DATE_KEYS = ("CreationDate", "ModDate")
_BANNER_KEYS = ("PTEX.Fullbanner", "Producer")
_CHUNK = 1 << 16


@dataclass(frozen=True)
class ByteCompareResult:
    identical: bool
    first_diff_offset: int | None
    size_a: int
    size_b: int


def compare_byte_strings(a: bytes, b: bytes) -> ByteCompareResult:
    shorter = min(len(a), len(b))
    offset = None
    for start in range(0, shorter, _CHUNK):
        stop = min(start + _CHUNK, shorter)
        ca, cb = a[start:stop], b[start:stop]
        if ca != cb:
            offset = start + next(i for i, (x, y) in enumerate(zip(ca, cb)) if x != y)
            break
    if offset is None and len(a) != len(b):
        offset = shorter
    return ByteCompareResult(offset is None, offset, len(a), len(b))


def compare_bytes(a: str | Path, b: str | Path) -> ByteCompareResult:
    """Like ``cmp``: first differing byte offset (0-based), or identical."""
    return compare_byte_strings(Path(a).read_bytes(), Path(b).read_bytes())


@dataclass(frozen=True)
class Diff:
    object: int | None  # None for trailer dictionaries
    generation: int | None
    cls: str
    detail: str

    def to_json(self) -> dict:
        return {"object": self.object, "generation": self.generation, "class": self.cls, "detail": self.detail}


def _values_under(value, keys: tuple[str, ...]) -> dict[str, list]:
    """All values stored under *keys* anywhere inside nested dicts/arrays."""
    found: dict[str, list] = {k: [] for k in keys}
    stack = [value]
    while stack:
        v = stack.pop()
        if isinstance(v, Stream):
            stack.append(v.dict)
        elif isinstance(v, dict):
            for k, sub in v.items():
                if k in found:
                    found[k].append(sub)
                stack.append(sub)
        elif isinstance(v, list):
            stack.extend(v)
    return found


def _differs_under(a, b, keys: tuple[str, ...]) -> str | None:
    va, vb = _values_under(a, keys), _values_under(b, keys)
    for k in keys:
        if va[k] != vb[k]:
            return k
    return None


def _short(v, limit: int = 60) -> str:
    text = repr(v)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _classify_pair(a: PdfObject, b: PdfObject) -> tuple[str, str]:
    key = _differs_under(a.body, b.body, _DATE_KEYS)
    if key:
        return METADATA_DATE, f"/{key}: {_short(_values_under(a.body, (key,))[key])} vs {_short(_values_under(b.body, (key,))[key])}"
    if _is_xref_stream(a) or _is_xref_stream(b):
        if _differs_under(a.body.dict if isinstance(a.body, Stream) else a.body,
                          b.body.dict if isinstance(b.body, Stream) else b.body, ("ID",)):
            return TRAILER_ID, "xref stream /ID differs"
    key = _differs_under(a.body, b.body, _BANNER_KEYS)
    if key:
        return PTEX_BANNER, f"/{key} differs"
    if isinstance(a.body, Stream) and isinstance(b.body, Stream) and a.body.raw != b.body.raw:
        detail = f"stream bytes differ ({len(a.body.raw)} vs {len(b.body.raw)} bytes)"
        if a.body.dict.get("Type") == "ObjStm" or b.body.dict.get("Type") == "ObjStm":
            detail += "; object stream, contained objects not decoded"
        return CONTENT_STREAM, detail
    return OTHER, f"{_short(a.body)} vs {_short(b.body)}"


def _is_xref_stream(o: PdfObject) -> bool:
    return isinstance(o.body, Stream) and o.body.dict.get("Type") == "XRef"


def classify_diffs(a: PdfParse, b: PdfParse) -> list[Diff]:
    out: list[Diff] = []
    ka, kb = a.by_key(), b.by_key()
    for key in sorted(ka.keys() | kb.keys()):
        oa, ob = ka.get(key), kb.get(key)
        if oa is None or ob is None:
            side = "second" if oa is None else "first"
            out.append(Diff(key[0], key[1], STRUCTURE, f"object only in {side} file"))
            continue
        if oa.body == ob.body:
            continue
        cls, detail = _classify_pair(oa, ob)
        out.append(Diff(key[0], key[1], cls, detail))

    for i in range(max(len(a.trailers), len(b.trailers))):
        if i >= len(a.trailers) or i >= len(b.trailers):
            out.append(Diff(None, None, STRUCTURE, f"trailer {i} only in one file"))
            continue
        ta, tb = a.trailers[i], b.trailers[i]
        if ta == tb:
            continue
        if ta.get("ID") != tb.get("ID"):
            out.append(Diff(None, None, TRAILER_ID, f"trailer {i} /ID: {_short(ta.get('ID'))} vs {_short(tb.get('ID'))}"))
        elif _differs_under(ta, tb, _DATE_KEYS):
            out.append(Diff(None, None, METADATA_DATE, f"trailer {i} date differs"))
        else:
            out.append(Diff(None, None, OTHER, f"trailer {i} differs"))
    return out


@dataclass
class ReproReport:
    byte_result: ByteCompareResult
    diffs: list[Diff] = field(default_factory=list)

    @property
    def identical(self) -> bool:
        return self.byte_result.identical

    def to_json(self) -> dict:
        r = self.byte_result
        return {
            "identical": r.identical,
            "first_diff_offset": r.first_diff_offset,
            "sizes": [r.size_a, r.size_b],
            "diffs": [d.to_json() for d in self.diffs],
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    def summary(self) -> str:
        r = self.byte_result
        if r.identical:
            return f"identical ({r.size_a} bytes)"
        lines = [f"differ at byte {r.first_diff_offset} (sizes {r.size_a} vs {r.size_b})"]
        for d in self.diffs:
            where = f"object {d.object} {d.generation}" if d.object is not None else "trailer"
            lines.append(f"  [{d.cls}] {where}: {d.detail}")
        return "\n".join(lines)


def diagnose(a_bytes: bytes, b_bytes: bytes) -> ReproReport:
    """Compare two PDF byte strings and classify any differences."""
    result = compare_byte_strings(a_bytes, b_bytes)
    if result.identical:
        return ReproReport(result)
    diffs = classify_diffs(parse_pdf_objects(a_bytes), parse_pdf_objects(b_bytes))
    if not diffs:
        diffs = [Diff(None, None, OTHER, f"difference outside any object near byte {result.first_diff_offset}")]
    return ReproReport(result, diffs)


def verify_reproducibility(m: ProjectManifest, mode: BuildMode, backend, *, recipe: CompileRecipe | None = None) -> ReproReport:
    """Build, keep a copy of the PDF, forget the build state, build again, compare.

    Clearing the state store forces results and LaTeX to run again, the
    content-hash counterpart of touching the results program.
    """
    recipe = recipe or CompileRecipe.for_manifest(m)
    # a non-default recipe is not part of the build state, so rebuild with it
    run_build(m, mode, backend, recipe=recipe, force=not recipe.reproducible)
    pdf = m.artifacts_path / f"{m.stem}.pdf"
    previous = m.artifacts_path / f"{m.stem}-previous.pdf"
    shutil.copyfile(pdf, previous)
    m.state_path.unlink(missing_ok=True)
    run_build(m, mode, backend, recipe=recipe)
    report = diagnose(pdf.read_bytes(), previous.read_bytes())
    report.write(m.artifacts_path / "repro-report.json")
    return report
