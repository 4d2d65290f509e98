"""Automaton file formats.

Native format (JSON, ``"format": "lyapta-automaton"``, version 1):

``fingerprint``
    Partition fingerprint the automaton was built against.
``clocks`` / ``alphabet``
    Clock names and transition symbols.
``initial``
    Initial location ids, sorted.
``locations``
    One object per location: ``id``, ``invariant`` (list of atoms),
    ``kind`` (``cell``/``core``/``exterior``/``slice``), ``band`` (cells
    only) and ``volume`` (grid-mask volume of the region, when known).
``transitions``
    ``source``, ``target``, ``symbol``, ``guard`` (list of atoms) and
    ``resets`` (sorted clock names).

An atom is ``[clock, op, value]`` with ``op`` one of ``<= < == > >=`` and
``value`` an exact rational written as ``"p/q"`` or ``"p"``.

The XML export follows the UPPAAL ``nta`` layout.  Constants are
multiplied by the LCM of their denominators so they become integers;
the root carries the time unit as a comment and in the declaration
(``// scale: 1 model time unit = S system time units``).
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from fractions import Fraction

from .automaton import Atom, ClockConstraint, TimedAutomaton, Transition, integer_scale

FORMAT = "lyapta-automaton"
VERSION = 1


class FormatError(ValueError):
    pass


def _atoms(c: ClockConstraint) -> list:
    return [[a.clock, a.op, str(a.value)] for a in c.atoms]


def _constraint(atoms) -> ClockConstraint:
    try:
        return ClockConstraint(tuple(Atom(c, op, Fraction(v)) for c, op, v in atoms))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad constraint {atoms!r}: {exc}") from None


def to_native(ta: TimedAutomaton) -> dict:
    locs = []
    for l in ta.locations:
        d = {"id": l, "invariant": _atoms(ta.invariants[l])}
        d.update(ta.info.get(l, {}))
        locs.append(d)
    return {
        "format": FORMAT,
        "version": VERSION,
        "fingerprint": ta.fingerprint,
        "clocks": list(ta.clocks),
        "alphabet": list(ta.alphabet),
        "initial": sorted(ta.initial),
        "locations": locs,
        "transitions": [{"source": t.source, "target": t.target, "symbol": t.symbol,
                         "guard": _atoms(t.guard), "resets": sorted(t.resets)} for t in ta.transitions],
    }


def from_native(doc: dict) -> TimedAutomaton:
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise FormatError(f"not a {FORMAT} v{VERSION} document")
    try:
        locs = [d["id"] for d in doc["locations"]]
        inv = {d["id"]: _constraint(d["invariant"]) for d in doc["locations"]}
        info = {d["id"]: {k: v for k, v in d.items() if k not in ("id", "invariant")} for d in doc["locations"]}
        trans = tuple(Transition(t["source"], _constraint(t["guard"]), t["symbol"], frozenset(t["resets"]),
                                 t["target"]) for t in doc["transitions"])
        return TimedAutomaton(tuple(locs), frozenset(doc["initial"]), tuple(doc["clocks"]),
                              tuple(doc["alphabet"]), inv, trans, info, doc.get("fingerprint", ""))
    except KeyError as exc:
        raise FormatError(f"missing field {exc}") from None


def dumps_native(ta: TimedAutomaton) -> str:
    return json.dumps(to_native(ta), indent=1, sort_keys=True) + "\n"


def loads_native(text: str) -> TimedAutomaton:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    return from_native(doc)


def save(ta: TimedAutomaton, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_native(ta))


def load(path) -> TimedAutomaton:
    with open(path) as fh:
        return loads_native(fh.read())


# --------------------------------------------------------------------------
# XML
# --------------------------------------------------------------------------

START = "_start"
_IDENT = re.compile(r"[^A-Za-z0-9_]")


def xml_name(loc: str) -> str:
    """Location id as a model-checker identifier."""
    s = _IDENT.sub("__", loc)
    return s if s[:1].isalpha() or s[:1] == "_" else "L" + s


def _xml_constraint(c: ClockConstraint, factor: Fraction) -> str:
    parts = []
    for a in c.atoms:
        v = a.value * factor
        if v.denominator != 1:
            raise FormatError(f"constant {a.value} is not an integer after scaling")
        lhs = a.clock if not a.other else f"{a.clock} - {a.other}"
        parts.append(f"{lhs} {a.op} {v.numerator}")
    return " && ".join(parts)


def to_xml(ta: TimedAutomaton, template: str = "Abstraction") -> str:
    """UPPAAL-style ``nta`` document with integer constants."""
    scale = integer_scale(ta)
    factor = 1 / scale
    names = {l: xml_name(l) for l in ta.locations}
    if len(set(names.values())) != len(names):
        raise FormatError("location names collide after sanitising")
    root = ET.Element("nta")
    root.append(ET.Comment(f" lyapta-scale {scale} fingerprint {ta.fingerprint} "))
    decl = [f"// scale: 1 model time unit = {scale} system time units",
            f"// fingerprint: {ta.fingerprint}"]
    if ta.clocks:
        decl.append("clock " + ", ".join(ta.clocks) + ";")
    ET.SubElement(root, "declaration").text = "\n".join(decl) + "\n"
    tpl = ET.SubElement(root, "template")
    ET.SubElement(tpl, "name").text = template
    ids = {}
    multi = len(ta.initial) != 1
    if multi:
        ids[START] = "id0"
        loc = ET.SubElement(tpl, "location", id="id0")
        ET.SubElement(loc, "name").text = START
        ET.SubElement(loc, "committed")
    for l in ta.locations:
        ids[l] = f"id{len(ids)}"
        loc = ET.SubElement(tpl, "location", id=ids[l])
        ET.SubElement(loc, "name").text = names[l]
        if ta.invariants[l]:
            ET.SubElement(loc, "label", kind="invariant").text = _xml_constraint(ta.invariants[l], factor)
    ET.SubElement(tpl, "init", ref=ids[START] if multi else ids[next(iter(ta.initial))])
    if multi:
        for l in sorted(ta.initial):
            tr = ET.SubElement(tpl, "transition")
            ET.SubElement(tr, "source", ref=ids[START])
            ET.SubElement(tr, "target", ref=ids[l])
    for t in ta.transitions:
        tr = ET.SubElement(tpl, "transition")
        ET.SubElement(tr, "source", ref=ids[t.source])
        ET.SubElement(tr, "target", ref=ids[t.target])
        if t.guard:
            ET.SubElement(tr, "label", kind="guard").text = _xml_constraint(t.guard, factor)
        if t.resets:
            ET.SubElement(tr, "label", kind="assignment").text = ", ".join(f"{c} = 0" for c in sorted(t.resets))
        ET.SubElement(tr, "label", kind="comments").text = t.symbol
    ET.SubElement(root, "system").text = f"Process = {template}();\nsystem Process;\n"
    ET.indent(root)
    return "<?xml version='1.0' encoding='utf-8'?>\n" + ET.tostring(root, encoding="unicode") + "\n"


_ATOM = re.compile(r"^\s*([A-Za-z_]\w*)\s*(<=|>=|==|<|>)\s*(\d+)\s*$")


def check_xml(text: str) -> list[str]:
    """Structural problems in an exported document (empty when conformant)."""
    errs = []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        return [f"not well-formed: {exc}"]
    if root.tag != "nta":
        errs.append("root element must be nta")
    decl = root.find("declaration")
    if decl is None or "scale:" not in (decl.text or ""):
        errs.append("missing declaration with scale annotation")
    if root.find("system") is None:
        errs.append("missing system element")
    tpls = root.findall("template")
    if len(tpls) != 1:
        errs.append("expected exactly one template")
        return errs
    tpl = tpls[0]
    ids = [l.get("id") for l in tpl.findall("location")]
    if len(set(ids)) != len(ids):
        errs.append("duplicate location ids")
    init = tpl.find("init")
    if init is None or init.get("ref") not in ids:
        errs.append("init must reference a location")
    labels = [(l.get("kind"), l.text or "") for l in tpl.iter("label")]
    for kind, txt in labels:
        if kind in ("guard", "invariant"):
            for part in txt.split("&&"):
                if not _ATOM.match(part):
                    errs.append(f"{kind} '{part.strip()}' is not clock-op-integer")
    for tr in tpl.findall("transition"):
        for end in ("source", "target"):
            e = tr.find(end)
            if e is None or e.get("ref") not in ids:
                errs.append(f"transition {end} must reference a location")
    return errs


def from_xml(text: str) -> tuple[TimedAutomaton, Fraction]:
    """Read an exported document back; returns the integer-constant
    automaton and its time scale."""
    errs = check_xml(text)
    if errs:
        raise FormatError("; ".join(errs))
    root = ET.fromstring(text)
    m = re.search(r"scale: 1 model time unit = (\S+)", root.find("declaration").text)
    scale = Fraction(m.group(1))
    cm = re.search(r"clock ([^;]*);", root.find("declaration").text)
    clocks = tuple(c.strip() for c in cm.group(1).split(",")) if cm else ()

    def parse(txt):
        atoms = []
        for part in txt.split("&&"):
            c, op, v = _ATOM.match(part).groups()
            atoms.append(Atom(c, op, Fraction(int(v))))
        return ClockConstraint(tuple(atoms))

    tpl = root.find("template")
    name_of, inv = {}, {}
    for loc in tpl.findall("location"):
        nm = loc.find("name").text
        name_of[loc.get("id")] = nm
        lab = loc.find("label[@kind='invariant']")
        inv[nm] = parse(lab.text) if lab is not None else ClockConstraint.true()
    init = name_of[tpl.find("init").get("ref")]
    initial = {init}
    trans, alphabet = [], set()
    for tr in tpl.findall("transition"):
        s, t = name_of[tr.find("source").get("ref")], name_of[tr.find("target").get("ref")]
        if s == START:
            initial.add(t)
            continue
        g = tr.find("label[@kind='guard']")
        a = tr.find("label[@kind='assignment']")
        sym = tr.find("label[@kind='comments']").text
        alphabet.add(sym)
        resets = frozenset(p.split("=")[0].strip() for p in a.text.split(",")) if a is not None else frozenset()
        trans.append(Transition(s, parse(g.text) if g is not None else ClockConstraint.true(), sym, resets, t))
    initial.discard(START)
    locs = tuple(n for n in name_of.values() if n != START)
    inv.pop(START, None)
    return TimedAutomaton(locs, frozenset(initial), clocks, tuple(sorted(alphabet)), inv, tuple(trans)), scale
