"""Reading and writing OFF, OBJ, PLY and the exact ``xmesh`` format.

Binary64 formats are lifted to exact rationals on read; writing them
requires binary64-representable coordinates unless ``lossy`` is set.
``xmesh`` stores rationals as ``num/den`` and is always exact:

    xmesh <V> <T>
    <num/den> <num/den> <num/den>      (V lines)
    <i> <j> <k>                        (T lines, 0-based)

Annotated files mark triangles near close features: per-face colors in OFF
and PLY (plus a ``close`` flag property in PLY), ``usemtl close`` groups in
OBJ and a trailing ``# close`` line in xmesh.
"""
from __future__ import annotations

import logging
import os
import struct

from gmpy2 import mpq

from .errors import MeshsepError, ParseError, PrecisionLoss, UnsupportedFormat
from .mesh import Mesh, build_mesh

log = logging.getLogger(__name__)

FORMATS = ("off", "obj", "ply", "xmesh")
BINARY64 = ("off", "obj", "ply")

CLOSE_RGB = (255, 0, 0)
PLAIN_RGB = (200, 200, 200)


def guess_format(path, fmt=None):
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unsupported mesh format {fmt!r} (expected one of {', '.join(FORMATS)})")
    return fmt


# ---------------------------------------------------------------------------
# tokenizing helpers

class _Lines:
    """Non-empty, comment-stripped lines with 1-based line numbers."""

    def __init__(self, text, comment="#"):
        self.items = []
        self.comments = []
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw
            if comment and comment in line:
                k = line.index(comment)
                self.comments.append((no, line[k + 1:].strip()))
                line = line[:k]
            if line.strip():
                self.items.append((no, line))
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            raise ParseError(f"unexpected end of file while reading {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def rest(self):
        out = self.items[self.pos:]
        self.pos = len(self.items)
        return out


def _tokens(line):
    """(column, token) pairs, columns 1-based."""
    out = []
    i, n = 0, len(line)
    while i < n:
        while i < n and line[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and not line[j].isspace():
            j += 1
        out.append((i + 1, line[i:j]))
        i = j
    return out


def _float(tok, no, col):
    try:
        return mpq(float(tok))
    except (ValueError, OverflowError):
        raise ParseError(f"bad coordinate {tok!r}", no, col) from None


def _rational(tok, no, col):
    try:
        if "/" in tok:
            num, den = tok.split("/")
            q = mpq(int(num), int(den))
        else:
            q = mpq(tok)
        return q
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad rational {tok!r}", no, col) from None


def _int(tok, no, col):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad integer {tok!r}", no, col) from None


def _fan(idx):
    return [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]


def _check_indices(tris, n, where):
    for t, (a, b, c) in enumerate(tris):
        for v in (a, b, c):
            if not 0 <= v < n:
                no, col = where[t]
                raise ParseError(f"vertex index {v} out of range (have {n} vertices)", no, col)


# ---------------------------------------------------------------------------
# readers

def _read_off(text):
    lines = _Lines(text)
    no, line = lines.next("header")
    toks = _tokens(line)
    head = toks[0][1]
    if not head.endswith("OFF"):
        raise ParseError("missing OFF header", no, 1)
    counts = toks[1:]
    if not counts:
        no, line = lines.next("counts")
        counts = _tokens(line)
    if len(counts) < 2:
        raise ParseError("expected vertex and face counts", no, 1)
    nv, nf = _int(counts[0][1], no, counts[0][0]), _int(counts[1][1], no, counts[1][0])
    pts = []
    for _ in range(nv):
        no, line = lines.next("vertex")
        tk = _tokens(line)
        if len(tk) < 3:
            raise ParseError("vertex needs three coordinates", no, 1)
        pts.append(tuple(_float(t, no, c) for c, t in tk[:3]))
    tris, flags, where = [], [], []
    for _ in range(nf):
        no, line = lines.next("face")
        tk = _tokens(line)
        k = _int(tk[0][1], no, tk[0][0])
        if k < 3 or len(tk) < 1 + k:
            raise ParseError(f"face needs {max(k, 3)} indices", no, 1)
        idx = [_int(t, no, c) for c, t in tk[1:1 + k]]
        color = [t for _, t in tk[1 + k:]]
        close = len(color) >= 3 and _is_close_color(color)
        for f in _fan(idx):
            tris.append(f)
            flags.append(close)
            where.append((no, tk[1][0]))
    _check_indices(tris, len(pts), where)
    return pts, tris, flags


def _is_close_color(vals):
    try:
        rgb = [float(x) for x in vals[:3]]
    except ValueError:
        return False
    if max(rgb) <= 1.0:
        rgb = [round(255 * x) for x in rgb]
    return tuple(int(x) for x in rgb) == CLOSE_RGB


def _read_obj(text):
    lines = _Lines(text)
    pts, tris, flags, where = [], [], [], []
    close = False
    for no, line in lines.rest():
        tk = _tokens(line)
        key = tk[0][1]
        if key == "v":
            if len(tk) < 4:
                raise ParseError("vertex needs three coordinates", no, 1)
            pts.append(tuple(_float(t, no, c) for c, t in tk[1:4]))
        elif key == "f":
            idx = []
            for c, t in tk[1:]:
                i = _int(t.split("/")[0], no, c)
                if i < 0:
                    i = len(pts) + i
                else:
                    i -= 1
                idx.append(i)
            if len(idx) < 3:
                raise ParseError("face needs three indices", no, 1)
            for f in _fan(idx):
                tris.append(f)
                flags.append(close)
                where.append((no, tk[1][0]))
        elif key == "usemtl":
            close = len(tk) > 1 and tk[1][1] == "close"
    _check_indices(tris, len(pts), where)
    return pts, tris, flags


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing PLY header", 1, 1)
    nl = data.find(b"\n", end)
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:] if nl >= 0 else b""
    fmt = None
    elements = []
    for no, line in enumerate(header, 1):
        tk = line.split()
        if not tk or tk[0] in ("ply", "comment", "obj_info"):
            continue
        if tk[0] == "format":
            fmt = tk[1]
        elif tk[0] == "element":
            elements.append((tk[1], int(tk[2]), []))
        elif tk[0] == "property":
            if not elements:
                raise ParseError("property before element", no, 1)
            if tk[1] == "list":
                if tk[2] not in _PLY_TYPES or tk[3] not in _PLY_TYPES:
                    raise ParseError(f"unknown PLY type in {line!r}", no, 1)
                elements[-1][2].append((tk[4], "list", tk[2], tk[3]))
            else:
                if tk[1] not in _PLY_TYPES:
                    raise ParseError(f"unknown PLY type {tk[1]!r}", no, 1)
                elements[-1][2].append((tk[2], "scalar", tk[1], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedFormat(f"PLY encoding {fmt!r} is not supported")
    hdr_lines = len(header) + 1
    records = {}
    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for name, count, props in elements:
            recs = []
            for _ in range(count):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise ParseError(f"unexpected end of file in element {name}")
                no = hdr_lines + pos + 1
                tk = _tokens(lines[pos])
                pos += 1
                recs.append(_ply_ascii_record(tk, props, no))
            records[name] = recs
    else:
        off = 0
        for name, count, props in elements:
            recs = []
            for _ in range(count):
                rec = {}
                for pname, kind, t1, t2 in props:
                    try:
                        if kind == "scalar":
                            code = "<" + _PLY_TYPES[t1]
                            (rec[pname],) = struct.unpack_from(code, body, off)
                            off += struct.calcsize(code)
                        else:
                            (n,) = struct.unpack_from("<" + _PLY_TYPES[t1], body, off)
                            off += struct.calcsize(_PLY_TYPES[t1])
                            code = "<%d%s" % (n, _PLY_TYPES[t2])
                            rec[pname] = list(struct.unpack_from(code, body, off))
                            off += struct.calcsize(code)
                    except struct.error:
                        raise ParseError(f"truncated binary data in element {name}") from None
                recs.append(rec)
            records[name] = recs
    verts = records.get("vertex", [])
    pts = []
    for i, r in enumerate(verts):
        try:
            pts.append(tuple(mpq(float(r[k])) for k in ("x", "y", "z")))
        except KeyError:
            raise ParseError(f"vertex {i} lacks x/y/z") from None
    tris, flags, where = [], [], []
    for i, r in enumerate(records.get("face", [])):
        idx = r.get("vertex_indices", r.get("vertex_index"))
        if idx is None or len(idx) < 3:
            raise ParseError(f"face {i} has no usable vertex list")
        close = bool(r.get("close", 0))
        for f in _fan([int(x) for x in idx]):
            tris.append(f)
            flags.append(close)
            where.append((i, None))
    for t, (a, b, c) in enumerate(tris):
        for v in (a, b, c):
            if not 0 <= v < len(pts):
                raise ParseError(f"face {where[t][0]}: vertex index {v} out of range")
    return pts, tris, flags


def _ply_ascii_record(tk, props, no):
    rec = {}
    k = 0
    for pname, kind, t1, t2 in props:
        if k >= len(tk):
            raise ParseError("too few values", no, None)
        if kind == "scalar":
            col, tok = tk[k]
            rec[pname] = float(tok) if t1 in ("float", "float32", "double", "float64") \
                else _int(tok, no, col)
            k += 1
        else:
            col, tok = tk[k]
            n = _int(tok, no, col)
            vals = tk[k + 1:k + 1 + n]
            if len(vals) < n:
                raise ParseError("list shorter than its count", no, col)
            rec[pname] = [_int(t, no, c) for c, t in vals]
            k += 1 + n
    return rec


def _read_xmesh(text):
    lines = _Lines(text)
    no, line = lines.next("header")
    tk = _tokens(line)
    if len(tk) != 3 or tk[0][1] != "xmesh":
        raise ParseError("expected 'xmesh <vertices> <triangles>'", no, 1)
    nv, nt = _int(tk[1][1], no, tk[1][0]), _int(tk[2][1], no, tk[2][0])
    pts = []
    for _ in range(nv):
        no, line = lines.next("vertex")
        tk = _tokens(line)
        if len(tk) != 3:
            raise ParseError("vertex needs exactly three rationals", no, 1)
        pts.append(tuple(_rational(t, no, c) for c, t in tk))
    tris, where = [], []
    for _ in range(nt):
        no, line = lines.next("triangle")
        tk = _tokens(line)
        if len(tk) != 3:
            raise ParseError("triangle needs exactly three indices", no, 1)
        tris.append(tuple(_int(t, no, c) for c, t in tk))
        where.append((no, tk[0][0]))
    extra = lines.rest()
    if extra:
        raise ParseError("trailing data after triangles", extra[0][0], 1)
    _check_indices(tris, len(pts), where)
    flags = [False] * len(tris)
    for _, c in lines.comments:
        parts = c.split()
        if parts and parts[0] == "close":
            for t in parts[1:]:
                flags[int(t)] = True
    return pts, tris, flags


def read_mesh_data(path, fmt=None):
    """(points, triangles, close flags) as stored in the file."""
    fmt = guess_format(path, fmt)
    if fmt == "ply":
        with open(path, "rb") as fh:
            return _read_ply(fh.read())
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return {"off": _read_off, "obj": _read_obj, "xmesh": _read_xmesh}[fmt](text)


def read_mesh(path, fmt=None, check=True) -> Mesh:
    pts, tris, _ = read_mesh_data(path, fmt)
    try:
        return build_mesh(pts, tris, check=check)
    except MeshsepError as exc:
        raise ParseError(str(exc)) from exc


def read_annotated(path, fmt=None):
    """(mesh, flagged triangle ids) for files written with close-feature flags."""
    pts, tris, flags = read_mesh_data(path, fmt)
    m = build_mesh(pts, tris)
    tids = sorted(m.tris)
    return m, {t for t, f in zip(tids, flags) if f}


# ---------------------------------------------------------------------------
# writers

def _fmt_float(c, lossy):
    f = float(c)
    if not lossy and mpq(f) != c:
        raise PrecisionLoss(f"coordinate {c} is not representable in binary64")
    return repr(f)


def _fmt_rational(c):
    return f"{c.numerator}/{c.denominator}"


def write_mesh(m: Mesh, path, fmt=None, lossy=False, flags=None, binary=False):
    """Write ``m``; ``flags`` is an optional set of triangle ids to mark."""
    fmt = guess_format(path, fmt)
    pts, tris = m.compact(keep_unused=True)
    order = sorted(m.tris)
    marks = None if flags is None else [t in flags for t in order]
    if fmt == "ply":
        data = _ply_bytes(pts, tris, marks, lossy, binary)
        with open(path, "wb") as fh:
            fh.write(data)
        return
    if fmt == "xmesh":
        text = _xmesh_text(pts, tris, marks)
    elif fmt == "off":
        text = _off_text(pts, tris, marks, lossy)
    else:
        text = _obj_text(pts, tris, marks, lossy)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _xmesh_text(pts, tris, marks):
    out = [f"xmesh {len(pts)} {len(tris)}"]
    out += [" ".join(_fmt_rational(c) for c in p) for p in pts]
    out += [f"{a} {b} {c}" for a, b, c in tris]
    if marks is not None:
        out.append("# close " + " ".join(str(i) for i, f in enumerate(marks) if f))
    return "\n".join(out) + "\n"


def _off_text(pts, tris, marks, lossy):
    out = ["OFF", f"{len(pts)} {len(tris)} 0"]
    out += [" ".join(_fmt_float(c, lossy) for c in p) for p in pts]
    for i, (a, b, c) in enumerate(tris):
        line = f"3 {a} {b} {c}"
        if marks is not None:
            rgb = CLOSE_RGB if marks[i] else PLAIN_RGB
            line += " " + " ".join(str(x) for x in rgb)
        out.append(line)
    return "\n".join(out) + "\n"


def _obj_text(pts, tris, marks, lossy):
    out = ["v " + " ".join(_fmt_float(c, lossy) for c in p) for p in pts]
    current = None
    for i, (a, b, c) in enumerate(tris):
        if marks is not None:
            want = "close" if marks[i] else "default"
            if want != current:
                out.append(f"usemtl {want}")
                current = want
        out.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(out) + "\n"


def _ply_bytes(pts, tris, marks, lossy, binary):
    fl = [[float(_fmt_float(c, lossy)) for c in p] for p in pts]
    head = ["ply", "format " + ("binary_little_endian" if binary else "ascii") + " 1.0",
            f"element vertex {len(pts)}", "property double x", "property double y",
            "property double z", f"element face {len(tris)}",
            "property list uchar int vertex_indices"]
    if marks is not None:
        head += ["property uchar red", "property uchar green", "property uchar blue",
                 "property uchar close"]
    head.append("end_header")
    out = ("\n".join(head) + "\n").encode("ascii")
    if binary:
        chunks = [struct.pack("<3d", *p) for p in fl]
        for i, t in enumerate(tris):
            chunks.append(struct.pack("<B3i", 3, *t))
            if marks is not None:
                rgb = CLOSE_RGB if marks[i] else PLAIN_RGB
                chunks.append(struct.pack("<4B", *rgb, int(marks[i])))
        return out + b"".join(chunks)
    lines = [" ".join(repr(c) for c in p) for p in fl]
    for i, (a, b, c) in enumerate(tris):
        line = f"3 {a} {b} {c}"
        if marks is not None:
            rgb = CLOSE_RGB if marks[i] else PLAIN_RGB
            line += " " + " ".join(str(x) for x in rgb) + f" {int(marks[i])}"
        lines.append(line)
    return out + ("\n".join(lines) + "\n").encode("ascii")


# ---------------------------------------------------------------------------
# annotation

def annotate_close_features(m: Mesh, pairs):
    """Triangle ids containing a feature of some close pair."""
    flagged = set()
    for fp in pairs:
        for feat in (fp.A, fp.B):
            ids = feat.ids
            if len(ids) == 1:
                flagged |= m.vtris.get(ids[0], set())
            elif len(ids) == 2:
                flagged |= m.edge_triangles(*ids)
            else:
                flagged |= m.vtris.get(ids[0], set()) & m.vtris.get(ids[1], set()) \
                    & m.vtris.get(ids[2], set())
    return flagged
