"""Section-tagged little-endian binary container.

Layout: ``magic`` bytes, ``u32`` section count, then per section
``u16`` name length, UTF-8 name, ``u8`` kind and a payload.  Kind 0 is a
float64 array (``u32`` ndim, ``u64`` dims, row-major values); kind 1 is a
JSON document (``u64`` byte length, UTF-8 text).  The PCA model (``ROMPCA1``)
and network checkpoints (``ROMNN1``) both use this container.
"""
import json
import struct

import numpy as np

from .errors import EmptyInputError, RomIOError

KIND_ARRAY = 0
KIND_JSON = 1


def write_sections(path, magic, sections):
    """Write ``sections`` (ordered name -> ndarray or JSON-able object)."""
    chunks = [magic, struct.pack("<I", len(sections))]
    for name, value in sections.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        if isinstance(value, np.ndarray):
            arr = np.ascontiguousarray(value, dtype="<f8")
            chunks.append(struct.pack("<BI", KIND_ARRAY, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(arr.tobytes())
        else:
            text = json.dumps(value, sort_keys=True).encode("utf-8")
            chunks.append(struct.pack("<BQ", KIND_JSON, len(text)))
            chunks.append(text)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_sections(path, magic):
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf:
        raise EmptyInputError(f"{path}: empty input")
    if not buf.startswith(magic):
        raise RomIOError(f"{path}: bad magic, expected {magic!r}")
    pos = len(magic)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise RomIOError(f"{path}: truncated file at byte {pos}")
        out = struct.unpack_from(fmt, buf, pos)
        pos += size
        return out

    def raw(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise RomIOError(f"{path}: {what} truncated at byte {pos}")
        pos += n
        return buf[pos - n:pos]

    (count,) = take("<I")
    sections = {}
    for idx in range(count):
        (nlen,) = take("<H")
        try:
            name = raw(nlen, f"section {idx} name").decode("utf-8")
        except UnicodeDecodeError:
            raise RomIOError(f"{path}: section {idx} name is not UTF-8") from None
        (kind,) = take("<B")
        if kind == KIND_ARRAY:
            (ndim,) = take("<I")
            shape = take(f"<{ndim}Q") if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            if pos + 8 * size > len(buf):
                raise RomIOError(f"{path}: section {idx} ({name!r}) truncated")
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            sections[name] = arr.astype(np.float64)
        elif kind == KIND_JSON:
            (nbytes,) = take("<Q")
            text = raw(nbytes, f"section {idx} ({name!r})")
            try:
                sections[name] = json.loads(text.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise RomIOError(f"{path}: section {idx} ({name!r}) is not valid JSON: "
                                 f"{exc}") from None
        else:
            raise RomIOError(f"{path}: section {idx} ({name!r}) has unknown kind {kind}")
    if pos != len(buf):
        raise RomIOError(f"{path}: {len(buf) - pos} trailing bytes after last section")
    return sections
