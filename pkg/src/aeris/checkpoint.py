"""Versioned text checkpoints for the non-neural models.

Files are JSON with a ``format``/``version`` header. Python's float repr is
the shortest round-tripping form, so coefficients reload bit-exactly.
"""
import json

FORMAT = "aeris-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(kind, payload):
    doc = {"format": FORMAT, "version": VERSION, "kind": kind}
    doc.update(payload)
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)


def loads(text, kind=None):
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise CheckpointError("not an aeris checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    if kind is not None and doc.get("kind") != kind:
        raise CheckpointError(f"expected a {kind!r} checkpoint, found {doc.get('kind')!r}")
    return doc


def save(path, kind, payload):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(kind, payload))


def load(path, kind=None):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), kind)
