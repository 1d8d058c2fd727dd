"""Repertoire persistence: JSON lines, one metadata header plus one elite per
line. Keys are emitted sorted and floats use the shortest round-trip repr, so
save -> load -> save is byte-identical."""

from __future__ import annotations

import json

from .qd_types import BehaviorDescriptor, Elite, Repertoire

FORMAT_VERSION = 1


class DataFormatError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        super().__init__(msg if lineno is None else f"line {lineno}: {msg}")
        self.lineno = lineno


class UnsupportedVersionError(DataFormatError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_repertoire(rep: Repertoire, path: str) -> None:
    meta = {"format_version": FORMAT_VERSION, "grid_shape": list(rep.grid_shape)}
    for k, v in rep.metadata.items():
        meta[k] = v
    lines = [_dump(meta)]
    for e in rep.elites():
        lines.append(
            _dump(
                {
                    "elite_id": e.elite_id,
                    "genome": [float(g) for g in e.genome],
                    "descriptor": [e.descriptor.contact_angle, e.descriptor.approach_angle],
                    "fitness": e.fitness,
                    "success": e.success,
                    "epsilon": e.epsilon,
                    "energy": e.energy,
                }
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_repertoire(path: str) -> Repertoire:
    from .qd import archive_insert  # local import to avoid a cycle

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty repertoire file", 1)
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad metadata: {exc}", 1) from exc
    if not isinstance(meta, dict) or "format_version" not in meta:
        raise DataFormatError("metadata line missing format_version", 1)
    if meta["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported format_version {meta['format_version']} (supported: {FORMAT_VERSION})",
            1,
        )
    grid_shape = tuple(meta.pop("grid_shape", (25, 25)))
    meta.pop("format_version")
    rep = Repertoire(grid_shape=grid_shape, cells={}, metadata=meta)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            elite = Elite(
                genome=d["genome"],
                descriptor=BehaviorDescriptor(*d["descriptor"]),
                fitness=float(d["fitness"]),
                success=bool(d["success"]),
                epsilon=float(d["epsilon"]),
                energy=float(d["energy"]),
                elite_id=int(d["elite_id"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad elite record: {exc}", lineno) from exc
        archive_insert(rep, elite)
    return rep
