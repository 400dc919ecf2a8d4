"""Standard object roster and the object library file format.

Provides:
  lego_bar            — modular 0.30 x 0.04 m bar with weights at both ends
  standard_roster     — 19 named objects: 12 daily items + 7 bar configurations
  training_objects / test_objects — the fixed 14 / 5 split
  write_object_library / read_object_library — JSON-lines persistence

Roster notes:
  Shapes are parallel-jaw friendly (each object has opposed faces within the
  0.08 m stroke). Tools carry their head mass as point attachments so the
  center of mass sits away from the area centroid. The bar takes left/right
  end weights in grams; training uses (0,0), (120,0), (0,120), (120,120),
  (240,0), (240,120) and testing uses (60,300).

Library file format (UTF-8, one JSON document per line):
  line 1:  {"format": "slipgrasp-objects", "version": 1, "count": N}
  line 2+: {"attachments": [[[x, y], kg], ...], "body_mass": kg,
            "name": str, "vertices": [[x, y], ...]}
  Keys are sorted and floats use repr, so equal rosters serialize to equal
  bytes.
"""

import json

import numpy as np

from .errors import DatasetFormatError
from .geometry import ObjectModel, rectangle, regular_polygon

LIBRARY_FORMAT = "slipgrasp-objects"
LIBRARY_VERSION = 1

# Bar geometry shared by every weight configuration.
_BAR_LENGTH = 0.30
_BAR_WIDTH = 0.04
_BAR_BODY_MASS = 0.2
_BAR_LEFT_SEAT = (0.02, 0.02)
_BAR_RIGHT_SEAT = (0.28, 0.02)

TRAIN_BAR_CONFIGS = ((0, 0), (120, 0), (0, 120), (120, 120), (240, 0), (240, 120))
TEST_BAR_CONFIG = (60, 300)


def lego_bar(left_grams: float, right_grams: float) -> ObjectModel:
    """Bar with configurable end weights; name encodes the gram loading."""
    attachments = []
    if left_grams > 0:
        attachments.append((_BAR_LEFT_SEAT, left_grams / 1000.0))
    if right_grams > 0:
        attachments.append((_BAR_RIGHT_SEAT, right_grams / 1000.0))
    return ObjectModel(
        rectangle(_BAR_LENGTH, _BAR_WIDTH), body_mass=_BAR_BODY_MASS,
        attachments=tuple(attachments),
        name=f"lego_{int(left_grams)}_{int(right_grams)}")


def _daily_objects() -> list[ObjectModel]:
    mk = ObjectModel
    return [
        # tools: a light handle plus a heavy head attachment
        mk(rectangle(0.26, 0.032), 0.25, (((0.245, 0.016), 0.55),), name="axe"),
        mk(rectangle(0.20, 0.028), 0.30, (((0.19, 0.014), 0.12),), name="wrench"),
        mk(rectangle(0.24, 0.025), 0.12, (((0.23, 0.0125), 0.08),), name="spatula"),
        mk(rectangle(0.28, 0.030), 0.30, (((0.265, 0.015), 0.62),), name="hammer"),
        mk(rectangle(0.26, 0.030), 0.20, (((0.245, 0.015), 0.28),), name="wooden_hammer"),
        mk(rectangle(0.20, 0.026), 0.15, (((0.01, 0.013), 0.10),), name="screwdriver"),
        # box-like: contents shift the center of mass invisibly
        mk(rectangle(0.22, 0.060), 0.35, (((0.06, 0.030), 0.15),), name="cereal_box"),
        mk(rectangle(0.075, 0.075), 0.18, (((0.055, 0.055), 0.05),), name="tea_box"),
        mk(rectangle(0.15, 0.075), 0.25, (((0.045, 0.0375), 0.17),), name="iphone_box"),
        # round-ish items, approximated by regular polygons
        mk(regular_polygon(24, 0.035, center=(0.035, 0.035)), 0.15, (),
           name="tape_roll"),
        mk(regular_polygon(16, 0.0375, center=(0.0375, 0.0375)), 0.40,
           (((0.0495, 0.0375), 0.12),), name="spray_bottle"),
        # heavy and nearly symmetric; the one item that can slip out of the
        # jaws entirely at low grip force
        mk(rectangle(0.16, 0.050), 0.40,
           (((0.030, 0.025), 1.40), ((0.130, 0.025), 1.40)), name="dumbbell"),
    ]


def standard_roster() -> list[ObjectModel]:
    """All 19 objects, daily items first, bar configurations last."""
    bars = [lego_bar(*cfg) for cfg in TRAIN_BAR_CONFIGS]
    bars.append(lego_bar(*TEST_BAR_CONFIG))
    return _daily_objects() + bars


TEST_NAMES = ("hammer", "wooden_hammer", "iphone_box", "screwdriver",
              "lego_60_300")


def training_objects() -> list[ObjectModel]:
    return [o for o in standard_roster() if o.name not in TEST_NAMES]


def test_objects() -> list[ObjectModel]:
    roster = {o.name: o for o in standard_roster()}
    return [roster[n] for n in TEST_NAMES]


# Library persistence ------------------------------------------------------

def _record(obj: ObjectModel) -> str:
    doc = {
        "name": obj.name,
        "vertices": [[float(x), float(y)] for x, y in obj.polygon],
        "body_mass": float(obj.body_mass),
        "attachments": [[[float(p[0]), float(p[1])], float(m)]
                        for p, m in obj.attachments],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_object_library(path, objects) -> None:
    objects = list(objects)
    header = json.dumps(
        {"format": LIBRARY_FORMAT, "version": LIBRARY_VERSION,
         "count": len(objects)}, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for obj in objects:
            fh.write(_record(obj) + "\n")


def read_object_library(path) -> list[ObjectModel]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty object library", line=0)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad header: {exc}", line=1) from exc
    if header.get("format") != LIBRARY_FORMAT:
        raise DatasetFormatError(
            f"not an object library (format={header.get('format')!r})", line=1)
    if header.get("version") != LIBRARY_VERSION:
        raise DatasetFormatError(
            f"unsupported version {header.get('version')!r}", line=1)
    objects = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
            obj = ObjectModel(
                np.array(doc["vertices"], dtype=float),
                body_mass=float(doc["body_mass"]),
                attachments=tuple(((p[0], p[1]), float(m))
                                  for p, m in doc["attachments"]),
                name=str(doc["name"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"bad object record: {exc}",
                                     line=lineno) from exc
        objects.append(obj)
    if header.get("count") != len(objects):
        raise DatasetFormatError(
            f"header count {header.get('count')} != {len(objects)} records",
            line=1)
    return objects
