#!/usr/bin/env python3
"""Regenerate the bundled prompt corpora.

Deterministic: running this script always reproduces corpora/repetitive.txt
and corpora/distinct.txt byte for byte. The repetitive corpus cycles short
templates so suffix lookup finds matches almost immediately; the distinct
corpus avoids repeated phrasing so lookup rarely fires.
"""

import random
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "corpora"

PHRASES = [
    "the cat sat on the mat",
    "a red fox ran past the barn",
    "rain falls on the tin roof",
    "we count one two three four",
    "copper wire coils hum softly",
    "the tide rolls in and out",
    "bright green leaves turn gold",
    "stack the crates by the door",
    "warm bread cools on the sill",
    "the old clock ticks at noon",
    "ships drift past the grey pier",
    "sort the bolts by their size",
    "dark clouds gather in the west",
    "the drum beats a steady line",
    "fresh snow covers the long road",
    "tall grass bends in the wind",
]

SUBJECTS = [
    "the archivist", "a glassblower", "the ferry pilot", "an old cartographer",
    "the night baker", "a tired surveyor", "the lighthouse keeper", "a young luthier",
    "the beekeeper", "an off-duty conductor", "the typesetter", "a market gardener",
    "the clocksmith", "a river guide", "the stone mason", "an itinerant tinker",
]

VERBS = [
    "catalogued", "polished", "measured", "repaired", "sketched", "weighed",
    "unpacked", "tuned", "labelled", "inspected", "archived", "assembled",
    "calibrated", "transcribed", "varnished", "indexed",
]

OBJECTS = [
    "a brass sextant", "the cracked bell", "nine oak panels", "a spool of silver thread",
    "the harbour ledger", "three clay jars", "a bundle of maps", "the worn gearbox",
    "a crate of lenses", "the stained atlas", "five copper pipes", "a velvet-lined case",
    "the chipped sundial", "a sheaf of invoices", "two walnut frames", "the salvaged anchor",
]

PLACES = [
    "beneath the stairwell", "on the upper landing", "behind the kiln",
    "near the dry dock", "inside the vault", "along the towpath",
    "under the awning", "beside the weir", "in the loft", "at the far quay",
    "within the annex", "by the signal box", "over the footbridge",
    "outside the refectory", "past the mill race", "around the cloister",
]


def make_repetitive(rng: random.Random, count: int) -> list[str]:
    lines = []
    for _ in range(count):
        phrase = rng.choice(PHRASES)
        unit = phrase + ". "
        repeats = rng.randint(2, 3)
        # cut partway into the next repetition so the suffix has an earlier
        # occurrence whose continuation can be copied
        cut = rng.randint(4, max(5, len(phrase) - 2))
        lines.append((unit * repeats + phrase[:cut]).rstrip())
    return lines


def make_distinct(rng: random.Random, count: int) -> list[str]:
    seen = set()
    lines = []
    while len(lines) < count:
        s = (
            f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)} "
            f"{rng.choice(PLACES)} at {rng.randint(1, 12)}:"
            f"{rng.randint(0, 59):02d}"
        )
        if s in seen:
            continue
        seen.add(s)
        lines.append(s)
    return lines


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240613)
    rep = make_repetitive(rng, 128)
    dis = make_distinct(rng, 64)
    (OUT_DIR / "repetitive.txt").write_text("\n".join(rep) + "\n", encoding="ascii")
    (OUT_DIR / "distinct.txt").write_text("\n".join(dis) + "\n", encoding="ascii")
    print(f"wrote {len(rep)} repetitive and {len(dis)} distinct prompts to {OUT_DIR}")


if __name__ == "__main__":
    main()
