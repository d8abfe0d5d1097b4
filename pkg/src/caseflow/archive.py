"""Append-only episode archive with probe-based similarity retrieval.

Layout under the archive root:

    episodes/<episodeId>.log      one event per line (the episode event log)
    episodes/<episodeId>.archive  per-activity records, one per line
    index.jsonl                   one line per fragment:
                                  fragment_id, episode_id, activity_id,
                                  typology_paths[]

Records are never rewritten; a replan appends a "superseded" marker line
for the fragments it invalidates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateArchive, PartialArchive, UnknownEpisode
from .taxonomy import Taxonomy


def pair_weight(path_a: list[str], path_b: list[str], value_a, value_b) -> float:
    """Similarity weight of one probe/fragment element pair.

    Taxonomy part: depth of the deepest common ancestor divided by the
    deeper of the two paths. Value part: 1 when the values agree (both
    absent counts as agreement), 0.75 when exactly one is unvalued, 0.5
    when both are valued but differ.
    """
    common = 0
    for a, b in zip(path_a, path_b):
        if a != b:
            break
        common += 1
    if common == 0 or not path_a or not path_b:
        return 0.0
    taxo = common / max(len(path_a), len(path_b))
    if value_a is None and value_b is None:
        factor = 1.0
    elif value_a is None or value_b is None:
        factor = 0.75
    else:
        factor = 1.0 if value_a == value_b else 0.5
    return taxo * factor


def score_fragment(probe_elements: list[dict], fragment_elements: list[dict]):
    """Greedy best-pair matching; returns (score, matched pair list).

    Score = sum of matched weights / number of probe elements, in [0, 1].
    """
    if not probe_elements:
        return 0.0, []
    weights = []
    for pi, p in enumerate(probe_elements):
        for fi, f in enumerate(fragment_elements):
            w = pair_weight(
                p["typology_path"], f["typology_path"], p.get("value"), f.get("value")
            )
            if w > 0:
                weights.append((w, pi, fi))
    weights.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_f: set[int] = set()
    matched = []
    total = 0.0
    for w, pi, fi in weights:
        if pi in used_p or fi in used_f:
            continue
        used_p.add(pi)
        used_f.add(fi)
        matched.append({"probe_index": pi, "fragment_index": fi, "weight": w})
        total += w
    return total / len(probe_elements), matched


@dataclass
class RetrievalResult:
    ranked: list[dict] = field(default_factory=list)  # fragment_id, score, matched

    def to_dict(self) -> dict:
        return {"ranked": self.ranked}


class EpisodeArchive:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "episodes").mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.jsonl"
        if not self.index_path.exists():
            self.index_path.touch()
        self._seen: set[str] = {
            line["fragment_id"] for line in self._read_jsonl(self.index_path)
        }

    @staticmethod
    def _read_jsonl(path: Path) -> list[dict]:
        if not path.exists():
            return []
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]

    @staticmethod
    def _append_jsonl(path: Path, record: dict) -> None:
        with open(path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    # -- writing ------------------------------------------------------------

    def archive(self, record: dict) -> str:
        """Append one activity-episode record; returns its fragment id."""
        for key in ("episode_id", "activity_id", "attempt", "status"):
            if key not in record:
                raise ValueError(f"archive record missing {key!r}")
        fragment_id = (
            f"{record['episode_id']}:{record['activity_id']}:{record['attempt']}"
        )
        if fragment_id in self._seen:
            raise DuplicateArchive(f"fragment already archived: {fragment_id}")
        record = dict(record, fragment_id=fragment_id, kind="fragment")
        self._append_jsonl(
            self.root / "episodes" / f"{record['episode_id']}.archive", record
        )
        self._append_jsonl(
            self.index_path,
            {
                "fragment_id": fragment_id,
                "episode_id": record["episode_id"],
                "activity_id": record["activity_id"],
                "typology_paths": [
                    e["typology_path"] for e in record.get("elements", [])
                ],
            },
        )
        self._seen.add(fragment_id)
        return fragment_id

    def mark_superseded(self, episode_id: str, fragment_id: str) -> None:
        self._append_jsonl(
            self.root / "episodes" / f"{episode_id}.archive",
            {"kind": "superseded", "fragment_id": fragment_id},
        )

    def append_event(self, episode_id: str, event: dict) -> None:
        self._append_jsonl(self.root / "episodes" / f"{episode_id}.log", event)

    # -- reading ------------------------------------------------------------

    def episode_ids(self) -> list[str]:
        return sorted(
            p.stem for p in (self.root / "episodes").glob("*.archive")
        )

    def read_event_log(self, episode_id: str) -> list[dict]:
        path = self.root / "episodes" / f"{episode_id}.log"
        if not path.exists():
            raise UnknownEpisode(f"no event log for episode {episode_id}")
        return self._read_jsonl(path)

    def read_records(self, episode_id: str) -> list[dict]:
        path = self.root / "episodes" / f"{episode_id}.archive"
        if not path.exists():
            raise UnknownEpisode(f"unknown episode: {episode_id}")
        return self._read_jsonl(path)

    def fragments(self) -> list[dict]:
        """All fragment records across episodes, in archive order."""
        out = []
        for eid in self.episode_ids():
            out.extend(
                r for r in self.read_records(eid) if r.get("kind") == "fragment"
            )
        # stable global recency order: the index file is strictly append-only
        order = {
            line["fragment_id"]: i
            for i, line in enumerate(self._read_jsonl(self.index_path))
        }
        out.sort(key=lambda r: order.get(r["fragment_id"], -1))
        return out

    def reconstruct_episode(self, episode_id: str) -> dict:
        """Rebuild the hierarchical episode record from the archive files."""
        records = self.read_records(episode_id)
        fragments = [r for r in records if r.get("kind") == "fragment"]
        superseded = {
            r["fragment_id"] for r in records if r.get("kind") == "superseded"
        }
        if not fragments:
            raise PartialArchive(f"episode {episode_id} has no fragments")

        by_activity: dict[str, list[dict]] = {}
        roots = []
        for rec in fragments:
            rec = dict(rec)
            if rec["fragment_id"] in superseded:
                rec["status"] = "superseded_by_replan"
            rec.pop("kind", None)
            rec.pop("ts", None)
            by_activity.setdefault(rec["activity_id"], []).append(rec)
            if rec.get("parent") is None:
                roots.append(rec["activity_id"])

        if not roots or not any(
            rec["status"] == "complete" for rec in by_activity[roots[0]]
        ):
            raise PartialArchive(
                f"episode {episode_id} was not archived to completion"
            )
        root_id = roots[0]

        events = self.read_event_log(episode_id)
        edits = [e["payload"] for e in events if e["kind"] == "discretion_applied"]
        replans = [e["payload"] for e in events if e["kind"] == "replanned"]

        def build(activity_id: str) -> dict:
            attempts = sorted(by_activity[activity_id], key=lambda r: r["attempt"])
            children = sorted(
                {
                    aid
                    for aid, recs in by_activity.items()
                    if recs[0].get("parent") == activity_id
                }
            )
            return {
                "activity_id": activity_id,
                "attempts": attempts,
                "sub_activities": [build(c) for c in children],
            }

        return {
            "episode_id": episode_id,
            "model_id": fragments[0].get("model_id"),
            "root": build(root_id),
            "discretion_edits": edits,
            "replans": replans,
        }

    # -- retrieval ------------------------------------------------------------

    def retrieve_similar(
        self, probe: dict, k: int, include_zero: bool = False
    ) -> RetrievalResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        fragments = self.fragments()
        scored = []
        for recency, frag in enumerate(fragments):
            score, matched = score_fragment(
                probe.get("elements", []), frag.get("elements", [])
            )
            scored.append(
                {
                    "fragment_id": frag["fragment_id"],
                    "score": score,
                    "matched": matched,
                    "_recency": recency,
                }
            )
        if not include_zero:
            scored = [s for s in scored if s["score"] > 0]
        # newer fragments first on equal scores, then lexical fragment id
        scored.sort(key=lambda s: (-s["score"], -s["_recency"], s["fragment_id"]))
        for s in scored:
            s.pop("_recency")
        return RetrievalResult(ranked=scored[:k])

    def match_typologies(self, probe: dict, taxonomy: Taxonomy, k: int) -> list[dict]:
        """Score the probe against knowledge-base typologies (values skipped)."""
        scored = []
        for tid in sorted(taxonomy.typologies):
            path = taxonomy.typology_path(tid)
            best = 0.0
            for el in probe.get("elements", []):
                w = pair_weight(el["typology_path"], path, None, None)
                best = max(best, w)
            if best > 0:
                scored.append({"typology": tid, "score": best})
        scored.sort(key=lambda s: (-s["score"], s["typology"]))
        return scored[:k]
