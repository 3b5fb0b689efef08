"""Seizure timeline: lead-seizure selection and preictal/interictal regions.

All times here are seconds on the subject timeline (recording
``start_s`` plus in-file offsets).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .recording import Recording

INTERICTAL, PREICTAL = 0, 1
LABEL_NAMES = {INTERICTAL: "interictal", PREICTAL: "preictal"}

LEAD_GAP_S = 4 * 3600.0
SPH_S = 5 * 60.0
PIL_S = 30 * 60.0
POSTICTAL_S = 30 * 60.0


@dataclass(frozen=True)
class Seizure:
    onset_s: float
    offset_s: float
    recording_id: str = ""
    lead: bool = False


@dataclass(frozen=True)
class Span:
    recording_id: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class LabeledInterval:
    label: int
    start_s: float
    end_s: float
    recording_id: str

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class Timeline:
    """Recorded spans and every annotated seizure of one subject."""

    spans: list[Span]
    seizures: list[Seizure] = field(default_factory=list)

    @property
    def origin_s(self) -> float:
        return min(s.start_s for s in self.spans)

    @property
    def end_s(self) -> float:
        return max(s.end_s for s in self.spans)

    @classmethod
    def from_recordings(cls, recordings: list[Recording], lead_gap_s: float = LEAD_GAP_S) -> "Timeline":
        spans = [Span(r.id, r.start_s, r.end_s) for r in recordings]
        raw = sorted(
            (r.start_s + onset, r.start_s + offset, r.id) for r in recordings for onset, offset in r.annotations
        )
        origin = min(s.start_s for s in spans)
        seizures = []
        prev_offset = None
        for onset, offset, rid in raw:
            since = onset - (origin if prev_offset is None else prev_offset)
            seizures.append(Seizure(onset, offset, rid, lead=since >= lead_gap_s))
            prev_offset = offset if prev_offset is None else max(prev_offset, offset)
        return cls(spans, seizures)

    @property
    def lead_seizures(self) -> list[Seizure]:
        return [s for s in self.seizures if s.lead]


def find_lead_seizures(recordings: list[Recording], lead_gap_s: float = LEAD_GAP_S) -> list[Seizure]:
    """Seizures preceded by at least ``lead_gap_s`` without seizures.

    The first seizure counts as lead when the subject's recordings start at
    least ``lead_gap_s`` before it.
    """
    return Timeline.from_recordings(recordings, lead_gap_s).lead_seizures


def label_regions(
    timeline: Timeline,
    sph_s: float = SPH_S,
    pil_s: float = PIL_S,
    postictal_s: float = POSTICTAL_S,
) -> list[LabeledInterval]:
    """Preictal and interictal intervals, split per recording.

    Preictal: ``[onset - sph - pil, onset - sph]`` for each lead seizure.
    Interictal: from ``postictal_s`` after a seizure's offset (or the start
    of the timeline) to ``sph + pil`` before the next seizure of any kind
    (or the end of the timeline). The SPH gap and ictal periods are left
    unlabeled; intervals are clipped to recorded spans and empty pieces
    dropped.
    """
    seizures = sorted(timeline.seizures, key=lambda s: s.onset_s)
    lead_time = sph_s + pil_s
    raw: list[tuple[int, float, float]] = []
    for s in seizures:
        if s.lead:
            raw.append((PREICTAL, s.onset_s - lead_time, s.onset_s - sph_s))

    start = timeline.origin_s
    for s in seizures:
        raw.append((INTERICTAL, start, s.onset_s - lead_time))
        start = max(start, s.offset_s + postictal_s)
    raw.append((INTERICTAL, start, timeline.end_s))

    out = []
    for label, a, b in raw:
        for span in timeline.spans:
            lo, hi = max(a, span.start_s), min(b, span.end_s)
            if hi > lo:
                out.append(LabeledInterval(label, lo, hi, span.recording_id))
    out.sort(key=lambda iv: (iv.start_s, iv.label))
    return out
