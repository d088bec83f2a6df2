"""On-disk session store: one directory per subject.

Each subject directory holds ``manifest.json`` plus one ``qNN.qvc`` clip per
question. The store root may also hold ``cohort.json`` describing how it was
generated. JSON is written with sorted keys so identical sessions produce
identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..session import N_QUESTIONS, QuestionRecord, Session
from .binary import read_clip, write_clip

MANIFEST = "manifest.json"
COHORT = "cohort.json"


class StoreError(ValueError):
    pass


def clip_name(index: int) -> str:
    return f"q{index + 1:02d}.qvc"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def manifest_of(session: Session) -> dict:
    return {
        "subject_id": session.subject_id,
        "label": int(session.label),
        "questions": [
            {
                "answer": int(q.answer),
                "response_time_sec": float(q.response_time_sec),
                "clip_path": clip_name(i),
                "crop_box": list(q.crop_box) if q.crop_box is not None else None,
            }
            for i, q in enumerate(session.questions)
        ],
    }


def write_session(session: Session, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, q in enumerate(session.questions):
        write_clip(path / clip_name(i), q.clip)
    (path / MANIFEST).write_text(dumps(manifest_of(session)), encoding="utf-8")


def read_session(path) -> Session:
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.is_file():
        raise StoreError(f"{path}: no {MANIFEST}")
    try:
        man = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreError(f"{manifest_path}: {exc}") from exc
    entries = man.get("questions", [])
    if len(entries) != N_QUESTIONS:
        raise StoreError(f"{manifest_path}: expected {N_QUESTIONS} questions, found {len(entries)}")
    questions = []
    for i, entry in enumerate(entries):
        clip_path = path / entry["clip_path"]
        if not clip_path.is_file():
            raise StoreError(f"{manifest_path}: question {i + 1}: clip file {entry['clip_path']} is missing")
        answer = entry["answer"]
        if answer not in (1, 2, 3, 4):
            raise StoreError(f"{manifest_path}: question {i + 1}: answer {answer} outside 1..4")
        box = entry.get("crop_box")
        questions.append(
            QuestionRecord(
                answer=int(answer),
                response_time_sec=float(entry["response_time_sec"]),
                clip=read_clip(clip_path),
                crop_box=tuple(box) if box is not None else None,
            )
        )
    return Session(subject_id=str(man["subject_id"]), label=int(man["label"]), questions=questions)


def write_store(sessions, root, cohort: dict | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in sessions:
        write_session(s, root / s.subject_id)
    if cohort is not None:
        (root / COHORT).write_text(dumps(cohort), encoding="utf-8")


def read_store(root) -> list:
    """All sessions under ``root``, ordered by subject id."""
    root = Path(root)
    if not root.is_dir():
        raise StoreError(f"{root}: not a directory")
    dirs = sorted(p for p in root.iterdir() if (p / MANIFEST).is_file())
    if not dirs:
        raise StoreError(f"{root}: no sessions found")
    return [read_session(d) for d in dirs]
