"""Cohort manifest: participant profiles plus the recording files on disk.

The manifest is an INI file, one section per participant::

    [manifest]
    format = vo2tcn-cohort
    version = 1
    seed = 7

    [participant P01]
    mass_kg = 71.2
    ...
    recording.RAMP = P01_RAMP.csv
    recording.L-M = P01_L-M.csv

Recording paths are relative to the manifest's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path

from .data import PROTOCOL_KINDS, read_recording, write_recording
from .errors import DataError
from .sim import Participant, ParticipantProfile

MANIFEST_NAME = "cohort.ini"
_PROFILE_FIELDS = [f.name for f in fields(ParticipantProfile) if f.name != "participant_id"]


def write_cohort(cohort, out_dir, seed=None) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["manifest"] = {"format": "vo2tcn-cohort", "version": "1",
                      "participants": str(len(cohort))}
    if seed is not None:
        cp["manifest"]["seed"] = str(seed)
    for person in cohort:
        p = person.profile
        section = {name: repr(float(getattr(p, name))) for name in _PROFILE_FIELDS}
        for kind in PROTOCOL_KINDS:
            rec = person.recordings[kind]
            fname = f"{p.participant_id}_{kind}.csv"
            write_recording(rec, out / fname)
            section[f"recording.{kind}"] = fname
        cp[f"participant {p.participant_id}"] = section
    path = out / MANIFEST_NAME
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)
    return path


def read_cohort(data_dir) -> list[Participant]:
    """Load every participant listed in ``data_dir/cohort.ini``."""
    root = Path(data_dir)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"no cohort manifest at {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    cohort = []
    for section in cp.sections():
        if not section.startswith("participant "):
            continue
        pid = section.split(" ", 1)[1].strip()
        sec = cp[section]
        try:
            profile = ParticipantProfile(pid, **{k: float(sec[k]) for k in _PROFILE_FIELDS})
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: bad profile for {pid}: {exc}") from exc
        person = Participant(profile, kinetics=None)
        for key, value in sec.items():
            if key.startswith("recording."):
                kind = key.split(".", 1)[1]
                person.recordings[kind] = read_recording(root / value, pid, kind)
        cohort.append(person)
    if not cohort:
        raise DataError(f"{path} lists no participants")
    return cohort
