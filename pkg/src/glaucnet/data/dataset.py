"""On-disk dataset layout: images/<id>.ppm, masks/<id>.pgm, labels.csv."""
from __future__ import annotations

import csv
from pathlib import Path

from ..errors import DatasetInvalid, IoFailure
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .sample import Sample

LABEL_HEADER = ["id", "glaucoma", "cdr"]


def write_dataset(samples, out_dir) -> Path:
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create dataset directory {out}: {exc.strerror or exc}") from None
    rows = []
    for s in samples:
        write_ppm(s.image, out / "images" / f"{s.id}.ppm")
        if s.mask is not None:
            write_pgm(s.mask, out / "masks" / f"{s.id}.pgm")
        rows.append([s.id, "" if s.glaucoma_label is None else str(int(s.glaucoma_label)),
                     "" if s.true_cdr is None else repr(float(s.true_cdr))])
    try:
        with open(out / "labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LABEL_HEADER)
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write labels.csv: {exc.strerror or exc}") from None
    return out


def read_labels(root) -> dict[str, tuple[int | None, float | None]]:
    path = Path(root) / "labels.csv"
    if not path.is_file():
        raise DatasetInvalid(f"{root} has no labels.csv")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABEL_HEADER:
            raise DatasetInvalid(f"labels.csv header must be {','.join(LABEL_HEADER)}, got {header}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DatasetInvalid(f"labels.csv line {lineno}: expected 3 fields")
            sid, glaucoma, cdr = row
            try:
                out[sid] = (int(glaucoma) if glaucoma else None, float(cdr) if cdr else None)
            except ValueError:
                raise DatasetInvalid(f"labels.csv line {lineno}: unparsable value") from None
            if out[sid][0] not in (None, 0, 1):
                raise DatasetInvalid(f"labels.csv line {lineno}: glaucoma must be 0 or 1")
    return out


def read_dataset(root, need_masks: bool = False, need_labels: bool = False) -> list[Sample]:
    """Load every sample listed in labels.csv, in file order."""
    root = Path(root)
    samples = []
    for sid, (glaucoma, cdr) in read_labels(root).items():
        image_path, mask_path = root / "images" / f"{sid}.ppm", root / "masks" / f"{sid}.pgm"
        if not image_path.is_file():
            raise DatasetInvalid(f"missing image for id {sid}")
        if need_masks and not mask_path.is_file():
            raise DatasetInvalid(f"missing mask for id {sid}")
        if need_labels and glaucoma is None:
            raise DatasetInvalid(f"missing glaucoma label for id {sid}")
        mask = read_pgm(mask_path) if mask_path.is_file() else None
        samples.append(Sample(sid, read_ppm(image_path), mask, glaucoma, cdr))
    if not samples:
        raise DatasetInvalid(f"{root} lists no samples")
    return samples
