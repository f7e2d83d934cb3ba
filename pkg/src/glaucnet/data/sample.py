from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Sample:
    """One fundus record: RGB image plus whichever labels are known."""

    id: str
    image: np.ndarray
    mask: np.ndarray | None = None
    glaucoma_label: int | None = None
    true_cdr: float | None = None
