"""The four classification problems carved out of the three severity classes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest import CLASS_NAMES, Severity


@dataclass(frozen=True)
class TaskSpec:
    name: str
    classes: tuple[int, ...]  # severity codes, least severe first

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def is_binary(self) -> bool:
        return len(self.classes) == 2

    @property
    def positive(self) -> int | None:
        """Severity code treated as positive: the more severe class of a binary task."""
        return self.classes[-1] if self.is_binary else None

    @property
    def class_names(self) -> list[str]:
        return [CLASS_NAMES[c] for c in self.classes]

    @property
    def selection_metric(self) -> str:
        return "f1" if self.is_binary else "macro_f1"

    def mask(self, labels) -> np.ndarray:
        return np.isin(np.asarray(labels), self.classes)

    def encode(self, labels) -> np.ndarray:
        """Severity codes -> task-local indices 0..K-1 (1 = positive for binary)."""
        labels = np.asarray(labels)
        lut = {c: i for i, c in enumerate(self.classes)}
        try:
            return np.array([lut[int(v)] for v in labels], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]} is outside task {self.name}") from None


TASKS = {
    "HealthyVsMild": TaskSpec("HealthyVsMild", (Severity.HEALTHY, Severity.MILD)),
    "HealthyVsModSevere": TaskSpec("HealthyVsModSevere", (Severity.HEALTHY, Severity.MOD_SEVERE)),
    "MildVsModSevere": TaskSpec("MildVsModSevere", (Severity.MILD, Severity.MOD_SEVERE)),
    "ThreeClass": TaskSpec(
        "ThreeClass", (Severity.HEALTHY, Severity.MILD, Severity.MOD_SEVERE)
    ),
}
BINARY_TASKS = ("HealthyVsMild", "HealthyVsModSevere", "MildVsModSevere")


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {list(TASKS)}") from None
