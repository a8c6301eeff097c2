"""Validation-driven grid search and the threshold / sensitivity sweeps.

CSV columns (frozen):

* grid:        ``model,eta,lambda,status,val_auc,test_auc,selected``
* threshold:   ``threshold,model,eta,lambda,val_auc,test_auc,feedback_per_user,trusts_per_user,users_evaluated``
* sensitivity: ``parameter,value,val_auc,test_auc``
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .corpus import Corpus, apply_threshold, split as make_split
from .errors import TrainingDiverged
from .evaluation import auc
from .models import ModelKind, ModelParams
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_ETAS = (0.5, 0.05, 0.005)
DEFAULT_LAMBDAS = (1.0, 0.1, 0.01, 0.001)
MODELS = tuple(ModelKind)


@dataclass
class GridCell:
    eta: float
    lam: float
    status: str  # "ok" or "diverged"
    val_auc: float = float("nan")
    test_auc: float = float("nan")


@dataclass
class GridResult:
    best: Optional[TrainConfig]
    cells: list = field(default_factory=list)
    best_params: Optional[ModelParams] = field(default=None, repr=False)
    best_curve: list = field(default_factory=list, repr=False)

    @property
    def best_cell(self) -> Optional[GridCell]:
        for cell in self.cells:
            if self.best is not None and (cell.eta, cell.lam) == (self.best.eta, self.best.lam):
                return cell
        return None


def grid_search(
    split,
    kind,
    eta_grid: Sequence[float] = DEFAULT_ETAS,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDAS,
    base: Optional[TrainConfig] = None,
    threads: int = 1,
) -> GridResult:
    """Train one model per (eta, lambda) cell; keep the best by validation AUC.

    The validation AUC of a cell is the one after its final epoch. Ties go to
    the smaller eta, then the smaller lambda. Diverged cells are recorded and
    never selected.
    """
    if not eta_grid or not lambda_grid:
        raise ValueError("eta and lambda grids must be nonempty")
    base = (base or TrainConfig()).replace(kind=ModelKind.parse(kind))
    result = GridResult(best=None)
    best_key = None
    for eta in eta_grid:
        for lam in lambda_grid:
            config = base.replace(eta=float(eta), lam=float(lam))
            try:
                trained = train(split, config, threads=threads)
            except TrainingDiverged as exc:
                log.info("%s eta=%g lambda=%g diverged: %s", config.kind.value, eta, lam, exc)
                result.cells.append(GridCell(config.eta, config.lam, "diverged"))
                continue
            val = trained.curve[-1]
            test = auc(trained.params, split, "test", threads=threads).auc
            result.cells.append(GridCell(config.eta, config.lam, "ok", val, test))
            key = (-val, config.eta, config.lam)
            if best_key is None or key < best_key:
                best_key = key
                result.best = config
                result.best_params = trained.params
                result.best_curve = trained.curve
    return result


def improvement(new: float, base: float) -> float:
    """Relative AUC improvement of ``new`` over ``base``."""
    return (new - base) / base


def write_grid_csv(result: GridResult, fh, model: str) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["model", "eta", "lambda", "status", "val_auc", "test_auc", "selected"])
    best = result.best_cell
    for cell in result.cells:
        w.writerow(
            [model, repr(cell.eta), repr(cell.lam), cell.status, repr(cell.val_auc),
             repr(cell.test_auc), int(cell is best)]
        )


@dataclass
class ThresholdRow:
    threshold: int
    model: str
    eta: float
    lam: float
    val_auc: float
    test_auc: float
    feedback_per_user: float
    trusts_per_user: float
    users_evaluated: int


def threshold_sweep(
    corpus: Corpus,
    thresholds: Iterable[int],
    models: Sequence = MODELS,
    base: Optional[TrainConfig] = None,
    eta_grid: Sequence[float] = DEFAULT_ETAS,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDAS,
    threads: int = 1,
) -> list[ThresholdRow]:
    """Filter to each threshold, split, grid-search every model and record its test AUC."""
    thresholds = list(thresholds)
    for n in thresholds:
        if n < 4:
            raise ValueError(f"threshold must be >= 4, got {n}")
    rows = []
    for n in thresholds:
        filtered = apply_threshold(corpus, n)
        sp = make_split(filtered)
        stats = filtered.stats()
        for model in models:
            res = grid_search(sp, model, eta_grid, lambda_grid, base, threads)
            cell = res.best_cell
            nan = float("nan")
            rows.append(
                ThresholdRow(
                    threshold=n,
                    model=ModelKind.parse(model).value,
                    eta=cell.eta if cell else nan,
                    lam=cell.lam if cell else nan,
                    val_auc=cell.val_auc if cell else nan,
                    test_auc=cell.test_auc if cell else nan,
                    feedback_per_user=stats["feedback_per_user"],
                    trusts_per_user=stats["trusts_per_user"],
                    users_evaluated=len(sp.users),
                )
            )
    return rows


def write_threshold_csv(rows: Sequence[ThresholdRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(
        ["threshold", "model", "eta", "lambda", "val_auc", "test_auc",
         "feedback_per_user", "trusts_per_user", "users_evaluated"]
    )
    for r in rows:
        w.writerow(
            [r.threshold, r.model, repr(r.eta), repr(r.lam), repr(r.val_auc), repr(r.test_auc),
             repr(r.feedback_per_user), repr(r.trusts_per_user), r.users_evaluated]
        )


@dataclass
class SensitivityRow:
    parameter: str
    value: float
    val_auc: float
    test_auc: float


def sensitivity_sweep(
    split, parameter: str, values: Iterable, base: Optional[TrainConfig] = None, threads: int = 1
) -> list[SensitivityRow]:
    """Retrain SPMC for each value of ``K`` or ``alpha``, all else fixed."""
    if parameter not in ("K", "alpha"):
        raise ValueError(f"parameter must be 'K' or 'alpha', got {parameter!r}")
    base = (base or TrainConfig()).replace(kind=ModelKind.SPMC)
    rows = []
    for value in values:
        value = int(value) if parameter == "K" else float(value)
        config = base.replace(**{parameter: value})
        trained = train(split, config, threads=threads)
        rows.append(
            SensitivityRow(
                parameter, value, trained.curve[-1],
                auc(trained.params, split, "test", threads=threads).auc,
            )
        )
    return rows


def write_sensitivity_csv(rows: Sequence[SensitivityRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["parameter", "value", "val_auc", "test_auc"])
    for r in rows:
        w.writerow([r.parameter, repr(r.value), repr(r.val_auc), repr(r.test_auc)])
