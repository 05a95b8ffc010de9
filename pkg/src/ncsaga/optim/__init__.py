"""GD, SGD, SAGA, Reg-SAGA, Minibatch-SAGA and GD-SAGA."""

from .drivers import (
    GdSagaResult,
    SagaRun,
    WarmStart,
    draw_output_index,
    gd_saga,
    gd_saga_epoch_length,
    run_saga,
    saga_from_warm,
    select_output,
    sgd_warm_pass,
)
from .state import CSV_COLUMNS, CSV_SCHEMA, IndexStream, OptState, RunRecord, RunStreams, SagaState, SgdSchedule
from .steps import (
    gd_step,
    minibatch_direction,
    minibatch_saga_step,
    reg_saga_step,
    saga_direction,
    saga_from_anchors,
    saga_init,
    saga_step,
    sgd_step,
)

__all__ = [
    "CSV_COLUMNS", "CSV_SCHEMA", "GdSagaResult", "IndexStream", "OptState", "RunRecord",
    "RunStreams", "SagaRun", "SagaState", "SgdSchedule", "WarmStart", "draw_output_index",
    "gd_saga", "gd_saga_epoch_length", "gd_step", "minibatch_direction", "minibatch_saga_step",
    "reg_saga_step", "run_saga", "saga_direction", "saga_from_anchors", "saga_from_warm",
    "saga_init", "saga_step", "select_output", "sgd_step", "sgd_warm_pass",
]
