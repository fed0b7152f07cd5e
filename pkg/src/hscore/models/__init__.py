"""Model interfaces and the benchmark model zoo."""

from .base import IidModel, ParamVector, StateSpaceModel, simulate_dataset
from .kangaroo import kangaroo_spec, nb_logpmf
from .levy_sv import levy_sv_m1_spec, levy_sv_m2_spec, levy_sv_transition
from .lgssm import lgssm_spec
from .normal import inv_chi2_logpdf, normal_m1_spec, normal_m2_spec

MODEL_IDS = (
    "normal_m1",
    "normal_m2",
    "lgssm",
    "levy_sv_m1",
    "levy_sv_m2",
    "kangaroo_m1",
    "kangaroo_m2",
    "kangaroo_m3",
)


def get_model(model_id: str, **options):
    """Build a model from its identifier; ``options`` go to the builder."""
    builders = {
        "normal_m1": normal_m1_spec,
        "normal_m2": normal_m2_spec,
        "lgssm": lgssm_spec,
        "levy_sv_m1": levy_sv_m1_spec,
        "levy_sv_m2": levy_sv_m2_spec,
        "kangaroo_m1": lambda **kw: kangaroo_spec("M1", **kw),
        "kangaroo_m2": lambda **kw: kangaroo_spec("M2", **kw),
        "kangaroo_m3": lambda **kw: kangaroo_spec("M3", **kw),
    }
    if model_id not in builders:
        raise KeyError(f"unknown model {model_id!r}; expected one of {', '.join(MODEL_IDS)}")
    return builders[model_id](**options)


__all__ = [
    "IidModel",
    "MODEL_IDS",
    "ParamVector",
    "StateSpaceModel",
    "get_model",
    "inv_chi2_logpdf",
    "kangaroo_spec",
    "levy_sv_m1_spec",
    "levy_sv_m2_spec",
    "levy_sv_transition",
    "lgssm_spec",
    "nb_logpmf",
    "normal_m1_spec",
    "normal_m2_spec",
    "simulate_dataset",
]
