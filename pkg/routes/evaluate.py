import logging
from typing import Optional

from fastapi import APIRouter, HTTPException, Query

from services.errors import DomainError, NumericalError
from services.metrics import evaluate
from services.models import describe_source
from services.sweep import context_from_params, json_safe, run_sweep, spec_from_params

logger = logging.getLogger(__name__)

router = APIRouter()


def _http_error(e: Exception) -> HTTPException:
    if isinstance(e, DomainError):
        return HTTPException(status_code=400, detail=str(e))
    logger.error("Numerical failure: %s", e, exc_info=True)
    return HTTPException(status_code=500, detail="numerical failure in the engine")


@router.get("/api/eval")
def get_eval(
    source: str = Query("qd", description="bell | qd | spdc"),
    bell: str = Query("phi+", description="phi+ | psi-"),
    xi: Optional[float] = Query(None, description="SPDC squeezing parameter, e.g. 0.755"),
    fss: float = Query(0.0, description="Fine-structure phase in radians"),
    p: float = Query(1.0, description="Survival probability after depolarization"),
    eta: float = Query(1.0, description="Detection efficiency"),
    nu: float = Query(0.0, description="Dark-count parameter"),
    binning: str = Query("standard", description="standard | vivoli"),
    angles: Optional[str] = Query(None, description="a1,a2,b1,b2[,a0] in radians"),
    backend: str = Query("gaussian", description="gaussian | fock"),
):
    """
    Evaluates one configuration.

    Returns:
        dict: The source parameters, eta, nu, binning and the full metrics report

    Raises:
        HTTPException: 400 on invalid parameters, 500 on numerical failures
    """
    params = dict(
        source=source, bell=bell, xi=xi, fss=fss, p=p, eta=eta, nu=nu, binning=binning, angles=angles, backend=backend
    )
    try:
        src, detector, plan, strategy, engine = context_from_params(params)
        report = evaluate(src, detector, plan, strategy, engine)
    except (DomainError, NumericalError) as e:
        raise _http_error(e)
    logger.info("Evaluated %s eta=%g nu=%g: S=%.6f", source, eta, nu, report.bell_s)
    return json_safe(
        {
            **describe_source(src),
            "eta": detector.eta,
            "nu": detector.nu,
            "binning": strategy.value,
            **report.to_dict(),
        }
    )


@router.get("/api/sweep")
def get_sweep(
    variable: str = Query(..., description="xi | eta | nu | p | fss"),
    start: float = Query(..., alias="from"),
    stop: float = Query(..., alias="to"),
    steps: int = Query(..., description="Number of swept values, >= 2"),
    source: str = Query("qd"),
    bell: str = Query("phi+"),
    xi: Optional[float] = Query(None),
    fss: float = Query(0.0),
    p: float = Query(1.0),
    eta: float = Query(1.0),
    nu: float = Query(0.0),
    binning: str = Query("standard"),
    angles: Optional[str] = Query(None),
    backend: str = Query("gaussian"),
):
    """
    Runs a sweep and returns every row.

    Returns:
        dict: {"variable", "header", "rows"} with rows in ascending swept value
    """
    params = dict(
        variable=variable, start=start, stop=stop, steps=steps, source=source, bell=bell, xi=xi,
        fss=fss, p=p, eta=eta, nu=nu, binning=binning, angles=angles, backend=backend,
    )
    try:
        spec = spec_from_params(params)
        rows = run_sweep(spec)
    except (DomainError, NumericalError) as e:
        raise _http_error(e)
    header = {k: list(v) if isinstance(v, tuple) else v for k, v in spec.header().items()}
    return json_safe(
        {
            "variable": spec.variable,
            "header": header,
            "rows": [row.to_dict(spec.variable) for row in rows],
        }
    )
