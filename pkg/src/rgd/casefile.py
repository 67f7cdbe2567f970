"""JSON case files: strict parsing with path-qualified errors.

Field names carry explicit units. Unknown fields are rejected with their
JSON path; malformed JSON surfaces the decoder's line/column.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path
from typing import Any, Optional

from .model import Agent, CaseOptions, DispatchCase, Generator, Line, validate_case

SCHEMA_VERSION = 1


class CaseFileError(ValueError):
    """Raised on schema violations; message carries the JSON path."""


_GEN_FIELDS = {
    "id", "on_status", "output_cost_usd_per_mwh",
    "reserve_up_cost_usd_per_mwh", "reserve_down_cost_usd_per_mwh",
    "adjust_up_cost_usd_per_mwh", "adjust_down_cost_usd_per_mwh",
    "p_min_mw", "p_max_mw", "reserve_up_cap_mw", "reserve_down_cap_mw",
    "ramp_up_mw", "ramp_down_mw", "ptdf",
}
_AGENT_FIELDS = {
    "id", "kind", "prior_mean_mw", "prior_variance_mw2", "prediction_mw",
    "truth_mw", "ptdf",
}
_LINE_FIELDS = {"id", "capacity_mw"}
_SOLVER_FIELDS = {
    "mp_breakpoints", "eps", "rel_gap", "iter_cap", "feas_tol", "tau_max",
    "big_m_override",
}
_TOP_FIELDS = {
    "schema_version", "name", "horizon_periods", "confidence_delta",
    "confidence_xi", "prediction_cost_m_usd_mw2",
    "curtailment_penalty_usd_per_mwh", "mapping_penalty_usd_per_mw2",
    "solver", "generators", "agents", "lines",
}


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise CaseFileError(f"unknown field at {path}.{key}")


def _need(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise CaseFileError(f"missing field at {path}.{key}")
    return obj[key]


def _num(obj: dict, key: str, path: str) -> float:
    v = _need(obj, key, path)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise CaseFileError(f"expected a number at {path}.{key}")
    return float(v)


def _series(obj: dict, key: str, path: str, required: bool = True):
    if key not in obj:
        if required:
            raise CaseFileError(f"missing field at {path}.{key}")
        return None
    v = obj[key]
    if not isinstance(v, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
    ):
        raise CaseFileError(f"expected a list of numbers at {path}.{key}")
    return tuple(float(x) for x in v)


def _parse_generator(obj: dict, path: str) -> Generator:
    if not isinstance(obj, dict):
        raise CaseFileError(f"expected an object at {path}")
    _reject_unknown(obj, _GEN_FIELDS, path)
    status = _need(obj, "on_status", path)
    if isinstance(status, (int, float)) and not isinstance(status, bool):
        raise CaseFileError(f"expected a list at {path}.on_status")
    return Generator(
        id=str(_need(obj, "id", path)),
        on_status=tuple(int(s) for s in status),
        output_cost=_num(obj, "output_cost_usd_per_mwh", path),
        reserve_up_cost=_num(obj, "reserve_up_cost_usd_per_mwh", path),
        reserve_down_cost=_num(obj, "reserve_down_cost_usd_per_mwh", path),
        adjust_up_cost=_num(obj, "adjust_up_cost_usd_per_mwh", path),
        adjust_down_cost=_num(obj, "adjust_down_cost_usd_per_mwh", path),
        p_min=_num(obj, "p_min_mw", path),
        p_max=_num(obj, "p_max_mw", path),
        reserve_up_cap=_num(obj, "reserve_up_cap_mw", path),
        reserve_down_cap=_num(obj, "reserve_down_cap_mw", path),
        ramp_up=_num(obj, "ramp_up_mw", path),
        ramp_down=_num(obj, "ramp_down_mw", path),
        ptdf=_series(obj, "ptdf", path),
    )


def _parse_agent(obj: dict, path: str) -> Agent:
    if not isinstance(obj, dict):
        raise CaseFileError(f"expected an object at {path}")
    _reject_unknown(obj, _AGENT_FIELDS, path)
    variance = _need(obj, "prior_variance_mw2", path)
    if isinstance(variance, list):
        # format accepts per-period variance, the model does not
        vals = [float(v) for v in variance]
        collapsed = sum(vals) / len(vals)
        warnings.warn(
            f"{path}.prior_variance_mw2: per-period variances collapsed "
            f"to their mean {collapsed:g}",
            stacklevel=2,
        )
        variance = collapsed
    elif not isinstance(variance, (int, float)) or isinstance(variance, bool):
        raise CaseFileError(f"expected a number or list at {path}.prior_variance_mw2")
    return Agent(
        id=str(_need(obj, "id", path)),
        kind=str(_need(obj, "kind", path)),
        prior_mean=_series(obj, "prior_mean_mw", path),
        prior_variance=float(variance),
        prediction=_series(obj, "prediction_mw", path),
        truth=_series(obj, "truth_mw", path, required=False),
        ptdf=_series(obj, "ptdf", path),
    )


def _parse_line(obj: dict, path: str) -> Line:
    if not isinstance(obj, dict):
        raise CaseFileError(f"expected an object at {path}")
    _reject_unknown(obj, _LINE_FIELDS, path)
    return Line(id=str(_need(obj, "id", path)), capacity=_num(obj, "capacity_mw", path))


def _parse_options(obj: dict, path: str) -> CaseOptions:
    _reject_unknown(obj, _SOLVER_FIELDS, path)
    base = CaseOptions()
    return CaseOptions(
        mp_breakpoints=int(obj.get("mp_breakpoints", base.mp_breakpoints)),
        eps=obj.get("eps", base.eps),
        rel_gap=obj.get("rel_gap", base.rel_gap),
        iter_cap=int(obj.get("iter_cap", base.iter_cap)),
        feas_tol=float(obj.get("feas_tol", base.feas_tol)),
        tau_max=float(obj.get("tau_max", base.tau_max)),
        big_m_override=obj.get("big_m_override", base.big_m_override),
    )


def case_from_dict(doc: dict) -> DispatchCase:
    if not isinstance(doc, dict):
        raise CaseFileError("expected a JSON object at the top level")
    _reject_unknown(doc, _TOP_FIELDS, "$")
    version = _need(doc, "schema_version", "$")
    if version != SCHEMA_VERSION:
        raise CaseFileError(f"unsupported schema_version {version!r} at $.schema_version")
    gens = _need(doc, "generators", "$")
    agents = _need(doc, "agents", "$")
    lines = _need(doc, "lines", "$")
    if not isinstance(gens, list) or not isinstance(agents, list) or not isinstance(lines, list):
        raise CaseFileError("generators, agents and lines must be arrays")
    case = DispatchCase(
        name=str(doc.get("name", "case")),
        generators=tuple(
            _parse_generator(g, f"$.generators[{k}]") for k, g in enumerate(gens)
        ),
        agents=tuple(_parse_agent(a, f"$.agents[{k}]") for k, a in enumerate(agents)),
        lines=tuple(_parse_line(l, f"$.lines[{k}]") for k, l in enumerate(lines)),
        horizon=int(_num(doc, "horizon_periods", "$")),
        delta=_num(doc, "confidence_delta", "$"),
        xi=_num(doc, "confidence_xi", "$"),
        prediction_cost_m=_num(doc, "prediction_cost_m_usd_mw2", "$"),
        curtailment_penalty=_num(doc, "curtailment_penalty_usd_per_mwh", "$"),
        mapping_penalty=float(doc.get("mapping_penalty_usd_per_mw2", 1e4)),
        options=_parse_options(doc.get("solver", {}), "$.solver"),
    )
    report = validate_case(case)
    if not report.ok:
        raise CaseFileError("invalid case: " + "; ".join(report.violations))
    return case


def load_case(path: str | Path) -> DispatchCase:
    text = Path(path).read_text()
    doc = json.loads(text)          # json.JSONDecodeError carries line/column
    return case_from_dict(doc)


def case_to_dict(case: DispatchCase) -> dict:
    opts = case.options
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "horizon_periods": case.horizon,
        "confidence_delta": case.delta,
        "confidence_xi": case.xi,
        "prediction_cost_m_usd_mw2": case.prediction_cost_m,
        "curtailment_penalty_usd_per_mwh": case.curtailment_penalty,
        "mapping_penalty_usd_per_mw2": case.mapping_penalty,
        "solver": {
            "mp_breakpoints": opts.mp_breakpoints,
            "eps": opts.eps,
            "rel_gap": opts.rel_gap,
            "iter_cap": opts.iter_cap,
            "feas_tol": opts.feas_tol,
            "tau_max": opts.tau_max,
            "big_m_override": opts.big_m_override,
        },
        "generators": [
            {
                "id": g.id,
                "on_status": list(g.on_status),
                "output_cost_usd_per_mwh": g.output_cost,
                "reserve_up_cost_usd_per_mwh": g.reserve_up_cost,
                "reserve_down_cost_usd_per_mwh": g.reserve_down_cost,
                "adjust_up_cost_usd_per_mwh": g.adjust_up_cost,
                "adjust_down_cost_usd_per_mwh": g.adjust_down_cost,
                "p_min_mw": g.p_min,
                "p_max_mw": g.p_max,
                "reserve_up_cap_mw": g.reserve_up_cap,
                "reserve_down_cap_mw": g.reserve_down_cap,
                "ramp_up_mw": g.ramp_up,
                "ramp_down_mw": g.ramp_down,
                "ptdf": list(g.ptdf),
            }
            for g in case.generators
        ],
        "agents": [
            {
                "id": a.id,
                "kind": a.kind,
                "prior_mean_mw": list(a.prior_mean),
                "prior_variance_mw2": a.prior_variance,
                "prediction_mw": list(a.prediction),
                **({"truth_mw": list(a.truth)} if a.truth is not None else {}),
                "ptdf": list(a.ptdf),
            }
            for a in case.agents
        ],
        "lines": [{"id": l.id, "capacity_mw": l.capacity} for l in case.lines],
    }
    return doc


def save_case(case: DispatchCase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2, sort_keys=True) + "\n")


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
