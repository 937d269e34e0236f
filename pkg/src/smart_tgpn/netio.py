"""Net description files (JSON).

Top-level keys: places[], transitions[] (id, guard expression string,
interval [alpha, beta] with an "inf" sentinel, timing, role, optional
priority), arcs[] (from, to, weight), initial_marking{}, refinable[].
Optional sections: subnets[] (hierarchical fragments with entry / exit /
success_exit places and interface transition names) and smart{} (role
annotations a builder wrote, letting a loaded net drive the SMART
monitors and structure checks).
"""

from __future__ import annotations

import json
from typing import Any

from .builder import (
    AgentView,
    Hysteresis,
    SmartConfig,
    SmartNet,
    invalid_expr,
    unrecoverable_expr,
)
from .guards import guard_to_string, parse_guard
from .hierarchy import InterfaceSpec, Subnet
from .net import Arc, INF, Net, PriorityClass, TransitionRecord


class NetDocumentError(ValueError):
    pass


def _interval_out(alpha: int, beta: float) -> list:
    return [alpha, "inf" if beta == INF else int(beta)]


def _interval_in(raw: Any, where: str) -> tuple[int, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise NetDocumentError(f"{where}: interval must be [alpha, beta]")
    alpha = int(raw[0])
    beta = INF if raw[1] in ("inf", None) else float(raw[1])
    return alpha, beta


def net_to_document(net: Net) -> dict:
    return {
        "places": list(net.places),
        "transitions": [
            {
                "id": tid,
                "guard": guard_to_string(record.guard),
                "interval": _interval_out(record.alpha, record.beta),
                "timing": record.timing,
                "role": record.role,
                "priority": record.priority.name.lower(),
            }
            for tid, record in sorted(net.transitions.items())
        ],
        "arcs": [
            {"from": arc.source, "to": arc.target, "weight": arc.weight} for arc in net.arcs
        ],
        "initial_marking": {p: c for p, c in sorted(net.initial_marking.items()) if c},
        "refinable": sorted(net.refinable),
    }


def net_from_document(doc: dict) -> Net:
    try:
        places = list(doc["places"])
        raw_transitions = doc["transitions"]
        raw_arcs = doc["arcs"]
    except KeyError as missing:
        raise NetDocumentError(f"net document lacks required key {missing}") from None
    transitions = {}
    for raw in raw_transitions:
        tid = raw["id"]
        alpha, beta = _interval_in(raw.get("interval", [0, "inf"]), tid)
        priority = None
        if "priority" in raw:
            priority = PriorityClass[raw["priority"].upper().replace("-", "_")]
        transitions[tid] = TransitionRecord(
            tid,
            parse_guard(raw.get("guard", "true")),
            alpha,
            beta,
            raw.get("timing", "weak"),
            raw.get("role", "internal"),
            priority,
        )
    arcs = [Arc(raw["from"], raw["to"], int(raw.get("weight", 1))) for raw in raw_arcs]
    return Net(
        places,
        transitions,
        arcs,
        {p: int(c) for p, c in doc.get("initial_marking", {}).items()},
        set(doc.get("refinable", [])),
    )


def subnet_from_document(doc: dict) -> tuple[str, Subnet, InterfaceSpec]:
    name = doc.get("name", "subnet")
    sub = Subnet(
        net=net_from_document(doc),
        entry=list(doc.get("entry", [])),
        exit=list(doc.get("exit", [])),
        success_exit=list(doc.get("success_exit", [])),
    )
    iface = InterfaceSpec(
        in_transition=doc.get("in_transition"),
        out_transition=doc.get("out_transition"),
        exit_guard=parse_guard(doc.get("exit_guard", "true")),
    )
    return name, sub, iface


def _config_to_document(cfg: SmartConfig) -> dict:
    return {
        "delta_s": cfg.delta_s,
        "delta_sr": cfg.delta_sr,
        "delta_m": cfg.delta_m,
        "delta_mr": cfg.delta_mr,
        "delta_a": cfg.delta_a,
        "delta_ar": cfg.delta_ar,
        "budget_m": cfg.budget_m,
        "budget_a": cfg.budget_a,
        "theta": cfg.theta,
        "gating_mode": cfg.gating_mode,
        "hysteresis": {
            "enabled": cfg.hysteresis.enabled,
            "theta_up": cfg.hysteresis.theta_up,
            "theta_down": cfg.hysteresis.theta_down,
            "debounce_up": cfg.hysteresis.debounce_up,
            "debounce_down": cfg.hysteresis.debounce_down,
        },
    }


def config_from_document(doc: dict) -> SmartConfig:
    hyst = doc.get("hysteresis", {})
    allowed = {
        "delta_s", "delta_sr", "delta_m", "delta_mr", "delta_a", "delta_ar",
        "budget_m", "budget_a", "theta", "gating_mode",
    }
    unknown = set(doc) - allowed - {"hysteresis"}
    if unknown:
        raise NetDocumentError(f"unknown config keys: {sorted(unknown)}")
    return SmartConfig(
        **{k: v for k, v in doc.items() if k != "hysteresis"},
        hysteresis=Hysteresis(**hyst) if hyst else Hysteresis(),
    )


def smart_to_document(smart: SmartNet) -> dict:
    doc = net_to_document(smart.net)
    doc["smart"] = {
        "config": _config_to_document(smart.config),
        "gating_mode": smart.gating_mode,
        "coordination_places": list(smart.coordination_places),
        "agents": [
            {
                "id": view.agent_id,
                "suffix": view.suffix,
                "config": _config_to_document(view.config),
            }
            for view in smart.agents
        ],
    }
    return doc


def smart_from_document(doc: dict) -> SmartNet:
    net = net_from_document(doc)
    meta = doc.get("smart")
    if meta is None:
        raise NetDocumentError("net document has no smart{} annotations")
    agents = []
    for raw in meta["agents"]:
        cfg = config_from_document(raw["config"])
        suffix = raw.get("suffix", "")
        agents.append(
            AgentView(
                agent_id=raw.get("id"),
                suffix=suffix,
                config=cfg,
                mode_places={k: f"P_{k}{suffix}" for k in ("S", "M", "A", "R")},
                mode_switches={
                    key: key + suffix
                    for key in ("t_SM", "t_SR", "t_MS", "t_MA", "t_MR", "t_AS", "t_AR", "t_RS")
                },
                outputs=[f"t_out{suffix}"],
                want_place=f"P_want{suffix}",
                invalid=invalid_expr(cfg.theta, suffix),
                unrecoverable=unrecoverable_expr(suffix),
            )
        )
    return SmartNet(
        net,
        config_from_document(meta["config"]),
        agents,
        list(meta.get("coordination_places", [])),
        meta.get("gating_mode", "structural+guarded"),
    )


def load_net(path: str) -> Net:
    with open(path, encoding="utf-8") as fh:
        return net_from_document(json.load(fh))


def load_smart(path: str) -> SmartNet:
    with open(path, encoding="utf-8") as fh:
        return smart_from_document(json.load(fh))


def save_net(net: Net, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net_to_document(net), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_smart(smart: SmartNet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(smart_to_document(smart), fh, indent=2, sort_keys=True)
        fh.write("\n")
