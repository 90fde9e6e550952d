"""Scenario configuration: schema, validation, and the built-in 4-node case.

A scenario is a single JSON document.  Matrices are nested arrays of rows;
complex eigenvalue targets are [re, im] pairs (plain numbers mean real).
Every invariant a run relies on is validated here with a named error, so
failures surface at load time rather than mid-protocol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .consensus import validate_weights
from .exceptions import ConfigError, DisconnectedGraphError, InvalidInputError
from .gains import DEFAULT_STABILITY_MARGIN, conjugate_closed
from .graph import Digraph, digraph_from_weight_matrix, is_strongly_connected, out_weight_matrix
from .plant import LtiSystem, require_jointly_controllable_observable

PRECISIONS = ("double", "extended", "quad")


def _parse_targets(raw, name: str) -> tuple[complex, ...]:
    out = []
    for v in raw:
        if isinstance(v, (int, float)):
            out.append(complex(v))
        elif isinstance(v, (list, tuple)) and len(v) == 2:
            out.append(complex(float(v[0]), float(v[1])))
        else:
            raise ConfigError(f"{name}: targets must be numbers or [re, im] pairs")
    return tuple(out)


def _targets_to_json(values) -> list:
    out = []
    for v in values:
        v = complex(v)
        out.append(v.real if v.imag == 0 else [v.real, v.imag])
    return out


@dataclass
class ScenarioConfig:
    """Validated inputs for one estimation-and-control scenario."""

    name: str
    graph: Digraph
    weights: np.ndarray
    plant: LtiSystem
    controller_targets: tuple[complex, ...]
    observer_targets: tuple[complex, ...]
    priorities: dict[int, list[int]] = field(default_factory=dict)
    election_values: list[float] | None = None
    stability_margin: float = DEFAULT_STABILITY_MARGIN
    rank_rel_tol: float = 1e-8
    x0: np.ndarray | None = None
    xhat0: np.ndarray | None = None       # (N, n); zeros when omitted
    horizon: int = 60
    taus: tuple[float, ...] = (0.1, 1.0, 10.0)
    seed: int = 0
    precision: str = "double"

    def validate(self) -> "ScenarioConfig":
        g, sys = self.graph, self.plant
        if sys.agent_count != g.node_count:
            raise ConfigError(
                f"{sys.agent_count} agents in plant but {g.node_count} graph nodes"
            )
        if not is_strongly_connected(g):
            raise DisconnectedGraphError("graph is not strongly connected")
        try:
            validate_weights(g, self.weights)
        except InvalidInputError as exc:
            raise ConfigError(f"weights: {exc}") from None
        require_jointly_controllable_observable(sys)
        for nm, targets in (
            ("controller_targets", self.controller_targets),
            ("observer_targets", self.observer_targets),
        ):
            if not conjugate_closed(targets):
                raise ConfigError(f"{nm} must be conjugate-closed")
            if len(targets) > sys.n:
                raise ConfigError(f"{nm}: more targets than eigenvalues ({sys.n})")
            if any(abs(complex(t)) >= 1.0 for t in targets):
                raise ConfigError(f"{nm} must lie strictly inside the unit disk")
        for j, order in self.priorities.items():
            outs = set(g.out_neighbors(j))
            if not set(order) <= outs:
                raise ConfigError(f"priorities[{j}] lists non-out-neighbors")
        if self.election_values is not None and len(self.election_values) != g.node_count:
            raise ConfigError("election_values must have one entry per node")
        if self.x0 is not None and self.x0.shape != (sys.n,):
            raise ConfigError(f"x0 must have length {sys.n}")
        if self.xhat0 is not None and self.xhat0.shape != (g.node_count, sys.n):
            raise ConfigError(f"xhat0 must be {g.node_count} x {sys.n}")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")
        if any(t <= 0 for t in self.taus):
            raise ConfigError("tau values must be positive")
        return self

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "graph": {"weight_matrix": self.weights.tolist()},
            "plant": {
                "a": self.plant.a.tolist(),
                "b": [b.tolist() for b in self.plant.b_list],
                "c": [c.tolist() for c in self.plant.c_list],
            },
            "controller_targets": _targets_to_json(self.controller_targets),
            "observer_targets": _targets_to_json(self.observer_targets),
            "priorities": {str(k): v for k, v in self.priorities.items()},
            "stability_margin": self.stability_margin,
            "rank_rel_tol": self.rank_rel_tol,
            "horizon": self.horizon,
            "taus": list(self.taus),
            "seed": self.seed,
            "precision": self.precision,
        }
        if self.election_values is not None:
            d["election_values"] = list(self.election_values)
        if self.x0 is not None:
            d["x0"] = self.x0.tolist()
        if self.xhat0 is not None:
            d["xhat0"] = self.xhat0.tolist()
        return d


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    try:
        graph_doc = doc["graph"]
        plant_doc = doc["plant"]
    except KeyError as exc:
        raise ConfigError(f"missing required section {exc}") from None

    if "weight_matrix" in graph_doc:
        weights = np.asarray(graph_doc["weight_matrix"], dtype=float)
        g = digraph_from_weight_matrix(weights)
        if "edges" in graph_doc:
            declared = Digraph(
                int(graph_doc.get("node_count", weights.shape[0])),
                tuple(tuple(e) for e in graph_doc["edges"]),
            )
            if declared.edges != g.edges:
                raise ConfigError("explicit edges disagree with weight-matrix support")
    elif "edges" in graph_doc:
        g = Digraph(
            int(graph_doc["node_count"]),
            tuple(tuple(e) for e in graph_doc["edges"]),
        )
        weights = out_weight_matrix(g)
    else:
        raise ConfigError("graph needs either weight_matrix or edges")

    try:
        plant = LtiSystem(
            a=np.asarray(plant_doc["a"], dtype=float),
            b_list=tuple(np.asarray(b, dtype=float) for b in plant_doc["b"]),
            c_list=tuple(np.asarray(c, dtype=float) for c in plant_doc["c"]),
        )
    except KeyError as exc:
        raise ConfigError(f"plant section missing {exc}") from None
    except InvalidInputError as exc:
        raise ConfigError(f"plant: {exc}") from None

    cfg = ScenarioConfig(
        name=doc.get("name", "scenario"),
        graph=g,
        weights=weights,
        plant=plant,
        controller_targets=_parse_targets(
            doc.get("controller_targets", ()), "controller_targets"
        ),
        observer_targets=_parse_targets(
            doc.get("observer_targets", ()), "observer_targets"
        ),
        priorities={int(k): list(v) for k, v in doc.get("priorities", {}).items()},
        election_values=list(doc["election_values"])
        if "election_values" in doc
        else None,
        stability_margin=float(doc.get("stability_margin", DEFAULT_STABILITY_MARGIN)),
        rank_rel_tol=float(doc.get("rank_rel_tol", 1e-8)),
        x0=np.asarray(doc["x0"], dtype=float) if "x0" in doc else None,
        xhat0=np.asarray(doc["xhat0"], dtype=float) if "xhat0" in doc else None,
        horizon=int(doc.get("horizon", 60)),
        taus=tuple(float(t) for t in doc.get("taus", (0.1, 1.0, 10.0))),
        seed=int(doc.get("seed", 0)),
        precision=str(doc.get("precision", "double")),
    )
    return cfg.validate()


def load_scenario(path_or_name) -> ScenarioConfig:
    """Load a scenario from a JSON file or by built-in name."""
    name = str(path_or_name)
    if name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name]()
    path = Path(path_or_name)
    if not path.exists():
        raise ConfigError(
            f"no such scenario file {path} (built-ins: {sorted(BUILTIN_SCENARIOS)})"
        )
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def paper_4node() -> ScenarioConfig:
    """The built-in 4-node scenario: weights, plant, and target sets.

    Eight states, one actuated and one sensed state per agent; no agent is
    controllable or observable alone, jointly the system is both.  Token
    order v1 -> v2 -> v3 -> v4 is realized by electing node 0 leader
    (descending election values) and the default ascending-id priorities.
    """
    weights = np.array(
        [
            [1 / 3, 0, 1 / 4, 1 / 3],
            [1 / 3, 1 / 2, 1 / 4, 0],
            [0, 1 / 2, 1 / 4, 1 / 3],
            [1 / 3, 0, 1 / 4, 1 / 3],
        ]
    )
    a = np.array(
        [
            [1, 0.5, 0, 0, 3, 0, 0, 0],
            [0.5, 1, 0, 0, 0, 0, 0, 0],
            [0, 0, 1, 0.5, 0, 0, 0, 0],
            [0, 0, 0.8, 1, 0, 0, 0, 0],
            [0, 0, 0, 0, 1, 0.5, 0, 0],
            [0, 0, 0, 0, 0.6, 1, 0, 0],
            [0, 0, 0, 0, 0, 0, 0.7, 0.1],
            [1, 0, 0, 0, 0, 0, 0.2, 0.7],
        ],
        dtype=float,
    )
    def unit_col(i):
        v = np.zeros((8, 1))
        v[i, 0] = 1.0
        return v

    def unit_row(i):
        v = np.zeros((1, 8))
        v[0, i] = 1.0
        return v

    b_list = (unit_col(1), unit_col(3), unit_col(5), unit_col(7))
    c_list = (unit_row(0), unit_row(2), unit_row(4), unit_row(6))
    cfg = ScenarioConfig(
        name="paper-4node",
        graph=digraph_from_weight_matrix(weights),
        weights=weights,
        plant=LtiSystem(a=a, b_list=b_list, c_list=c_list),
        controller_targets=tuple(complex(0.60 + 0.01 * i) for i in range(8)),
        observer_targets=tuple(complex(0.20 + 0.01 * i) for i in range(8)),
        election_values=[4.0, 3.0, 2.0, 1.0],   # node 0 wins -> leader v1
        x0=np.array([2.0, -1.0, 1.5, 0.5, -2.0, 1.0, 3.0, -0.5]),
        horizon=60,
        taus=(0.1, 1.0, 10.0),
        precision="quad",
    )
    return cfg.validate()


BUILTIN_SCENARIOS = {"paper-4node": paper_4node}
