"""
Model and bounds files.

Models are YAML documents. A flat document spells out every element of the
decision problem; a `factored` block compiles to the three-component system
and a `deck` block to the corroding deck, and an optional `finite_horizon`
block augments any flat model with a time index and a terminal state. Parse
errors carry the line of the offending top-level key.

The plain-text POMDP interchange format is read by `read_pomdp_text`, and
solved bounds travel in versioned `.npz` archives.
"""

import dataclasses
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import yaml
from scipy import sparse

from .bounds import UPPER_CAPACITY, ValueBounds
from .deck import DEFAULT_HORIZON, build_deck_model, synth_deck_spec
from .errors import ModelValidationError
from .model import Belief, Matrix, PomdpModel
from .records import atomic_writer
from .three_component import COMPONENTS, ComponentSpec, SystemPenaltyTable, build_three_component
from .utils import logger

FORMAT_VERSION = 1
ARCHIVE_VERSION = 1

# Validation messages mentioning these fragments are reported at that key.
_ERROR_KEYS = (
    ("transition", "transition"),
    ("default_obs", "default_observation_model"),
    ("obs_model", "observation_actions"),
    ("observation action", "observation_actions"),
    ("reward_maintenance", "rewards"),
    ("reward_damage", "rewards"),
    ("reward_observation", "observation_actions"),
    ("allowed", "forbidden"),
    ("discount", "discount"),
    ("initial state", "initial_state"),
)


class _Document:
    """A parsed YAML mapping that remembers where each top-level key starts."""

    def __init__(self, text: str, source: str = "<model>"):
        try:
            self.data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ModelValidationError(
                f"{source}: {getattr(e, 'problem', None) or e}", None if mark is None else mark.line + 1
            ) from e
        if not isinstance(self.data, dict):
            raise ModelValidationError(f"{source}: a model file must be a mapping", 1)
        self.source = source
        self.lines: Dict[str, int] = {}
        if isinstance(node, yaml.MappingNode):
            self.lines = {key.value: key.start_mark.line + 1 for key, _ in node.value}

    def error(self, key: str, message: str) -> ModelValidationError:
        return ModelValidationError(f"{key}: {message}", self.lines.get(key))

    def require(self, key: str) -> Any:
        if key not in self.data:
            raise ModelValidationError(f"{self.source}: missing required key '{key}'")
        return self.data[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.data.get(key, default)


def _names(doc: _Document, key: str, value: Any) -> Tuple[str, ...]:
    if isinstance(value, int) and not isinstance(value, bool):
        if value < 1:
            raise doc.error(key, "count must be positive")
        return tuple(str(i) for i in range(value))
    if not isinstance(value, list) or not value:
        raise doc.error(key, "expected a non-empty list of names or a count")
    names = tuple(str(v) for v in value)
    if len(set(names)) != len(names):
        raise doc.error(key, "names must be unique")
    return names


def _resolve(doc: _Document, key: str, names: Sequence[str], value: Any) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        if not 0 <= value < len(names):
            raise doc.error(key, f"index {value} out of range")
        return value
    if str(value) not in names:
        raise doc.error(key, f"unknown name '{value}'")
    return list(names).index(str(value))


def _matrix(doc: _Document, key: str, value: Any, rows: int, cols: int) -> Matrix:
    if value == "identity":
        if rows != cols:
            raise doc.error(key, "identity needs a square matrix")
        return np.eye(rows)
    if value == "uniform":
        return np.full((rows, cols), 1.0 / cols)
    if isinstance(value, dict) and "sparse" in value:
        triples = np.asarray(value["sparse"], dtype=float).reshape(-1, 3)
        r, c = triples[:, 0].astype(int), triples[:, 1].astype(int)
        if triples.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise doc.error(key, "sparse entry out of range")
        return sparse.csr_matrix((triples[:, 2], (r, c)), shape=(rows, cols))
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise doc.error(key, f"not a numeric matrix: {e}") from e
    if array.shape != (rows, cols):
        raise doc.error(key, f"matrix shape {array.shape} != {(rows, cols)}")
    return array


def _vector(doc: _Document, key: str, value: Any, n: int) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise doc.error(key, f"not numeric: {e}") from e
    if array.ndim == 0:
        return np.full(n, float(array))
    if array.shape != (n,):
        raise doc.error(key, f"expected {n} entries, got {array.size}")
    return array


def _labels(value: Any) -> dict:
    if not isinstance(value, dict):
        return {}
    return {str(k): tuple(v) if isinstance(v, list) else v for k, v in value.items()}


def _flat_model(doc: _Document) -> PomdpModel:
    states = _names(doc, "states", doc.require("states"))
    n = len(states)
    maintenance = _names(doc, "maintenance_actions", doc.require("maintenance_actions"))

    entries = doc.get("observation_actions") or [{"name": "none", "observations": ["none"]}]
    if not isinstance(entries, list):
        raise doc.error("observation_actions", "expected a list of observation actions")
    observation_actions, action_observations, obs_model, costs = [], [], [], []
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry:
            raise doc.error("observation_actions", "every observation action needs a name")
        outcomes = _names(doc, "observation_actions", entry.get("observations", ["none"]))
        default_model = np.ones((n, 1)) if len(outcomes) == 1 else None
        if "model" not in entry and default_model is None:
            raise doc.error("observation_actions", f"action '{entry['name']}' needs a model")
        observation_actions.append(str(entry["name"]))
        action_observations.append(outcomes)
        obs_model.append(
            default_model if "model" not in entry else _matrix(doc, "observation_actions", entry["model"], n, len(outcomes))
        )
        costs.append(_vector(doc, "observation_actions", entry.get("cost", 0.0), n))
    if len(set(observation_actions)) != len(observation_actions):
        raise doc.error("observation_actions", "names must be unique")

    default_observations = _names(doc, "default_observations", doc.get("default_observations", ["none"]))
    if "default_observation_model" in doc.data:
        default_obs_model = _matrix(
            doc, "default_observation_model", doc.data["default_observation_model"], n, len(default_observations)
        )
    elif len(default_observations) == 1:
        default_obs_model = np.ones((n, 1))
    else:
        raise doc.error("default_observations", "an informative default channel needs default_observation_model")

    transitions = doc.require("transition")
    if not isinstance(transitions, dict):
        raise doc.error("transition", "expected one matrix per maintenance action")
    transitions = {str(k): v for k, v in transitions.items()}
    missing = [name for name in maintenance if name not in transitions]
    if missing:
        raise doc.error("transition", f"missing matrices for {', '.join(missing)}")
    transition = tuple(_matrix(doc, "transition", transitions[name], n, n) for name in maintenance)

    rewards = doc.get("rewards", {}) or {}
    if not isinstance(rewards, dict):
        raise doc.error("rewards", "expected a mapping with maintenance and damage entries")
    per_action = rewards.get("maintenance", {}) or {}
    if not isinstance(per_action, dict):
        raise doc.error("rewards", "maintenance rewards must map action names to vectors")
    per_action = {str(k): v for k, v in per_action.items()}
    unknown = set(per_action) - set(maintenance)
    if unknown:
        raise doc.error("rewards", f"rewards for unknown actions {', '.join(sorted(map(str, unknown)))}")
    reward_maintenance = np.column_stack([_vector(doc, "rewards", per_action.get(name, 0.0), n) for name in maintenance])

    allowed = np.ones((len(maintenance), len(observation_actions)), dtype=bool)
    for pair in doc.get("forbidden", []) or []:
        if not isinstance(pair, list) or len(pair) != 2:
            raise doc.error("forbidden", "expected [maintenance, observation] pairs")
        allowed[
            _resolve(doc, "forbidden", maintenance, pair[0]),
            _resolve(doc, "forbidden", observation_actions, pair[1]),
        ] = False

    try:
        return PomdpModel(
            states=states,
            maintenance_actions=maintenance,
            observation_actions=tuple(observation_actions),
            default_observations=default_observations,
            action_observations=tuple(action_observations),
            transition=transition,
            default_obs_model=default_obs_model,
            obs_model=tuple(obs_model),
            reward_maintenance=reward_maintenance,
            reward_observation=np.column_stack(costs),
            reward_damage=_vector(doc, "rewards", rewards.get("damage", 0.0), n),
            discount=float(doc.require("discount")),
            allowed=allowed,
            initial_state=_resolve(doc, "initial_state", states, doc.get("initial_state", 0)),
            name=str(doc.get("name", "")),
            labels=_labels(doc.get("labels")),
        )
    except ModelValidationError as e:
        if e.line is not None:
            raise
        message = str(e)
        key = next((key for fragment, key in _ERROR_KEYS if fragment in message), None)
        raise ModelValidationError(message, doc.lines.get(key)) from e


def _factored_model(doc: _Document, block: dict) -> PomdpModel:
    components = COMPONENTS
    if "components" in block:
        try:
            components = tuple(
                ComponentSpec(
                    do_nothing=spec["do_nothing"],
                    **{k: spec[k] for k in ("repair", "observation_cost") if k in spec},
                    **{k: tuple(spec[k]) for k in ("repair_cost", "damage_cost") if k in spec},
                )
                for spec in block["components"]
            )
        except (KeyError, TypeError) as e:
            raise doc.error("factored", f"malformed component: {e}") from e
    penalties = None
    if "penalties" in block:
        penalties = SystemPenaltyTable(
            {tuple(sorted(int(c) for c in entry["conditions"])): float(entry["reward"]) for entry in block["penalties"]}
        )
    try:
        model = build_three_component(
            float(block.get("accuracy", 0.9)),
            setting=int(block.get("setting", 1)),
            default_channel=str(block.get("default_channel", "uninformative")),
            components=components,
            penalties=penalties,
            discount=float(block.get("discount", 0.95)),
        )
    except ModelValidationError as e:
        raise doc.error("factored", str(e)) from e
    return model.derive(name=str(doc.get("name", model.name)))


def _deck_model(doc: _Document, block: dict) -> PomdpModel:
    try:
        spec = synth_deck_spec(
            seed=block.get("seed", 0),
            rate_count=int(block.get("rate_count", 83)),
            horizon=int(block.get("horizon", DEFAULT_HORIZON)),
        )
        changes = {key: block[key] for key in ("deterioration", "minor_repair", "major_repair") if key in block}
        if "discount" in block:
            changes["discount"] = float(block["discount"])
        if changes:
            spec = dataclasses.replace(spec, **changes)
        model = build_deck_model(spec, setting=int(block.get("setting", 1)))
    except ModelValidationError as e:
        raise doc.error("deck", str(e)) from e
    return model.derive(name=str(doc.get("name", model.name)))


def augment_horizon(model: PomdpModel, length: int) -> PomdpModel:
    """
    Finite-horizon version of a model: states (s, t) for t < length, indexed
    s * length + t, plus an absorbing reward-free terminal reached after the
    last step.
    """
    if length < 1:
        raise ModelValidationError("finite horizon length must be at least 1")
    n = model.n_states
    shift = sparse.eye(length, length, k=1, format="csr")
    last = np.zeros(length)
    last[-1] = 1.0
    to_terminal = sparse.csr_matrix(np.tile(last, n)[:, None])
    transition = tuple(
        sparse.bmat(
            [[sparse.kron(sparse.csr_matrix(p), shift), to_terminal], [None, sparse.csr_matrix([[1.0]])]],
            format="csr",
        )
        for p in model.transition
    )

    def stretch(rows: np.ndarray, terminal_row: np.ndarray) -> np.ndarray:
        return np.vstack([np.repeat(np.asarray(rows), length, axis=0), terminal_row])

    def first_outcome(cols: int) -> np.ndarray:
        row = np.zeros((1, cols))
        row[0, 0] = 1.0
        return row

    obs_model = tuple(stretch(np.asarray(o.todense()) if sparse.issparse(o) else o, first_outcome(o.shape[1])) for o in model.obs_model)
    return model.derive(
        states=tuple(f"{s}@{t}" for s in model.states for t in range(length)) + ("terminal",),
        transition=transition,
        default_obs_model=stretch(model.default_obs_model, first_outcome(model.default_obs_model.shape[1])),
        obs_model=obs_model,
        reward_maintenance=stretch(model.reward_maintenance, np.zeros((1, model.n_maintenance))),
        reward_observation=stretch(model.reward_observation, np.zeros((1, model.n_observation_actions))),
        reward_damage=np.append(np.repeat(model.reward_damage, length), 0.0),
        initial_state=model.initial_state * length,
        name=f"{model.name}-h{length}" if model.name else f"h{length}",
    )


def parse_model(text: str, source: str = "<model>") -> PomdpModel:
    """
    Builds a model from YAML text.

    Raises:
        ModelValidationError: With the line of the offending key when known.
    """
    doc = _Document(text, source)
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise doc.error("format_version", f"unsupported format version {version}")
    if "factored" in doc.data:
        model = _factored_model(doc, doc.data["factored"] or {})
    elif "deck" in doc.data:
        model = _deck_model(doc, doc.data["deck"] or {})
    else:
        model = _flat_model(doc)
    horizon = doc.get("finite_horizon")
    if horizon:
        if not isinstance(horizon, dict) or "length" not in horizon:
            raise doc.error("finite_horizon", "expected a mapping with a length")
        if horizon.get("augment", True):
            model = augment_horizon(model, int(horizon["length"]))
    logger.debug(f"parsed {source}: {model.n_states} states, {len(model.action_pairs)} actions")
    return model


def read_model_file(path: str | Path) -> PomdpModel:
    path = Path(path)
    if path.suffix == ".pomdp":
        return read_pomdp_text(path.read_text(), name=path.stem)
    return parse_model(path.read_text(), str(path))


def _matrix_out(matrix: Matrix) -> Any:
    if sparse.issparse(matrix):
        coo = matrix.tocoo()
        return {"sparse": [[int(r), int(c), float(v)] for r, c, v in zip(coo.row, coo.col, coo.data)]}
    return np.asarray(matrix, dtype=float).tolist()


def model_document(model: PomdpModel) -> dict:
    """The flat YAML document of a model."""
    document: Dict[str, Any] = {"format_version": FORMAT_VERSION}
    if model.name:
        document["name"] = model.name
    document.update(
        {
            "discount": model.discount,
            "states": list(model.states),
            "initial_state": model.initial_state,
            "maintenance_actions": list(model.maintenance_actions),
            "observation_actions": [
                {
                    "name": name,
                    "observations": list(outcomes),
                    "cost": model.reward_observation[:, a_o].tolist(),
                    "model": _matrix_out(matrix),
                }
                for a_o, (name, outcomes, matrix) in enumerate(
                    zip(model.observation_actions, model.action_observations, model.obs_model)
                )
            ],
            "default_observations": list(model.default_observations),
            "default_observation_model": _matrix_out(model.default_obs_model),
            "transition": {name: _matrix_out(p) for name, p in zip(model.maintenance_actions, model.transition)},
            "rewards": {
                "maintenance": {
                    name: model.reward_maintenance[:, a_m].tolist() for a_m, name in enumerate(model.maintenance_actions)
                },
                "damage": model.reward_damage.tolist(),
            },
        }
    )
    forbidden = [
        [model.maintenance_actions[m], model.observation_actions[o]] for m, o in zip(*np.nonzero(~model.allowed))
    ]
    if forbidden:
        document["forbidden"] = forbidden
    if model.labels:
        document["labels"] = {k: list(v) if isinstance(v, tuple) else v for k, v in model.labels.items()}
    return document


def write_model_file(model: PomdpModel, path: str | Path):
    with atomic_writer(path) as handle:
        yaml.safe_dump(model_document(model), handle, sort_keys=False, default_flow_style=None, width=120)
    logger.info(f"wrote {path}")


def model_root_belief(model: PomdpModel) -> Belief:
    """The declared start distribution when one was imported, else the initial-state corner."""
    start = model.labels.get("start")
    if start is not None:
        return Belief(np.asarray(start, dtype=float))
    return model.root_belief()


class _PomdpText:
    """Line cursor over a plain-text POMDP file with comments removed."""

    def __init__(self, text: str):
        self.lines = [line.split("#", 1)[0] for line in text.splitlines()]
        self.index = 0
        self.pending: List[str] = []

    def error(self, message: str) -> ModelValidationError:
        return ModelValidationError(message, self.index + 1)

    def numbers(self, count: int) -> np.ndarray:
        values: List[float] = []
        while len(values) < count:
            if not self.pending:
                self.index += 1
                if self.index >= len(self.lines):
                    raise self.error(f"expected {count} numbers, found {len(values)}")
                self.pending = self.lines[self.index].split()
                continue
            token = self.pending.pop(0)
            try:
                values.append(float(token))
            except ValueError as e:
                raise self.error(f"expected a number, got '{token}'") from e
        return np.asarray(values)

    def keyword_or_numbers(self, count: int) -> np.ndarray | str:
        while not self.pending:
            self.index += 1
            if self.index >= len(self.lines):
                raise self.error(f"expected {count} numbers")
            self.pending = self.lines[self.index].split()
        if self.pending[0] in ("identity", "uniform"):
            return self.pending.pop(0)
        return self.numbers(count)


def _selection(cursor: _PomdpText, token: str, names: Sequence[str]) -> List[int]:
    if token == "*":
        return list(range(len(names)))
    if token in names:
        return [list(names).index(token)]
    if token.isdigit() and int(token) < len(names):
        return [int(token)]
    raise cursor.error(f"unknown name '{token}'")


def _enumeration(tokens: List[str]) -> Tuple[str, ...]:
    if len(tokens) == 1 and tokens[0].isdigit():
        return tuple(str(i) for i in range(int(tokens[0])))
    return tuple(tokens)


def read_pomdp_text(text: str, name: str = "", shift_rewards: bool = False) -> PomdpModel:
    """
    Imports a model in the plain-text POMDP interchange format.

    Every action becomes a maintenance action. The observation model must
    not depend on the action; it becomes the default channel and the model
    gets a single trivial observation action. Rewards are averaged over
    successor states and observations into R(s, a).

    Args:
        text: File contents.
        name: Model name.
        shift_rewards: Subtract the largest reward when some reward is
            positive, which leaves the optimal policy unchanged.

    Raises:
        ModelValidationError: On syntax errors, action-dependent observation
            models, an undiscounted problem or positive rewards without
            `shift_rewards`.
    """
    cursor = _PomdpText(text)
    discount, sign = None, 1.0
    states: Tuple[str, ...] = ()
    actions: Tuple[str, ...] = ()
    observations: Tuple[str, ...] = ()
    start: np.ndarray | None = None
    arrays: Dict[str, np.ndarray] = {}

    def allocate():
        if states and actions and observations and not arrays:
            n, k, m = len(states), len(actions), len(observations)
            arrays.update(T=np.zeros((k, n, n)), O=np.zeros((k, n, m)), R=np.zeros((k, n, n, m)))

    def require_arrays():
        if not arrays:
            raise cursor.error("states, actions and observations must be declared first")

    def fill(kind: str, fields: List[str], trailing: List[str]):
        require_arrays()
        target = arrays[kind]
        if not 1 <= len(fields) <= target.ndim:
            raise cursor.error(f"malformed {kind} entry")
        axes = {
            "T": (actions, states, states),
            "O": (actions, states, observations),
            "R": (actions, states, states, observations),
        }[kind]
        index = [_selection(cursor, token, names) for token, names in zip(fields, axes)]
        scale = sign if kind == "R" else 1.0
        cursor.pending = trailing
        if len(fields) == target.ndim:
            target[np.ix_(*index)] = cursor.numbers(1)[0] * scale
            return
        shape = target.shape[len(fields) :]
        block = cursor.keyword_or_numbers(int(np.prod(shape)))
        if isinstance(block, str):
            if block == "identity":
                if len(shape) != 2 or shape[0] != shape[1]:
                    raise cursor.error("identity needs a square block")
                block = np.eye(shape[0])
            else:
                block = np.full(shape, 1.0 / shape[-1])
        target[np.ix_(*index, *[np.arange(s) for s in shape])] = np.reshape(block, shape) * scale

    while cursor.index < len(cursor.lines):
        line = cursor.lines[cursor.index].strip()
        if line:
            head, _, rest = line.partition(":")
            head = head.strip()
            if head == "discount":
                discount = float(rest.split()[0])
            elif head == "values":
                sign = -1.0 if rest.split()[0] == "cost" else 1.0
            elif head in ("states", "actions", "observations"):
                names = _enumeration(rest.split())
                if not names:
                    raise cursor.error(f"empty {head} declaration")
                if head == "states":
                    states = names
                elif head == "actions":
                    actions = names
                else:
                    observations = names
                allocate()
            elif head.startswith("start"):
                if not states:
                    raise cursor.error("start needs the states declared first")
                tokens = rest.split()
                start = np.zeros(len(states))
                if head == "start include":
                    start[[_selection(cursor, t, states)[0] for t in tokens]] = 1.0
                elif head == "start exclude":
                    start[:] = 1.0
                    start[[_selection(cursor, t, states)[0] for t in tokens]] = 0.0
                elif tokens == ["uniform"]:
                    start[:] = 1.0
                elif len(tokens) == 1 and not _is_number(tokens[0]):
                    start[_selection(cursor, tokens[0], states)[0]] = 1.0
                else:
                    cursor.pending = tokens
                    start = cursor.numbers(len(states))
                if start.sum() <= 0.0:
                    raise cursor.error("start distribution is empty")
                start = start / start.sum()
            elif head in ("T", "O", "R"):
                parts = [p.strip() for p in line.split(":")[1:] if p.strip()]
                last = parts[-1].split() if parts else []
                fields = parts[:-1] + last[:1]
                fill(head, fields, last[1:])
            else:
                raise cursor.error(f"unknown directive '{head}'")
        cursor.pending = []
        cursor.index += 1

    if discount is None:
        raise ModelValidationError("missing discount declaration")
    if not 0.0 <= discount < 1.0:
        raise ModelValidationError(f"discount {discount} must lie in [0, 1)")
    require_arrays()
    T, O, R = arrays["T"], arrays["O"], arrays["R"]
    if np.any(np.abs(O - O[0]) > 1e-12):
        raise ModelValidationError("action-dependent observation models cannot be imported")
    rewards = np.einsum("aij,ajo,aijo->ia", T, O, R)
    if rewards.max() > 0.0:
        if not shift_rewards:
            raise ModelValidationError("positive rewards found; pass shift_rewards to subtract the largest one")
        logger.warning(f"shifting rewards by {-rewards.max():.9g}")
        rewards = rewards - rewards.max()
    labels = {}
    initial_state = 0
    if start is not None:
        initial_state = int(np.argmax(start))
        if start[initial_state] < 1.0:
            labels["start"] = tuple(start.tolist())
    n = len(states)
    return PomdpModel(
        states=states,
        maintenance_actions=actions,
        observation_actions=("none",),
        default_observations=observations,
        action_observations=(("none",),),
        transition=tuple(T),
        default_obs_model=O[0],
        obs_model=(np.ones((n, 1)),),
        reward_maintenance=rewards,
        reward_observation=np.zeros((n, 1)),
        reward_damage=np.zeros(n),
        discount=discount,
        initial_state=initial_state,
        name=name,
        labels=labels,
    )


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def save_bounds(path: str | Path, bounds: ValueBounds, model: PomdpModel, config_digest: str = ""):
    """Writes lower vectors and upper points to a versioned `.npz` archive."""
    with atomic_writer(path, "wb") as handle:
        np.savez_compressed(
            handle,
            format_version=np.array(ARCHIVE_VERSION),
            model_name=np.array(model.name),
            n_states=np.array(model.n_states),
            config_digest=np.array(config_digest),
            alphas=bounds.alphas,
            actions=np.asarray(bounds.actions, dtype=int).reshape(-1, 2),
            upper_corners=bounds.upper_corners,
            point_beliefs=bounds.point_beliefs,
            point_values=bounds.point_values,
            capacity=np.array(bounds.capacity),
        )
    logger.info(f"wrote {path}")


def load_bounds(path: str | Path, model: PomdpModel | None = None) -> ValueBounds:
    """
    Reads a bounds archive.

    Raises:
        ModelValidationError: On an unknown archive version or a state count
            that does not match `model`.
    """
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"])
        if version != ARCHIVE_VERSION:
            raise ModelValidationError(f"{path}: unsupported bounds archive version {version}")
        n_states = int(archive["n_states"])
        if model is not None and model.n_states != n_states:
            raise ModelValidationError(f"{path}: archive has {n_states} states, model has {model.n_states}")
        point_beliefs = archive["point_beliefs"].reshape(-1, n_states)
        return ValueBounds(
            archive["alphas"],
            [tuple(a) for a in archive["actions"].tolist()],
            archive["upper_corners"],
            point_beliefs if point_beliefs.shape[0] else None,
            archive["point_values"] if point_beliefs.shape[0] else None,
            int(archive["capacity"]) if "capacity" in archive.files else UPPER_CAPACITY,
        )
