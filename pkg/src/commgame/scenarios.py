"""Scenario bundles: loading, validation, and serialization.

A bundle is a directory of UTF-8 text files plus one JSON manifest (a file
literally named ``manifest``). Prompts stay as verbatim text files so they
can be diffed against their sources byte for byte. Five scenarios ship as
package data; new bundles are user-authorable with the same layout.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .thoughtbox import ThoughtBoxFormat

__all__ = [
    "ScenarioError",
    "MissingFile",
    "ParseError",
    "ValidationError",
    "UnknownScenario",
    "Rubric",
    "RecipientSpec",
    "Scenario",
    "Violation",
    "ScenarioRegistry",
    "load_registry",
    "validate_scenario",
    "save_scenario",
    "default_scenario_root",
]


class ScenarioError(Exception):
    pass


class MissingFile(ScenarioError):
    def __init__(self, path: str | Path):
        super().__init__(f"missing bundle file: {path}")
        self.path = str(path)


class ParseError(ScenarioError):
    def __init__(self, file: str | Path, position: int, detail: str = ""):
        msg = f"cannot parse {file} at offset {position}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.file = str(file)
        self.position = position


class ValidationError(ScenarioError):
    def __init__(self, scenario_id: str, reason: str):
        super().__init__(f"scenario {scenario_id!r}: {reason}")
        self.scenario_id = scenario_id
        self.reason = reason


class UnknownScenario(ScenarioError):
    def __init__(self, scenario_id: str):
        super().__init__(f"no scenario with id {scenario_id!r}")
        self.scenario_id = scenario_id


@dataclass(frozen=True)
class Rubric:
    """Per-scenario Likert rubric; criteria are (name, low anchor, high anchor)."""

    name: str
    criteria: tuple[tuple[str, str, str], ...]
    scale_min: int = 1
    scale_max: int = 7

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "criteria", tuple(tuple(c) for c in self.criteria)
        )


@dataclass(frozen=True)
class RecipientSpec:
    name: str
    persona_prompt: str
    expects_thought_box: bool


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    task_email: str
    judge_goal: str
    recipients: tuple[RecipientSpec, ...]
    forwarded_emails: tuple[str, ...] = ()
    game_master_prompt: str | None = None
    multi_turn: bool = False
    max_turns: int = 1
    judge_sees_thought_boxes: bool = False
    reveal_thought_boxes_post_verdict: bool = False
    ending_labels: tuple[str, ...] = ()
    rubrics: Mapping[str, Rubric] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "recipients", tuple(self.recipients))
        object.__setattr__(self, "forwarded_emails", tuple(self.forwarded_emails))
        object.__setattr__(self, "ending_labels", tuple(self.ending_labels))
        object.__setattr__(self, "rubrics", dict(self.rubrics))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return _scenario_key(self) == _scenario_key(other)

    def __hash__(self) -> int:
        return hash(self.id)

    def recipient(self, name: str) -> RecipientSpec:
        for spec in self.recipients:
            if spec.name == name:
                return spec
        raise KeyError(name)


def _scenario_key(s: Scenario) -> tuple:
    return (
        s.id,
        s.title,
        s.task_email,
        s.judge_goal,
        s.recipients,
        s.forwarded_emails,
        s.game_master_prompt,
        s.multi_turn,
        s.max_turns,
        s.judge_sees_thought_boxes,
        s.reveal_thought_boxes_post_verdict,
        s.ending_labels,
        tuple(sorted(s.rubrics.items())),
    )


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str


def validate_scenario(s: Scenario, fmt: ThoughtBoxFormat | None = None) -> list[Violation]:
    """Check every type invariant; violations are data, not exceptions."""
    fmt = fmt or ThoughtBoxFormat()
    out: list[Violation] = []
    if not s.id:
        out.append(Violation("id", "must be non-empty"))
    if not s.task_email.strip():
        out.append(Violation("task_email", "must be non-empty"))
    if not s.judge_goal.strip():
        out.append(Violation("judge_goal", "must be non-empty"))
    if not s.recipients:
        out.append(Violation("recipients", "at least one"))
    if s.max_turns < 1:
        out.append(Violation("max_turns", "must be positive"))
    if not s.multi_turn and s.max_turns != 1:
        out.append(Violation("max_turns", "must be 1"))
    for spec in s.recipients:
        if not spec.name:
            out.append(Violation("recipients", "recipient name must be non-empty"))
        if not spec.persona_prompt.strip():
            out.append(
                Violation("recipients", f"persona_prompt for {spec.name!r} is empty")
            )
        elif spec.expects_thought_box and fmt.marker not in spec.persona_prompt:
            out.append(
                Violation(
                    "recipients",
                    f"persona_prompt for {spec.name!r} lacks the thought-box "
                    f"marker {fmt.marker!r}",
                )
            )
    for rubric_name, rubric in s.rubrics.items():
        if rubric.scale_min >= rubric.scale_max:
            out.append(
                Violation("rubrics", f"{rubric_name!r} scale_min must be < scale_max")
            )
        if not rubric.criteria:
            out.append(Violation("rubrics", f"{rubric_name!r} needs a criterion"))
        for crit in rubric.criteria:
            if len(crit) != 3 or not all(isinstance(c, str) and c for c in crit):
                out.append(
                    Violation(
                        "rubrics",
                        f"{rubric_name!r} criteria must be (name, low, high) text",
                    )
                )
                break
    return out


class ScenarioRegistry:
    """Immutable id-indexed scenario collection, ordered lexicographically."""

    def __init__(self, scenarios: Iterable[Scenario]):
        by_id: dict[str, Scenario] = {}
        for s in scenarios:
            if s.id in by_id:
                raise ValidationError(s.id, "duplicate scenario id")
            by_id[s.id] = s
        self._by_id = {k: by_id[k] for k in sorted(by_id)}

    def get(self, scenario_id: str) -> Scenario:
        try:
            return self._by_id[scenario_id]
        except KeyError:
            raise UnknownScenario(scenario_id) from None

    def ids(self) -> tuple[str, ...]:
        return tuple(self._by_id)

    def __iter__(self) -> Iterator[Scenario]:
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, scenario_id: object) -> bool:
        return scenario_id in self._by_id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScenarioRegistry):
            return NotImplemented
        return self._by_id == other._by_id


_MANIFEST_REQUIRED = {
    "id",
    "title",
    "recipients",
    "multi_turn",
    "max_turns",
    "judge_sees_thought_boxes",
}
_MANIFEST_OPTIONAL = {
    "forwarded_emails",
    "game_master",
    "reveal_thought_boxes_post_verdict",
    "ending_labels",
    "rubrics",
}
_RECIPIENT_KEYS = {"name", "expects_thought_box"}
_RUBRIC_REQUIRED = {"name", "criteria"}
_RUBRIC_OPTIONAL = {"scale_min", "scale_max"}


def _read_text(path: Path) -> str:
    if not path.is_file():
        raise MissingFile(path)
    # bundles are UTF-8 with LF endings; tolerate CRLF checkouts
    return path.read_text(encoding="utf-8").replace("\r\n", "\n").rstrip("\n")


def _read_json(path: Path) -> Any:
    raw = _read_text(path)
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.pos, exc.msg) from None


def recipient_file_name(name: str) -> str:
    return "recipient_" + name.lower().replace(" ", "_") + ".txt"


def _check_keys(
    scenario_id: str,
    mapping: Mapping[str, Any],
    required: set[str],
    optional: set[str],
    what: str,
) -> None:
    # unknown fields are rejected, not ignored: silent prompt drift is the
    # main failure mode of a prompt-driven system
    unknown = set(mapping) - required - optional
    if unknown:
        raise ValidationError(
            scenario_id, f"unknown {what} field {sorted(unknown)[0]!r}"
        )
    missing = required - set(mapping)
    if missing:
        raise ValidationError(
            scenario_id, f"{what} is missing field {sorted(missing)[0]!r}"
        )


def _load_rubric(scenario_id: str, path: Path) -> Rubric:
    data = _read_json(path)
    if not isinstance(data, Mapping):
        raise ValidationError(scenario_id, f"rubric {path.name!r} must be an object")
    _check_keys(scenario_id, data, _RUBRIC_REQUIRED, _RUBRIC_OPTIONAL, "rubric")
    criteria = data["criteria"]
    if not isinstance(criteria, list):
        raise ValidationError(scenario_id, f"rubric {path.name!r} criteria must be a list")
    return Rubric(
        name=data["name"],
        criteria=tuple(tuple(c) for c in criteria),
        scale_min=int(data.get("scale_min", 1)),
        scale_max=int(data.get("scale_max", 7)),
    )


def _load_bundle(bundle_dir: Path) -> Scenario:
    manifest_path = bundle_dir / "manifest"
    manifest = _read_json(manifest_path)
    if not isinstance(manifest, Mapping):
        raise ValidationError(bundle_dir.name, "manifest must be a JSON object")
    scenario_id = str(manifest.get("id", bundle_dir.name))
    _check_keys(scenario_id, manifest, _MANIFEST_REQUIRED, _MANIFEST_OPTIONAL, "manifest")
    if scenario_id != bundle_dir.name:
        raise ValidationError(
            scenario_id, f"manifest id must match bundle directory {bundle_dir.name!r}"
        )

    recipients: list[RecipientSpec] = []
    for entry in manifest["recipients"]:
        if not isinstance(entry, Mapping):
            raise ValidationError(scenario_id, "recipient entries must be objects")
        _check_keys(scenario_id, entry, _RECIPIENT_KEYS, set(), "recipient")
        name = entry["name"]
        recipients.append(
            RecipientSpec(
                name=name,
                persona_prompt=_read_text(bundle_dir / recipient_file_name(name)),
                expects_thought_box=bool(entry["expects_thought_box"]),
            )
        )

    forwarded = tuple(
        _read_text(bundle_dir / fname)
        for fname in manifest.get("forwarded_emails", [])
    )
    game_master_prompt = None
    if manifest.get("game_master", False):
        game_master_prompt = _read_text(bundle_dir / "game_master.txt")

    rubrics: dict[str, Rubric] = {}
    for rubric_name in manifest.get("rubrics", []):
        rubric = _load_rubric(scenario_id, bundle_dir / "rubrics" / rubric_name)
        if rubric.name != rubric_name:
            raise ValidationError(
                scenario_id,
                f"rubric file {rubric_name!r} declares name {rubric.name!r}",
            )
        rubrics[rubric_name] = rubric

    scenario = Scenario(
        id=scenario_id,
        title=manifest["title"],
        task_email=_read_text(bundle_dir / "task_email.txt"),
        judge_goal=_read_text(bundle_dir / "judge_goal.txt"),
        recipients=tuple(recipients),
        forwarded_emails=forwarded,
        game_master_prompt=game_master_prompt,
        multi_turn=bool(manifest["multi_turn"]),
        max_turns=int(manifest["max_turns"]),
        judge_sees_thought_boxes=bool(manifest["judge_sees_thought_boxes"]),
        reveal_thought_boxes_post_verdict=bool(
            manifest.get("reveal_thought_boxes_post_verdict", False)
        ),
        ending_labels=tuple(manifest.get("ending_labels", [])),
        rubrics=rubrics,
    )
    violations = validate_scenario(scenario)
    if violations:
        raise ValidationError(
            scenario_id,
            "; ".join(f"{v.field}: {v.rule}" for v in violations),
        )
    return scenario


def load_registry(root_path: str | Path) -> ScenarioRegistry:
    root = Path(root_path)
    if not root.is_dir():
        raise MissingFile(root)
    bundle_dirs = sorted(
        p for p in root.iterdir() if p.is_dir() and (p / "manifest").is_file()
    )
    if not bundle_dirs:
        raise MissingFile(root / "<scenario-id>/manifest")
    return ScenarioRegistry(_load_bundle(d) for d in bundle_dirs)


def save_scenario(scenario: Scenario, root_path: str | Path) -> Path:
    """Write a bundle directory under ``root_path``; inverse of loading."""
    bundle_dir = Path(root_path) / scenario.id
    bundle_dir.mkdir(parents=True, exist_ok=True)

    def write(path: Path, content: str) -> None:
        path.write_text(content + "\n", encoding="utf-8", newline="\n")

    manifest: dict[str, Any] = {
        "id": scenario.id,
        "title": scenario.title,
        "recipients": [
            {"name": r.name, "expects_thought_box": r.expects_thought_box}
            for r in scenario.recipients
        ],
        "multi_turn": scenario.multi_turn,
        "max_turns": scenario.max_turns,
        "judge_sees_thought_boxes": scenario.judge_sees_thought_boxes,
        "reveal_thought_boxes_post_verdict": scenario.reveal_thought_boxes_post_verdict,
    }
    if scenario.forwarded_emails:
        manifest["forwarded_emails"] = [
            f"forwarded_{n}.txt" for n in range(1, len(scenario.forwarded_emails) + 1)
        ]
    if scenario.game_master_prompt is not None:
        manifest["game_master"] = True
    if scenario.ending_labels:
        manifest["ending_labels"] = list(scenario.ending_labels)
    if scenario.rubrics:
        manifest["rubrics"] = sorted(scenario.rubrics)

    write(bundle_dir / "manifest", json.dumps(manifest, indent=2, ensure_ascii=False))
    write(bundle_dir / "task_email.txt", scenario.task_email)
    write(bundle_dir / "judge_goal.txt", scenario.judge_goal)
    for spec in scenario.recipients:
        write(bundle_dir / recipient_file_name(spec.name), spec.persona_prompt)
    for n, body in enumerate(scenario.forwarded_emails, start=1):
        write(bundle_dir / f"forwarded_{n}.txt", body)
    if scenario.game_master_prompt is not None:
        write(bundle_dir / "game_master.txt", scenario.game_master_prompt)
    if scenario.rubrics:
        (bundle_dir / "rubrics").mkdir(exist_ok=True)
        for rubric_name in sorted(scenario.rubrics):
            rubric = scenario.rubrics[rubric_name]
            write(
                bundle_dir / "rubrics" / rubric_name,
                json.dumps(
                    {
                        "name": rubric.name,
                        "scale_min": rubric.scale_min,
                        "scale_max": rubric.scale_max,
                        "criteria": [list(c) for c in rubric.criteria],
                    },
                    indent=2,
                    ensure_ascii=False,
                ),
            )
    return bundle_dir


def default_scenario_root() -> Path:
    """Path of the scenario bundles shipped as package data."""
    return Path(resources.files("commgame")) / "data" / "scenarios"
