"""Experiment configuration: the JSON schema gluing files to the protocol."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .mitigate import ProtocolConfig
from .noise import NoiseSchedule, default_base_model
from .pattern import CouplingMap, KColouring, MeasurementPattern, cnot15, two_colour, validate_pattern
from .rounds import ComputationRoundSpec, TestRoundSpec, decision_equals
from .sim import NoiseModel

BUILTIN_PATTERN = "builtin:cnot15"


def cnot_truth_table(x: tuple[int, ...]) -> tuple[int, ...]:
    """(control, target) -> (control, control XOR target)."""
    c, t = x
    return (c, c ^ t)


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus resolved objects ready to run."""

    pattern: MeasurementPattern
    colouring: KColouring
    base_model: NoiseModel
    noise_schedule: NoiseSchedule
    coupling: CouplingMap | None
    x: tuple[int, ...]
    expected_output: tuple[int, ...]
    eps_target: float | None
    n_expected: int | None
    n_total: int
    tau: float | None
    window: int
    p_tilde: float
    groups: int
    seed: int
    p_inherent: float
    max_repetitions: int
    workers: int
    output_dir: Path
    raw: dict
    source_paths: dict[str, Path]

    def comp_spec(self) -> ComputationRoundSpec:
        return ComputationRoundSpec(
            self.pattern, self.x, decision_equals(self.expected_output)
        )

    def test_spec(self) -> TestRoundSpec:
        return TestRoundSpec(self.pattern, self.colouring)

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(
            comp_spec=self.comp_spec(),
            test_spec=self.test_spec(),
            base_model=self.base_model,
            noise_schedule=self.noise_schedule,
            n_total=self.n_total,
            eps_target=self.eps_target,
            n_expected=self.n_expected,
            tau=self.tau,
            window=self.window,
            p_tilde=self.p_tilde,
            groups=self.groups,
            seed=self.seed,
            p_inherent=self.p_inherent,
            max_repetitions=self.max_repetitions,
            workers=self.workers,
        )


def _bits(text: str | list | tuple) -> tuple[int, ...]:
    if isinstance(text, str):
        return tuple(int(c) for c in text)
    return tuple(int(b) for b in text)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    base_dir = path.parent
    sources: dict[str, Path] = {"config": path}

    def resolve(key: str) -> Path | None:
        value = raw.get(key)
        if value in (None, "", BUILTIN_PATTERN):
            return None
        p = Path(value)
        if not p.is_absolute():
            p = base_dir / p
        sources[key] = p
        return p

    pattern_path = resolve("pattern")
    if pattern_path is None:
        pattern, default_colouring = cnot15()
    else:
        pattern = MeasurementPattern.load(pattern_path)
        default_colouring = None
    problems = validate_pattern(pattern)
    if problems:
        raise ValueError(f"invalid pattern: {problems}")

    colouring_path = resolve("colouring")
    if colouring_path is not None:
        colouring = KColouring.load(colouring_path)
    elif default_colouring is not None:
        colouring = default_colouring
    else:
        colouring = two_colour(pattern.num_vertices, pattern.edges)
    bad = colouring.validate(pattern.num_vertices, pattern.edges)
    if bad:
        raise ValueError(f"invalid colouring: {bad}")

    noise_path = resolve("noise_model")
    base_model = NoiseModel.from_json(noise_path) if noise_path else default_base_model()

    coupling_path = resolve("coupling_map")
    coupling = CouplingMap.load(coupling_path) if coupling_path else None

    seed = int(raw.get("seed", 0))
    schedule_raw = dict(raw.get("noise_schedule", {}))
    schedule_raw.setdefault("seed", seed)
    noise_schedule = NoiseSchedule.from_dict(schedule_raw)

    x = _bits(raw.get("input", "11"))
    if len(x) != len(pattern.inputs):
        raise ValueError(
            f"input has {len(x)} bits but the pattern has {len(pattern.inputs)} inputs"
        )
    if "expected_output" in raw and raw["expected_output"] is not None:
        expected = _bits(raw["expected_output"])
    elif pattern_path is None:
        expected = cnot_truth_table(x)
    else:
        raise ValueError(
            "custom patterns need expected_output (only equality decision "
            "maps are expressible in config files)"
        )

    eps_target = raw.get("eps_target")
    n_expected = raw.get("n_expected")
    if eps_target is None and n_expected is None:
        raise ValueError("config needs eps_target or n_expected")

    out_dir = Path(raw.get("output_dir", "out"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    return ExperimentConfig(
        pattern=pattern,
        colouring=colouring,
        base_model=base_model,
        noise_schedule=noise_schedule,
        coupling=coupling,
        x=x,
        expected_output=expected,
        eps_target=None if eps_target is None else float(eps_target),
        n_expected=None if n_expected is None else int(n_expected),
        n_total=int(raw.get("n_total", 100000)),
        tau=None if raw.get("tau") is None else float(raw["tau"]),
        window=int(raw.get("window", 1000)),
        p_tilde=float(raw.get("p_tilde", 0.15)),
        groups=int(raw.get("groups", 1)),
        seed=seed,
        p_inherent=float(raw.get("p_inherent", 0.0)),
        max_repetitions=int(raw.get("max_repetitions", 5)),
        workers=int(raw.get("workers", 1)),
        output_dir=out_dir,
        raw=raw,
        source_paths=sources,
    )


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def build_manifest(config: ExperimentConfig, outputs: Mapping[str, Path]) -> dict[str, Any]:
    return {
        "version": __version__,
        "seed": config.seed,
        "config": config.raw,
        "input_digests": {
            name: file_digest(p) for name, p in config.source_paths.items() if p.exists()
        },
        "outputs": {name: str(p) for name, p in outputs.items()},
    }


def write_manifest(path: Path, manifest: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
