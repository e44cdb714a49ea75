"""Run configuration and stage manifest plumbing for the CLI.

One YAML file configures every stage. Paths inside the file resolve
relative to the file's own directory, but stage signatures hash the
as-written values, so manifests stay byte-identical across machines.
Manifests deliberately carry no timestamps or absolute paths.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from .perturb import Family
from .provider import ProviderSettings

DEFAULT_KS = (1, 5, 10, 20, 50)
SPLIT_CHOICES = ("train", "dev", "test", "all")


class ConfigError(ValueError):
    """Invalid or missing run configuration."""


_ALLOWED_KEYS = {
    "": {"seed", "out", "dataset", "provider", "perturb", "retrieve", "rerank", "eval"},
    "dataset": {"claims", "factchecks", "qrels", "split", "ratios"},
    "provider": {"kind", "model", "embedding_model", "rerank_model", "endpoint",
                 "embed_endpoint", "rerank_endpoint", "response_path", "parallelism",
                 "cache_dir", "embedding_dim", "timeout"},
    "perturb": {"split", "families", "candidates"},
    "retrieve": {"method", "granularity", "k1", "b", "j"},
    "rerank": {"j"},
    "eval": {"k"},
}


@dataclass(frozen=True)
class DatasetConfig:
    claims: str
    factchecks: str
    qrels: str
    split: Optional[str] = None
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class PerturbConfig:
    split: str = "test"
    families: Tuple[Family, ...] = tuple(Family)
    candidates: int = 5


@dataclass(frozen=True)
class RetrieveConfig:
    method: str = "bm25"
    granularity: str = "paragraph"
    k1: float = 1.5
    b: float = 0.75
    j: int = 50


@dataclass(frozen=True)
class RerankConfig:
    j: int = 50


@dataclass(frozen=True)
class EvalConfig:
    k: Tuple[int, ...] = DEFAULT_KS


@dataclass
class RunConfig:
    seed: int
    out: str
    dataset: DatasetConfig
    provider: ProviderSettings
    perturb: PerturbConfig
    retrieve: RetrieveConfig
    rerank: RerankConfig
    eval: EvalConfig
    raw: Dict[str, Any]  # post-override values as written; used for signatures


def _check_keys(section: str, mapping: Dict[str, Any]) -> None:
    allowed = _ALLOWED_KEYS[section]
    for key in mapping:
        if key not in allowed:
            dotted = f"{section}.{key}" if section else key
            raise ConfigError(f"unknown config key {dotted}")


def _require(mapping: Dict[str, Any], section: str, key: str) -> Any:
    if key not in mapping or mapping[key] in (None, ""):
        raise ConfigError(f"missing config key {section}.{key}")
    return mapping[key]


def _as_int(value: Any, name: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config key {name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"config key {name} must be >= {minimum}, got {value}")
    return value


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {name} must be a number, got {value!r}")
    return float(value)


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def load_config(path: str, seed: Optional[int] = None, out: Optional[str] = None,
                k: Optional[Sequence[int]] = None, j: Optional[int] = None) -> RunConfig:
    """Parse and validate a run configuration, applying CLI flag overrides."""
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")

    # Flag overrides land in the raw dict so signatures see the effective values.
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    if k:
        raw.setdefault("eval", {})["k"] = list(k)
    if j is not None:
        raw.setdefault("retrieve", {})["j"] = j
        raw.setdefault("rerank", {})["j"] = j

    _check_keys("", raw)
    for section in ("dataset", "provider", "perturb", "retrieve", "rerank", "eval"):
        value = raw.get(section, {})
        if value is None:
            value = {}
            raw[section] = value
        if not isinstance(value, dict):
            raise ConfigError(f"config section {section} must be a mapping")
        _check_keys(section, value)

    base_dir = os.path.dirname(os.path.abspath(path))
    dataset_raw = raw.get("dataset", {})
    dataset = DatasetConfig(
        claims=_resolve(base_dir, _require(dataset_raw, "dataset", "claims")),
        factchecks=_resolve(base_dir, _require(dataset_raw, "dataset", "factchecks")),
        qrels=_resolve(base_dir, _require(dataset_raw, "dataset", "qrels")),
        split=(_resolve(base_dir, dataset_raw["split"])
               if dataset_raw.get("split") else None),
        ratios=_parse_ratios(dataset_raw.get("ratios")),
    )

    provider = _parse_provider(raw.get("provider", {}), base_dir)
    perturb = _parse_perturb(raw.get("perturb", {}))
    retrieve = _parse_retrieve(raw.get("retrieve", {}))
    rerank = RerankConfig(j=_as_int(raw.get("rerank", {}).get("j", 50), "rerank.j", 1))
    eval_cfg = _parse_eval(raw.get("eval", {}))

    run_seed = _as_int(raw.get("seed", 0), "seed")
    out_dir = _resolve(base_dir, str(raw.get("out", "out")))
    return RunConfig(seed=run_seed, out=out_dir, dataset=dataset, provider=provider,
                     perturb=perturb, retrieve=retrieve, rerank=rerank, eval=eval_cfg,
                     raw=raw)


def _parse_ratios(value: Any) -> Tuple[float, float, float]:
    if value is None:
        return (0.8, 0.1, 0.1)
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"config key dataset.ratios must be three numbers, got {value!r}")
    return tuple(_as_float(v, "dataset.ratios") for v in value)


def _parse_provider(section: Dict[str, Any], base_dir: str) -> ProviderSettings:
    kind = section.get("kind", "mock")
    if kind not in ("mock", "http"):
        raise ConfigError(f"config key provider.kind must be 'mock' or 'http', got {kind!r}")
    if kind == "http" and not section.get("endpoint"):
        raise ConfigError("missing config key provider.endpoint (required for kind 'http')")
    response_path = section.get("response_path")
    if response_path is not None:
        if not isinstance(response_path, list):
            raise ConfigError("config key provider.response_path must be a list")
        response_path = tuple(response_path)
    cache_dir = section.get("cache_dir")
    return ProviderSettings(
        kind=kind,
        model=section.get("model", "mock-chat"),
        embedding_model=section.get("embedding_model", "mock-embed"),
        rerank_model=section.get("rerank_model", "mock-rerank"),
        endpoint=section.get("endpoint"),
        embed_endpoint=section.get("embed_endpoint"),
        rerank_endpoint=section.get("rerank_endpoint"),
        response_path=response_path if response_path is not None
        else ProviderSettings.response_path,
        parallelism=_as_int(section.get("parallelism", 8), "provider.parallelism", 1),
        cache_dir=_resolve(base_dir, cache_dir) if cache_dir else None,
        embedding_dim=_as_int(section.get("embedding_dim", 8), "provider.embedding_dim", 1),
        timeout=_as_float(section.get("timeout", 30.0), "provider.timeout"),
    )


def _parse_perturb(section: Dict[str, Any]) -> PerturbConfig:
    split = section.get("split", "test")
    if split not in SPLIT_CHOICES:
        raise ConfigError(
            f"config key perturb.split must be one of {SPLIT_CHOICES}, got {split!r}")
    families_raw = section.get("families")
    if families_raw is None:
        families = tuple(Family)
    else:
        if not isinstance(families_raw, list) or not families_raw:
            raise ConfigError("config key perturb.families must be a non-empty list")
        families = []
        for name in families_raw:
            try:
                families.append(Family(name))
            except ValueError:
                raise ConfigError(f"unknown perturbation family {name!r} "
                                  f"in perturb.families") from None
        families = tuple(families)
    candidates = _as_int(section.get("candidates", 5), "perturb.candidates", 1)
    return PerturbConfig(split=split, families=families, candidates=candidates)


def _parse_retrieve(section: Dict[str, Any]) -> RetrieveConfig:
    method = section.get("method", "bm25")
    if method not in ("bm25", "dense"):
        raise ConfigError(f"config key retrieve.method must be 'bm25' or 'dense', got {method!r}")
    granularity = section.get("granularity", "paragraph")
    if granularity not in ("document", "paragraph"):
        raise ConfigError("config key retrieve.granularity must be 'document' or 'paragraph', "
                          f"got {granularity!r}")
    return RetrieveConfig(
        method=method,
        granularity=granularity,
        k1=_as_float(section.get("k1", 1.5), "retrieve.k1"),
        b=_as_float(section.get("b", 0.75), "retrieve.b"),
        j=_as_int(section.get("j", 50), "retrieve.j", 1),
    )


def _parse_eval(section: Dict[str, Any]) -> EvalConfig:
    ks = section.get("k")
    if ks is None:
        return EvalConfig()
    if isinstance(ks, int):
        ks = [ks]
    if not isinstance(ks, list) or not ks:
        raise ConfigError("config key eval.k must be an integer or non-empty list")
    return EvalConfig(k=tuple(_as_int(v, "eval.k", 1) for v in ks))


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def signature_of(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def raw_section(config: RunConfig, name: str) -> Dict[str, Any]:
    """The as-written config slice for one section, for signature payloads."""
    value = config.raw.get(name, {})
    return value if isinstance(value, dict) else {}


def write_manifest(path: str, payload: Dict[str, Any]) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2, ensure_ascii=False)
        handle.write("\n")


def read_manifest(path: str) -> Optional[Dict[str, Any]]:
    if not os.path.exists(path):
        return None
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (ValueError, OSError):
        return None


def stage_is_current(manifest_path: str, signature: str, out_dir: str,
                     outputs: Sequence[str]) -> bool:
    """True when the stored manifest matches and every output still exists."""
    manifest = read_manifest(manifest_path)
    if manifest is None or manifest.get("signature") != signature:
        return False
    return all(os.path.exists(os.path.join(out_dir, rel)) for rel in outputs)
