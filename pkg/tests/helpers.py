"""Shared test doubles and builders."""

import shutil
import threading
from importlib import resources

from claimbench.corpus import FactCheck
from claimbench.retrieve import RankedRun


class ScriptedTransport:
    """Transport double that replays scripted responses and records every call.

    Script items may be plain values, exceptions (raised), or callables
    (invoked with the request). Thread-safe so concurrency tests can hammer it.
    """

    def __init__(self, chat=None, embed=None, rerank=None):
        self._scripts = {"chat": list(chat or []), "embed": list(embed or []),
                         "rerank": list(rerank or [])}
        self.chat_calls = []
        self.embed_calls = []
        self.rerank_calls = []
        self._lock = threading.Lock()

    def _next(self, kind, calls, request):
        with self._lock:
            calls.append(request)
            queue = self._scripts[kind]
            if not queue:
                raise AssertionError(f"scripted transport ran out of {kind} responses")
            item = queue.pop(0)
        if isinstance(item, BaseException):
            raise item
        if callable(item):
            return item(request)
        return item

    def chat(self, request):
        return self._next("chat", self.chat_calls, request)

    def embed(self, request):
        return self._next("embed", self.embed_calls, request)

    def rerank(self, request):
        return self._next("rerank", self.rerank_calls, request)


def make_factchecks(texts):
    """Build FactCheck objects fc00, fc01, ... from raw texts."""
    return [FactCheck.from_text(f"fc{i:02d}", text) for i, text in enumerate(texts)]


def make_run(rankings, stage="first_stage", model="bm25"):
    """RankedRun from {claim: [fc ids in rank order]}; scores are descending ordinals."""
    scored = {claim: [(fc_id, float(len(ids) - pos)) for pos, fc_id in enumerate(ids)]
              for claim, ids in rankings.items()}
    depth = max((len(ids) for ids in rankings.values()), default=0)
    return RankedRun(stage=stage, model=model, depth=depth, rankings=scored)


TOY_CONFIG = """\
seed: 7
out: out
dataset:
  claims: data/claims.jsonl
  factchecks: data/factchecks.jsonl
  qrels: data/qrels.tsv
  split: data/split.json
provider:
  kind: mock
  parallelism: 4
perturb:
  split: test
  families: [casing, typos, negation]
  candidates: 5
retrieve:
  method: bm25
  j: 20
rerank:
  j: 10
eval:
  k: [1, 5, 10]
"""


def write_toy_workspace(root, config_text=TOY_CONFIG):
    """Copy the packaged toy dataset under root/data and write a run config."""
    data_dir = root / "data"
    source = resources.files("claimbench").joinpath("data/toy")
    data_dir.mkdir(parents=True, exist_ok=True)
    for name in ("claims.jsonl", "factchecks.jsonl", "qrels.tsv", "split.json"):
        shutil.copyfile(str(source.joinpath(name)), str(data_dir / name))
    config_path = root / "run.yaml"
    config_path.write_text(config_text, encoding="utf-8")
    return config_path
