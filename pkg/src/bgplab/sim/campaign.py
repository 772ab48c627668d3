"""Run one scenario over a range of seeds and aggregate what happened."""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import SimConfig
from .engine import run


def parse_seed_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    if not sep:
        n = int(text)
        return range(n, n + 1)
    return range(int(lo), int(hi) + 1)


@dataclass
class RunSummary:
    seed: int
    ok: bool
    violations: list
    liveness_evaluated: bool
    view_changes: int
    depths: Counter
    steps: int
    stop: str


@dataclass
class CampaignReport:
    runs: list = field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(r.ok for r in self.runs)

    @property
    def failed(self) -> list:
        return [r for r in self.runs if not r.ok]

    def violations_by_property(self) -> Counter:
        c = Counter()
        for r in self.runs:
            for v in r.violations:
                c[v["property"]] += 1
        return c

    def depth_histogram(self) -> dict:
        """path -> Counter(depth -> learn events)"""
        out = {}
        for r in self.runs:
            for (path, depth), n in r.depths.items():
                out.setdefault(path, Counter())[depth] += n
        return out

    def view_change_histogram(self) -> Counter:
        return Counter(r.view_changes for r in self.runs)

    def to_dict(self) -> dict:
        return {
            "runs": len(self.runs),
            "passed": self.passed,
            "failed_seeds": [r.seed for r in self.failed],
            "violations": dict(sorted(self.violations_by_property().items())),
            "liveness_evaluated": sum(r.liveness_evaluated for r in self.runs),
            "depth": {p: dict(sorted(h.items())) for p, h in sorted(self.depth_histogram().items())},
            "view_changes": dict(sorted(self.view_change_histogram().items())),
        }

    def text(self) -> str:
        d = self.to_dict()
        lines = [f"runs {d['runs']}  passed {d['passed']}  failed {len(d['failed_seeds'])}"]
        if d["failed_seeds"]:
            lines.append("failed seeds " + " ".join(map(str, d["failed_seeds"])))
        for prop, n in d["violations"].items():
            lines.append(f"violation {prop} x{n}")
        lines.append(f"liveness evaluated in {d['liveness_evaluated']} runs")
        for path, hist in d["depth"].items():
            cells = " ".join(f"{k}:{v}" for k, v in hist.items())
            lines.append(f"depth {path:<13} {cells}")
        cells = " ".join(f"{k}:{v}" for k, v in d["view_changes"].items())
        lines.append(f"view changes  {cells}")
        return "\n".join(lines) + "\n"


def summarize(seed: int, cfg: SimConfig) -> RunSummary:
    r = run(cfg.replace(seed=seed, record_trace=False))
    depths = Counter((e.path, e.depth) for e in r.learns)
    return RunSummary(
        seed=seed,
        ok=r.ok,
        violations=[v.to_dict() for v in r.verdict.violations],
        liveness_evaluated=r.verdict.liveness_evaluated,
        view_changes=len(r.stats["views_adopted"]),
        depths=depths,
        steps=r.stats["steps"],
        stop=r.stats["stop"],
    )


def _job(args):
    return summarize(*args)


def campaign(cfg: SimConfig, seeds, jobs: int = 1) -> CampaignReport:
    work = [(s, cfg) for s in seeds]
    if jobs <= 1:
        runs = [_job(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_job, work, chunksize=8))
    # Results come back in seed order either way, so reports stay byte-stable.
    return CampaignReport(runs)
