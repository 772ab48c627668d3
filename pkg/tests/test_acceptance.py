"""Acceptance criteria 1 to 9.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run as a script.
"""

import functools
import pathlib
import sys
import time
from collections import Counter

import pytest

import bruteforce
import samples
import test_wire
from bgplab.core import comparable
from bgplab.crypto import check_proven_cert
from bgplab.sim import Simulation, load_scenario, parse_scenario, run
from bgplab.sim.config import DelayModel
from bgplab.wire import decode, encode

HERE = pathlib.Path(__file__).parent
SCEN = HERE.parent / "scenarios"
RESULTS = {}

SAFETY_SEEDS = 1000
SAFETY_BUDGET = 300.0

SAFETY_TEMPLATE = """
n = {n}
f = {f}
learners = {learners}
proposers = 2
delay = adversarial 1 10 spike=60 dup=0.05 gst=300
workload = commands=8 keys=2 universal=0.2 reads=0.3 window=1..200
byzantine = {byz}
[script]
step 1: ballot fast
step 150: ballot classic
step 250: ballot fast
"""

# Every shipped strategy shows up at both sizes, including a Byzantine leader
# together with f Byzantine acceptors. Proposer ids start at n.
ROSTERS = {
    (4, 1): [
        "0:equivocate-leader+double-vote-acceptor",
        "0:non-extension-leader+omit-p1b-commands",
        "1:double-vote-acceptor,4:forge-command",
        "2:false-suspector",
        "0:forge-command+double-vote-acceptor",
        "1:silent",
        "3:omit-p1b-commands+false-suspector",
    ],
    (7, 2): [
        "0:equivocate-leader+double-vote-acceptor,3:double-vote-acceptor",
        "0:non-extension-leader,2:omit-p1b-commands",
        "1:false-suspector,2:false-suspector",
        "0:forge-command,5:double-vote-acceptor,7:forge-command",
        "0:equivocate-leader,1:silent",
        "4:silent,5:double-vote-acceptor",
    ],
}
SAFETY_PROPS = ("consistency", "nontriviality", "stability")


def record(n, ok, detail):
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    return ok


def scen(name, **kw):
    return load_scenario(SCEN / f"{name}.txt", **kw)


def learn_profile(r):
    return Counter((e.path, e.depth, e.quorum) for e in r.learns)


@functools.lru_cache(maxsize=None)
def safety_campaign():
    """Seeds cycle through the rosters of each size."""
    out = {}
    start = time.perf_counter()
    for (n, f), rosters in ROSTERS.items():
        cfgs = [parse_scenario(SAFETY_TEMPLATE.format(n=n, f=f, learners=n - f, byz=b),
                               record_trace=False) for b in rosters]
        runs = []
        for seed in range(SAFETY_SEEDS):
            r = run(cfgs[seed % len(cfgs)].replace(seed=seed))
            runs.append((seed, r.verdict, learn_profile(r), r.config.f))
        out[(n, f)] = runs
    return out, time.perf_counter() - start


def test_criterion_1_safety_campaign():
    data, elapsed = safety_campaign()
    bad = Counter()
    total = 0
    for runs in data.values():
        for seed, verdict, _, _ in runs:
            total += 1
            for v in verdict.violations:
                if v.prop in SAFETY_PROPS:
                    bad[v.prop] += 1
    ok = not bad and all(len(r) >= 1000 for r in data.values()) and elapsed < SAFETY_BUDGET
    sizes = ", ".join(f"N={n}: {len(r)}" for (n, _), r in data.items())
    assert record(1, ok, f"{total} runs ({sizes}), safety violations {dict(bad) or 0}, "
                         f"{elapsed:.0f}s (budget {SAFETY_BUDGET:.0f}s)")


LIVENESS_SCENARIOS = ["mixed_workload", "fast_conflict", "universal", "crash_leader",
                      "false_suspector", "happy_fast"]


def test_criterion_2_liveness():
    evaluated = misses = 0
    for name in LIVENESS_SCENARIOS:
        cfg = scen(name, record_trace=False)
        for seed in range(50):
            v = run(cfg.replace(seed=seed)).verdict
            evaluated += v.liveness_evaluated
            misses += v.failed("liveness")
    data, _ = safety_campaign()
    for runs in data.values():
        for _, v, _, _ in runs:
            evaluated += v.liveness_evaluated
            misses += v.failed("liveness")
    ok = evaluated >= 200 and misses == 0
    assert record(2, ok, f"{evaluated} runs with a synchronous tail and correct leader, {misses} missed")


def test_criterion_3_depth():
    """Conflict-free fast learns at depth 3, universal fast learns at depth 2 on f + 1 votes."""
    profiles = []
    for name in ("happy_fast", "mixed_workload", "universal"):
        cfg = scen(name, record_trace=False)
        for seed in range(100):
            profiles.append((learn_profile(run(cfg.replace(seed=seed))), cfg.f))
    data, _ = safety_campaign()
    profiles += [(p, f) for runs in data.values() for _, _, p, f in runs]
    fast, univ, wrong = Counter(), Counter(), 0
    for prof, f in profiles:
        for (path, depth, q), n in prof.items():
            if path == "fast":
                fast[depth] += n
                wrong += n * (depth != 3)
            elif path == "univ-fast":
                univ[depth] += n
                wrong += n * (depth != 2 or q != f + 1)
    ok = wrong == 0 and fast and univ
    assert record(3, bool(ok), f"{sum(fast.values())} fast learns at depths {sorted(fast)}, "
                               f"{sum(univ.values())} universal fast learns at depths {sorted(univ)} "
                               f"with quorum f+1, {wrong} off")


def test_criterion_4_conflict_arbitration():
    runs = bad = 0
    for delay in (DelayModel("uniform", 1, 10), DelayModel("adversarial", 1, 10, gst=40)):
        cfg = scen("fast_conflict", record_trace=False, delay=delay)
        for seed in range(100):
            sim = Simulation(cfg.replace(seed=seed))
            r = sim.run()
            runs += 1
            orders = set()
            for lid, lr in sim.learners.items():
                ids = [c.id for c in lr.log if c.payload in (b"left", b"right")]
                orders.add(tuple(ids))
            # one agreed order, holding both commands, at every learner
            if not r.ok or len(orders) != 1 or len(next(iter(orders))) != 2:
                bad += 1
    assert record(4, bad == 0, f"{runs} racing interfering pairs, {bad} runs split or incomplete")


def test_criterion_5_view_change():
    crash_bad = 0
    for seed in range(100):
        r = run(scen("crash_leader", seed=seed, record_trace=False))
        st = r.stats
        if not (r.ok and st["views_adopted"] == [1] and st["final_leader"] == 1 % r.config.n):
            crash_bad += 1
    spurious = runs = 0
    n7 = parse_scenario((SCEN / "false_suspector.txt").read_text()
                        .replace("n = 4", "n = 7").replace("f = 1", "f = 2")
                        .replace("learners = 3", "learners = 5")
                        .replace("2:false-suspector", "2:false-suspector, 5:false-suspector"),
                        record_trace=False)
    for cfg in (scen("false_suspector", record_trace=False), n7):
        for seed in range(100):
            r = run(cfg.replace(seed=seed))
            runs += 1
            spurious += bool(r.stats["views_adopted"]) or not r.ok
    ok = crash_bad == 0 and spurious == 0
    assert record(5, ok, f"crashed leader: {100 - crash_bad}/100 runs with exactly one view change "
                         f"to leader 1; false suspectors: {spurious}/{runs} runs changed view")


def _cert_audit(sim):
    """Every pair of valid certificates at one ballot must be comparable."""
    cl = sim.cluster
    groups = {}
    for cert in sim.certs.values():
        if check_proven_cert(cert, cl.keyring, cl.acceptors, cl.f, cl.oracle):
            groups.setdefault((cert.ballot, cert.base), []).append(cert.value)
    checked = 0
    for values in groups.values():
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                checked += 1
                if not comparable(values[i], values[j], cl.oracle):
                    return checked, False
    return checked, True


def test_criterion_6_guards():
    delivered = rejected = 0
    for seed in range(100):
        st = run(scen("non_extension_leader", seed=seed, record_trace=False)).stats
        delivered += st["nonext_delivered"]
        rejected += st["nonext_rejected"]
    forged = 0
    for seed in range(100):
        sim = Simulation(scen("forge_command", seed=seed, record_trace=False))
        sim.run()
        for lr in sim.learners.values():
            forged += sum(not sim.cluster.keyring.command_ok(c) for c in lr.log)
    pairs, audit_bad = 0, 0
    for (n, f), rosters in ROSTERS.items():
        for b in rosters:
            if "double-vote-acceptor" not in b:
                continue
            cfg = parse_scenario(SAFETY_TEMPLATE.format(n=n, f=f, learners=n - f, byz=b),
                                 record_trace=False)
            for seed in range(20):
                sim = Simulation(cfg.replace(seed=seed))
                sim.run()
                k, good = _cert_audit(sim)
                pairs += k
                audit_bad += not good
    ok = delivered > 0 and rejected == delivered and forged == 0 and audit_bad == 0
    assert record(6, ok, f"non-extension proposals rejected {rejected}/{delivered}; "
                         f"forged commands learned {forged}; cert audit {pairs} pairs, "
                         f"{audit_bad} runs with incomparable certs")


def test_criterion_7_checkpoint():
    bad = []
    seen = Counter()
    for seed in range(50):
        sim = Simulation(scen("checkpoint", seed=seed, record_trace=False))
        r = sim.run()
        for lr in sim.learners.values():
            seen.update(k for k, _ in lr.notes)
            if not (lr.learned and lr.learned[0].is_checkpoint and lr.executed_checkpoints):
                bad.append((seed, "learner", lr.pid))
        for a in sim.acceptors.values():
            done = [d for k, d in a.notes if k == "checkpoint_done"]
            if not done or done[0]["stored"] > 2:
                bad.append((seed, "acceptor", a.pid))
        if not r.ok:
            bad.append((seed, "verdict"))
    both = seen["buffered_post_checkpoint"] > 0 and seen["discarded_pre_checkpoint"] > 0
    ok = not bad and both
    assert record(7, ok, f"50 runs, learners headed by C* with stored state reset: "
                         f"{'yes' if not bad else bad[:3]}; post-checkpoint buffered "
                         f"{seen['buffered_post_checkpoint']}x, pre-checkpoint discarded "
                         f"{seen['discarded_pre_checkpoint']}x")


def test_criterion_8_core_algebra():
    start = time.perf_counter()
    try:
        counts = bruteforce.exhaustive_check(5)
        err = None
    except AssertionError as e:
        counts, err = {}, e
    elapsed = time.perf_counter() - start
    ok = err is None and elapsed < 10.0
    assert record(8, ok, f"exhaustive over <=5 commands and 3 keys: {counts or err}, {elapsed:.1f}s")


def test_criterion_9_determinism_and_codec():
    mismatched = 0
    for name in ("safety_n4", "checkpoint", "mixed_workload", "crash_leader"):
        for seed in range(5):
            cfg = scen(name, seed=seed)
            if run(cfg).trace_text() != run(cfg).trace_text():
                mismatched += 1
    variants = samples.build()
    roundtrip = all(decode(encode(m)) == m and encode(decode(encode(m))) == encode(m)
                    for m in list(variants.values()) + test_wire.EMPTY_VARIANTS)
    accepted = test_wire.fuzz(100_000, seed=2024)
    goldens = all((HERE / "golden" / f"{k}.hex").read_text().strip() == encode(m).hex()
                  for k, m in variants.items())
    ok = mismatched == 0 and roundtrip and goldens
    assert record(9, ok, f"20 repeated runs, {mismatched} trace mismatches; "
                         f"{len(variants)} variants round-trip {'ok' if roundtrip else 'BROKEN'}; "
                         f"100000 fuzz cases without a crash ({accepted} decoded); "
                         f"goldens {'stable' if goldens else 'CHANGED'}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
