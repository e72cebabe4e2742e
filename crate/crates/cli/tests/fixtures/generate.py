#!/usr/bin/env python3
"""Regenerates the bundled test fixtures. Output is deterministic.

    python3 crates/cli/tests/fixtures/generate.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent
BASE = 0xFFFF888000000000

CLASS_OF = {
    "_raw_spin_lock": "spinlock",
    "_raw_spin_lock_irqsave": "spinlock",
    "_raw_read_lock": "rwlock",
    "mutex_lock": "mutex",
    "down_read": "semaphore",
    "down_write": "semaphore",
}


def lock(pid, addr, name, primitive, count, stack, process, t_ns=0, hold_ns=None):
    return {
        "kind": "lock", "pid": pid, "tid": pid, "addr": hex(addr), "name": name,
        "class": CLASS_OF[primitive], "primitive": primitive, "count": count,
        "hold_ns": count * 100 if hold_ns is None else hold_ns, "t_ns": t_ns,
        "process": process, "stack": stack,
    }


def write_trace(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def write_stacks(path, stacks):
    with open(path, "w") as f:
        for sid in sorted(stacks):
            f.write(f"{sid}\t{';'.join(stacks[sid])}\n")


def write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def fn(name, file, start, end):
    return {"name": name, "kind": "function", "file": file, "start_line": start, "end_line": end}


def record(name, file, start, end):
    return {"name": name, "kind": "record", "file": file, "start_line": start,
            "end_line": end, "type": f"struct {name}"}


def use(function, file, line, expr, primitive, param_like=False):
    return {"function": function, "file": file, "line": line, "lock_expr": expr,
            "primitive": primitive, "param_like": param_like}


def facts_doc(symbols=(), calls=(), uses=(), wrappers=(), globals_=(), defs=()):
    return {"symbols": list(symbols), "calls": list(calls), "lock_uses": list(uses),
            "wrappers": list(wrappers), "globals": list(globals_), "lock_definitions": list(defs)}


def session(dirname, workloads, runs, code_facts=None):
    """runs: list of (index, duration_s, {workload: records}, {workload: stacks})."""
    d = ROOT / dirname
    d.mkdir(exist_ok=True)
    manifest = {"workloads": [{"id": w, "platform": p} for w, p in workloads], "runs": []}
    for index, duration, traces, stacks in runs:
        files = {}
        for w in traces:
            t = f"{w}.run{index}.trace.jsonl"
            s = f"{w}.run{index}.stacks.txt"
            write_trace(d / t, traces[w])
            write_stacks(d / s, stacks[w])
            files[w] = {"trace": t, "stacks": s}
        manifest["runs"].append({"index": index, "duration_s": duration, "files": files})
    if code_facts is not None:
        write_json(d / "facts.json", code_facts)
        manifest["code_facts"] = "facts.json"
    write_json(d / "manifest.json", manifest)


def pair_low():
    """Shared counts 0, 0, 1; the one shared lock is hit 1130 times by each
    workload over 10 s, for a cumulative shared rate of 226."""
    pipe = ["mutex_lock", "pipe_write", "ksys_write"]
    zone = ["_raw_spin_lock_irqsave", "rmqueue_bulk", "get_page_from_freelist"]
    runs = []
    for index in range(3):
        traces, stacks = {}, {}
        for k, w in enumerate(["a", "b"]):
            pid = 4100 + k
            recs = [lock(pid, BASE + 0x10000 * (index + 1) + 0x100 * k, "&pipe->mutex",
                         "mutex_lock", 40 + 10 * k, 1, w)]
            st = {1: pipe}
            if index == 2:
                recs.append(lock(pid, BASE + 0x900000, "&zone->lock", "_raw_spin_lock_irqsave",
                                 1130, 2, w, t_ns=1000 + k))
                st[2] = zone
            traces[w], stacks[w] = recs, st
        runs.append((index, 10.0, traces, stacks))
    facts = facts_doc(
        symbols=[fn("pipe_write", "fs/pipe.c", 400, 600), fn("ksys_write", "fs/read_write.c", 600, 630),
                 fn("rmqueue_bulk", "mm/page_alloc.c", 2100, 2180),
                 fn("get_page_from_freelist", "mm/page_alloc.c", 3000, 3200)],
        calls=[{"caller": "ksys_write", "callee": "pipe_write", "file": "fs/read_write.c", "line": 620},
               {"caller": "get_page_from_freelist", "callee": "rmqueue_bulk", "file": "mm/page_alloc.c", "line": 3100}],
        uses=[use("pipe_write", "fs/pipe.c", 431, "&pipe->mutex", "mutex_lock"),
              use("rmqueue_bulk", "mm/page_alloc.c", 2110, "&zone->lock", "_raw_spin_lock_irqsave")],
    )
    session("pair_low", [("a", "runc"), ("b", "runc")], runs, facts)


def pair_high():
    """16 shared locks per run, except run 0 where b misses one: 15, 16, 16."""
    names = [f"&sb->s_lock{i}" for i in range(16)]
    runs = []
    for index in range(3):
        traces, stacks = {}, {}
        for k, w in enumerate(["a", "b"]):
            pid = 5200 + k
            recs, st = [], {}
            for i, name in enumerate(names):
                if index == 0 and k == 1 and i == 7:
                    continue
                st[i + 1] = ["_raw_spin_lock", f"fs_op{i}", "vfs_entry"]
                recs.append(lock(pid, BASE + 0x200000 + 0x40 * i, name, "_raw_spin_lock", 10 + i, i + 1, w))
            st[99] = ["_raw_spin_lock", "private_op", "vfs_entry"]
            recs.append(lock(pid, BASE + 0x300000 + 0x1000 * k + 0x10 * index, "&priv->lock",
                             "_raw_spin_lock", 5, 99, w))
            traces[w], stacks[w] = recs, st
        runs.append((index, 30.0, traces, stacks))
    session("pair_high", [("a", "host"), ("b", "host")], runs)


def interrupts():
    """100 lock rows, 20 of them under interrupt frames."""
    rng = random.Random(20)
    stacks = {}
    for i in range(8):
        stacks[i + 1] = ["_raw_spin_lock", f"worker_fn{i}", "do_syscall_64"]
    stacks[50] = ["_raw_spin_lock", "run_timer_softirq", "__do_softirq", "__softirqentry_text_start"]
    stacks[51] = ["_raw_spin_lock_irqsave", "hrtimer_interrupt", "__sysvec_apic_timer_interrupt"]
    irq = set(rng.sample(range(100), 20))
    recs = []
    for i in range(100):
        if i in irq:
            sid = 50 + (i % 2)
            prim = stacks[sid][0]
        else:
            sid = 1 + i % 8
            prim = "_raw_spin_lock"
        recs.append(lock(6000, BASE + 0x400000 + 0x40 * i, f"&obj{i}->lock", prim, 1 + i % 5, sid, "fio"))
    session("interrupts", [("fio", "host")], [(0, 5.0, {"fio": recs}, {"fio": stacks})])


def bfs(start, name, primitive, facts, max_depth):
    wrappers = set(facts["wrappers"])
    callees = {}
    for c in facts["calls"]:
        callees.setdefault(c["caller"], [])
        if c["callee"] not in callees[c["caller"]]:
            callees[c["caller"]].append(c["callee"])
    uses = {}
    for u in facts["lock_uses"]:
        uses.setdefault(u["function"], []).append(u)
    seen, frontier = {start}, [start]
    for _ in range(max_depth):
        nxt = []
        for f in frontier:
            if f in wrappers:
                continue
            for c in callees.get(f, []):
                if c not in seen:
                    seen.add(c)
                    nxt.append(c)
        hits = [u for f in nxt for u in uses.get(f, [])
                if u["primitive"] == primitive and u["lock_expr"].split("->")[-1] == name]
        if hits:
            return hits
        frontier = nxt
    return []


def callgraph():
    """50 functions, random calls, sites spread over shared lock names, and
    20 stacks truncated to their outermost caller."""
    rng = random.Random(50)
    funcs = [f"cg_fn{i:02}" for i in range(50)]
    files = [f"fs/cg/part{i}.c" for i in range(5)]
    symbols = [fn(f, files[i % 5], 1000 * i, 1000 * i + 900) for i, f in enumerate(funcs)]
    calls = []
    for i, f in enumerate(funcs):
        for c in rng.sample(funcs, rng.randint(1, 4)):
            if c != f:
                calls.append({"caller": f, "callee": c, "file": files[i % 5], "line": 1000 * i + 1 + len(calls) % 50})
    lock_names = ["j_list_lock", "j_state_lock", "i_lock", "lru_lock", "s_inode_list_lock"]
    primitives = ["_raw_spin_lock", "_raw_spin_lock_irqsave"]
    uses = []
    for i, f in enumerate(funcs[10:], start=10):
        for k in range(rng.randint(0, 2)):
            name = rng.choice(lock_names)
            uses.append(use(f, files[rng.randrange(5)], 1000 * i + 100 + 10 * k,
                            f"&obj{i}->{name}", rng.choice(primitives)))
    wrappers = [f for f in rng.sample(funcs[10:], 5)]
    facts = facts_doc(symbols, calls, uses, wrappers)

    stacks, recs = {}, []
    candidates = [(s, n, p) for s in funcs for n in lock_names for p in primitives]
    rng.shuffle(candidates)
    for start, name, prim in candidates:
        if len(recs) == 20:
            break
        if bfs(start, name, prim, facts, 6) and not any(
                u["function"] == start for u in uses if u["lock_expr"].endswith(name)):
            sid = len(recs) + 1
            stacks[sid] = [prim, start]
            recs.append(lock(7000, BASE + 0x500000 + 0x40 * sid, f"&x->{name}", prim, 3, sid, "cg"))
    assert len(recs) == 20
    session("callgraph", [("cg", "host")], [(0, 1.0, {"cg": recs}, {"cg": stacks})], facts)


def wrapper():
    """f reaches the lock through wrapper w at depth 2 and through x, y, z at depth 3."""
    d = ROOT / "wrapper"
    d.mkdir(exist_ok=True)
    symbols = [fn(n, "fs/wr.c", 100 * i, 100 * i + 50) for i, n in enumerate(["wr_f", "wr_w", "wr_h", "wr_x", "wr_y", "wr_z"])]
    calls = [{"caller": a, "callee": b, "file": "fs/wr.c", "line": 1}
             for a, b in [("wr_f", "wr_w"), ("wr_w", "wr_h"), ("wr_f", "wr_x"), ("wr_x", "wr_y"), ("wr_y", "wr_z")]]
    uses = [use("wr_h", "fs/wr.c", 210, "&q->wr_lock", "_raw_spin_lock"),
            use("wr_z", "fs/wr.c", 510, "&q->wr_lock", "_raw_spin_lock")]
    write_json(d / "facts_wrapped.json", facts_doc(symbols, calls, uses, ["wr_w"]))
    write_json(d / "facts_plain.json", facts_doc(symbols, calls, uses, []))
    write_stacks(d / "stacks.txt", {1: ["_raw_spin_lock", "wr_f"]})


def ext4_mapping():
    stacks = {1: ["down_write", "ext4_map_blocks", "ext4_iomap_begin"]}
    recs = [lock(8000, BASE + 0x600000, "&ei->i_data_sem", "down_write", 12, 1, "fio")]
    facts = facts_doc(
        symbols=[fn("ext4_map_blocks", "fs/ext4/inode.c", 500, 720),
                 fn("ext4_iomap_begin", "fs/ext4/inode.c", 3400, 3500),
                 record("ext4_inode_info", "fs/ext4/ext4.h", 1000, 1120)],
        calls=[{"caller": "ext4_iomap_begin", "callee": "ext4_map_blocks", "file": "fs/ext4/inode.c", "line": 3440}],
        uses=[use("ext4_map_blocks", "fs/ext4/inode.c", 640, "&EXT4_I(inode)->i_data_sem", "down_write")],
        defs=[{"name": "i_data_sem", "file": "fs/ext4/ext4.h", "line": 1050}],
    )
    session("ext4_mapping", [("fio", "host")], [(0, 1.0, {"fio": recs}, {"fio": stacks})], facts)


def coverage():
    """574 distinct locks: 300 in records, 71 globals, 60 generic names found
    through their expression's definition, and 143 that cannot be mapped."""
    prims = list(CLASS_OF)
    symbols, uses, defs, globals_, calls = [], [], [], [], []
    stacks, recs = {}, []

    def add(i, name, expr):
        func = f"cov_fn{i:03}"
        file = f"fs/cov{i % 9}/ops.c"
        prim = prims[i % len(prims)]
        symbols.append(fn(func, file, 100 * i, 100 * i + 60))
        uses.append(use(func, file, 100 * i + 30, expr, prim))
        sid = i + 1
        stacks[sid] = [prim, func, "cov_entry"]
        recs.append(lock(9000, BASE + 0x700000 + 0x40 * i, name, prim, 1 + i % 3, sid, "mix"))

    i = 0
    for k in range(300):
        add(i, f"&o->lk_direct{k}", f"&o->lk_direct{k}")
        if k % 4 == 0:
            symbols.append(record(f"cov_obj{k // 4}", "include/linux/cov.h", 10 * k, 10 * k + 39))
        defs.append({"name": f"lk_direct{k}", "file": "include/linux/cov.h", "line": 10 * k + 5})
        i += 1
    for k in range(71):
        add(i, f"cov_global{k}", f"&cov_global{k}")
        globals_.append(f"cov_global{k}")
        symbols.append({"name": f"cov_global{k}", "kind": "global_variable", "file": "kernel/cov.c",
                        "start_line": 20 + k, "end_line": 20 + k})
        defs.append({"name": f"cov_global{k}", "file": "kernel/cov.c", "line": 20 + k})
        i += 1
    for k in range(60):
        expr = f"&gen{k}->lock"
        add(i, expr, expr)
        symbols.append(record(f"cov_gen{k}", "include/linux/gen.h", 100 * k, 100 * k + 20))
        # Half are recorded verbatim, half without the address-of.
        defs.append({"name": expr if k % 2 else expr[1:], "file": "include/linux/gen.h", "line": 100 * k + 7})
        i += 1
    for k in range(100):
        add(i, f"&anon->lk_nodef{k}", f"&anon->lk_nodef{k}")
        i += 1
    for k in range(43):
        add(i, f"&tmp{k}->lock", f"&tmp{k}->lock")
        i += 1
    symbols.append(fn("cov_entry", "fs/cov/entry.c", 1, 10))
    facts = facts_doc(symbols, calls, uses, [], globals_, defs)
    assert len(recs) == 574
    session("coverage574", [("mix", "host")], [(0, 2.0, {"mix": recs}, {"mix": stacks})], facts)


if __name__ == "__main__":
    pair_low()
    pair_high()
    interrupts()
    callgraph()
    wrapper()
    ext4_mapping()
    coverage()
