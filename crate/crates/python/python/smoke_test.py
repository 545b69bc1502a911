"""Smoke test for the dsgen extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import dsgen


def main():
    q = dsgen.Structure("fifo", namespace="smoke-fifo")
    assert q.call("pop", 0) == (False, [0])
    for v in (1, 2, 3):
        q.call("push", v)
    assert [q.call("pop", 0)[1][0] for _ in range(3)] == [1, 2, 3]

    lru = dsgen.Structure("lru", capacity=2, namespace="smoke-lru")
    for k in (1, 2, 3):
        assert lru.call("insert", k, k) is True
    assert lru.call("find", 1, 0) == (False, [0])
    assert lru.call("find", 3, 0) == (True, [3])
    assert lru.attribute("size") == 2 and lru.map_len("map") == 2

    try:
        q.call("push")
    except ValueError:
        pass
    else:
        raise AssertionError("arity mismatch not reported")

    ir = dsgen.dump_ir("fifo", "post-opt")
    assert "prev" not in ir.split("passes:")[0]

    z = dsgen.Zipfian(1 << 20, 0.4)
    draws = z.sample(200_000, seed=7)
    top = draws.count(0) / len(draws)
    assert abs(top - z.probability(0)) / z.probability(0) < 0.05

    r = dsgen.run_bench("fifo", threads=2, ops=2000)
    assert r["commits"] == 4000
    print(dsgen.CSV_HEADER)
    print(",".join(str(r[k]) for k in dsgen.CSV_HEADER.split(",")))
    print("smoke test ok")


if __name__ == "__main__":
    main()
