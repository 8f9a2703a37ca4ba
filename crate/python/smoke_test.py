"""Smoke test for the circlemap extension module."""

import math

import circlemap


def main():
    model = circlemap.Model(1e3)
    assert len(model.critical_points) == 2
    assert abs(model.eval_map(0.0, 0.0) - 0.0) < 1e-12

    orbit = model.orbit(0.3, 10)
    assert len(orbit["points"]) == 11
    assert len(orbit["big_d"]) == 10

    rec, closed = model.transversality(0.3, 12)
    assert abs(rec - closed) <= 1e-10 * (1 + abs(closed))

    paper = model.profile()
    assert paper.vacuous
    emp = model.profile("empirical", sigma=0.01, delta0=0.005, delta=0.001)
    assert not emp.vacuous and math.isclose(emp.sigma, 0.01)

    reports = circlemap.check(model, emp, 0.3, 30)
    assert [r["kind"] for r in reports[:4]] == ["MIS", "X", "Y", "W"]

    record, outcomes = circlemap.exclude_mc(model, emp, 20, 2000, seed=1)
    fractions = record["survivor_fraction"]
    assert all(b <= a for a, b in zip(fractions, fractions[1:]))
    assert len(outcomes) == 2000
    again, _ = circlemap.exclude_mc(model, emp, 20, 2000, seed=1)
    assert again == record

    cells_record, cells = circlemap.exclude_bisect(model, emp, 10, min_width=1e-3)
    assert cells and cells_record["mode"] == "bisect"

    report = circlemap.verify("trans", circlemap.Model(1e6), circlemap.Model(1e6).profile(), trials=100, seed=3)
    assert report["hard_failures"] == 0 and report["trials"] == 100

    cfg = circlemap.parse_config("seed = 2\n[profile]\nbeta = 1.8\n")
    assert cfg["seed"] == 2 and cfg["profile"]["beta"] == 1.8

    records = circlemap.sweep(
        "l_list = [100.0, 1000.0]\nn_max = 10\nsamples = 1000\n"
        "[profile]\nkind = \"empirical\"\nsigma = 0.01\ndelta0 = 0.005\ndelta = 0.001\n"
    )
    assert [r["l"] for r in records] == [100.0, 1000.0]

    try:
        circlemap.Model(1e3).profile(beta=2.5)
    except ValueError:
        pass
    else:
        raise AssertionError("beta outside (3/2, 2) accepted")

    print("circlemap", circlemap.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
