"""Smoke test for the forecast_market extension module."""

import math

import forecast_market as fm


def main():
    assert math.isclose(fm.quantile_loss(0.9, 1.0, 0.0), 0.9)
    assert math.isclose(fm.quantile_loss(0.9, 0.0, 1.0), 0.1)
    assert fm.loss_subgradient(0.5, 1.0, 0.0) == -0.5

    p = fm.project_to_simplex([0.5, 0.5, 0.5])
    assert all(math.isclose(v, 1 / 3) for v in p)

    model = fm.QuantileModel(0.5, 3)
    assert model.weights == [1 / 3] * 3
    model.rqr_update([1.0, 2.0, 3.0], 2.5, missing=[False, True, False])
    assert math.isclose(sum(model.weights), 1.0)
    assert len(model.correction) == 3

    phi = fm.shapley_exact(model, [1.0, 2.0, 3.0], 2.0)
    assert len(phi) == 3

    sellers = ["a", "b", "c"]
    market = fm.Market(sellers, [0.1, 0.5, 0.9])
    for t in range(20):
        market.open_session(t)
        for i, s in enumerate(sellers):
            if (t + i) % 5 == 0:
                continue
            market.submit(t, s, [i - 1.0, float(i), i + 1.0])
        market.close(t)
        out = market.settle(t, 1.0, 10.0)
        assert math.isclose(sum(out["totals"]), 10.0, rel_tol=1e-9)
    assert math.isclose(sum(market.cumulative()), 200.0, rel_tol=1e-9)
    assert fm.verify_ledger(market.ledger_jsonl()) == 20

    try:
        fm.QuantileModel(1.5, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid level accepted")

    stats = fm.run_monte_carlo("rqr", missing_rate=0.05, horizon=2000, runs=2, burn_in=500)
    assert len(stats) == 1 and len(stats[0]["bias"]) == 3

    print("smoke test passed")


if __name__ == "__main__":
    main()
