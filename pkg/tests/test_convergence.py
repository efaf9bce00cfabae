import numpy as np

from dsflow.convergence import ConvergenceTable, convergence_study


def test_table_orders_and_format():
    t = ConvergenceTable("demo", [4, 8, 16], [0.25, 0.125, 0.0625], {"u": [1.0, 0.25, 0.0625]})
    assert np.allclose(t.orders("u"), 2.0)
    text = t.format()
    assert text.splitlines()[0] == "demo"
    assert "2.00" in text


def test_mixed_rates_small():
    t = convergence_study("mixed", {"s": 1, "variant": "full"}, (4, 8, 16))
    for k in ("u", "div u", "p"):
        assert t.final_order(k) > 1.7


def test_interpolation_direct_beats_mapped():
    d = convergence_study("interpolation", {"r": 2, "family": "direct"}, (4, 8, 16))
    m = convergence_study("interpolation", {"r": 2, "family": "mapped"}, (4, 8, 16))
    assert d.final_order("u") > 2.7
    assert m.final_order("u") < d.final_order("u")
