"""Verdicts, metrics, and LP-bound metrics of the final verification MIP."""

import numpy as np
import pytest

from oracles import milp_brute_force
from reluverify.bounds import BoundStore, forward_eval, ibp_forward
from reluverify.driver import (
    Outcome,
    compute_metrics,
    lp_bound_of_final_mip,
    verify,
    verify_with_tightening,
)
from reluverify.fixtures import (
    appendix_box,
    appendix_network,
    random_box,
    random_network,
    random_property_text,
)
from reluverify.obbt import ObbtConfig, obbt_rh
from reluverify.vnnlib import CERT_MARGIN, parse_vnnlib

APPENDIX_DECLS = (
    "(declare-const X_0 Real)(declare-const X_1 Real)(declare-const Y_0 Real)"
    "(assert (>= X_0 -1))(assert (<= X_0 1))"
    "(assert (>= X_1 0))(assert (<= X_1 1))"
)


def appendix_setup(tight=True):
    net = appendix_network()
    if tight:
        store = obbt_rh(net, *appendix_box(), ObbtConfig(H=2, tighten_output=True))
    else:
        store = ibp_forward(net, *appendix_box())
    return net, store


class TestVerdicts:
    def test_nonnegative_output_holds(self):
        net, store = appendix_setup()
        prop = parse_vnnlib(APPENDIX_DECLS + "(assert (<= Y_0 0))")
        verdict = verify(net, prop, store)
        assert verdict.outcome == Outcome.HOLDS
        assert verdict.certificate[0].dual_bound >= 0.0

    def test_upper_bound_violated_with_witness(self):
        net, store = appendix_setup()
        prop = parse_vnnlib(APPENDIX_DECLS + "(assert (>= Y_0 1.5))")
        verdict = verify(net, prop, store)
        assert verdict.outcome == Outcome.VIOLATED
        w = forward_eval(net, verdict.counterexample).output[0]
        assert w >= 1.5 + CERT_MARGIN
        assert (verdict.counterexample >= [-1, 0]).all()
        assert (verdict.counterexample <= [1, 1]).all()

    def test_empty_region_is_vacuously_safe(self):
        net = appendix_network()
        prop = parse_vnnlib(
            "(declare-const X_0 Real)(declare-const X_1 Real)(declare-const Y_0 Real)"
            "(assert (>= X_0 2))(assert (<= X_0 1))"
            "(assert (>= X_1 0))(assert (<= X_1 1))"
            "(assert (<= Y_0 0))"
        )
        verdict, store = verify_with_tightening(
            net, prop, lambda: ibp_forward(net, prop.input_lo, prop.input_hi)
        )
        assert verdict.outcome == Outcome.HOLDS
        assert verdict.vacuous
        assert store is None

    def test_time_limit_degrades_to_unknown(self):
        net, store = appendix_setup(tight=False)
        prop = parse_vnnlib(APPENDIX_DECLS + "(assert (>= Y_0 2.5))")
        verdict = verify(net, prop, store, time_limit_s=0.0)
        assert verdict.outcome == Outcome.UNKNOWN
        assert verdict.certificate[0].status == "time_limit"

    def test_multi_atom_clause_feasible(self):
        net, store = appendix_setup()
        # w between 0.5 and 1.5 is reachable, e.g. at (0.75, 0.25)
        prop = parse_vnnlib(
            APPENDIX_DECLS + "(assert (or (and (>= Y_0 0.5) (<= Y_0 1.5))))"
        )
        verdict = verify(net, prop, store)
        assert verdict.outcome == Outcome.VIOLATED
        w = forward_eval(net, verdict.counterexample).output[0]
        assert 0.5 + CERT_MARGIN <= w <= 1.5 - CERT_MARGIN

    def test_multi_atom_clause_infeasible(self):
        net, store = appendix_setup()
        prop = parse_vnnlib(
            APPENDIX_DECLS + "(assert (or (and (>= Y_0 5) (<= Y_0 6))))"
        )
        verdict = verify(net, prop, store)
        assert verdict.outcome == Outcome.HOLDS

    def test_disjunction_short_circuits_on_violation(self):
        net, store = appendix_setup()
        prop = parse_vnnlib(
            APPENDIX_DECLS + "(assert (or (and (>= Y_0 5)) (and (>= Y_0 1.5))))"
        )
        verdict = verify(net, prop, store)
        assert verdict.outcome == Outcome.VIOLATED

    def test_parallel_clause_workers_agree(self):
        net, store = appendix_setup()
        prop = parse_vnnlib(
            APPENDIX_DECLS + "(assert (or (and (>= Y_0 5)) (and (<= Y_0 0))))"
        )
        serial = verify(net, prop, store, workers=1)
        pooled = verify(net, prop, store, workers=4)
        assert serial.outcome == pooled.outcome


class TestSoundness:
    def _cases(self, count=25):
        for seed in range(count):
            net = random_network(seed)
            lo, hi = random_box(net, seed)
            kind = ("holds", "violated", "random")[seed % 3]
            text = random_property_text(net, seed, lo, hi, kind=kind)
            yield net, parse_vnnlib(text)

    def test_verdicts_match_dense_sampling(self):
        rng = np.random.default_rng(0)
        for net, prop in self._cases():
            store = obbt_rh(net, prop.input_lo, prop.input_hi, ObbtConfig(H=2))
            verdict = verify(net, prop, store)
            xs = rng.uniform(prop.input_lo, prop.input_hi, size=(100_000, net.input_dim))
            ys = forward_eval(net, xs).output
            sampled_violation = any(
                np.all(
                    np.stack(
                        [ys @ np.array(a.coeffs) - a.rhs for a in c.atoms], axis=1
                    )
                    <= -CERT_MARGIN,
                    axis=1,
                ).any()
                for c in prop.clauses
            )
            if verdict.outcome == Outcome.HOLDS:
                assert not sampled_violation
            if verdict.outcome == Outcome.VIOLATED:
                w = forward_eval(net, verdict.counterexample).output
                assert prop.violated_at(w, margin=CERT_MARGIN)

    def test_cutoff_never_changes_answers(self):
        for net, prop in self._cases(15):
            store = obbt_rh(net, prop.input_lo, prop.input_hi, ObbtConfig(H=2))
            on = verify(net, prop, store, cutoff_zero=True)
            off = verify(net, prop, store, cutoff_zero=False)
            assert on.outcome == off.outcome

    def test_bound_method_never_flips_answers(self):
        for net, prop in self._cases(15):
            loose = ibp_forward(net, prop.input_lo, prop.input_hi)
            tight = obbt_rh(net, prop.input_lo, prop.input_hi, ObbtConfig(H=2))
            a = verify(net, prop, loose)
            b = verify(net, prop, tight)
            decided = {Outcome.HOLDS, Outcome.VIOLATED}
            if a.outcome in decided and b.outcome in decided:
                assert a.outcome == b.outcome


class TestLpBoundMetric:
    def test_appendix_interval_bounds_give_zero(self):
        net, store = appendix_setup(tight=False)
        prop = parse_vnnlib(APPENDIX_DECLS + "(assert (<= Y_0 0))")
        val = lp_bound_of_final_mip(net, prop.clauses[0], store)
        assert val == pytest.approx(0.0, abs=1e-9)

    def test_all_stabilized_means_lp_equals_mip(self):
        net = appendix_network()
        lo, hi = np.array([2.0, 0.5]), np.array([3.0, 1.0])
        store = ibp_forward(net, lo, hi)
        prop = parse_vnnlib(
            "(declare-const X_0 Real)(declare-const X_1 Real)(declare-const Y_0 Real)"
            "(assert (>= X_0 2))(assert (<= X_0 3))"
            "(assert (>= X_1 0.5))(assert (<= X_1 1))"
            "(assert (<= Y_0 2.4))"
        )
        from reluverify.graph import extract_window
        from reluverify.milp import encode_window

        lp_val = lp_bound_of_final_mip(net, prop.clauses[0], store)
        atom = prop.clauses[0].atoms[0]
        win = extract_window(net, 0, net.num_gemm)
        mip = encode_window(net, win, store, np.asarray(atom.coeffs), -atom.rhs)
        mip_val, _ = milp_brute_force(mip, "min")
        assert lp_val == pytest.approx(mip_val, abs=1e-9)

    def test_tighter_store_never_hurts_the_relaxation(self):
        for seed in range(15):
            net = random_network(seed)
            lo, hi = random_box(net, seed)
            text = random_property_text(net, seed, lo, hi)
            prop = parse_vnnlib(text)
            clause = prop.clauses[0]
            loose = ibp_forward(net, lo, hi)
            tight = obbt_rh(net, lo, hi, ObbtConfig(H=2))
            lp_loose = lp_bound_of_final_mip(net, clause, loose)
            lp_tight = lp_bound_of_final_mip(net, clause, tight)
            assert lp_tight >= lp_loose - 1e-6
            from reluverify.graph import extract_window
            from reluverify.milp import encode_window

            atom = clause.atoms[0]
            win = extract_window(net, 0, net.num_gemm)
            win_mip = encode_window(net, win, tight, np.asarray(atom.coeffs), -atom.rhs)
            mip_val, _ = milp_brute_force(win_mip, "min")
            assert lp_tight <= mip_val + 1e-6


class TestMetrics:
    def test_counts_and_range_from_known_intervals(self):
        store = BoundStore(np.zeros(1), np.ones(1))
        store.set_pre(1, [-1.0, -2.0], [2.0, 1.0])
        report = compute_metrics(store)
        assert report.layer_counts[1] == {
            "inactive": 0,
            "active": 0,
            "stabilized": 0,
            "unstabilized": 2,
        }
        assert report.range_all == pytest.approx(3.0)
        assert report.range_unstabilized == pytest.approx(3.0)

    def test_boundary_classification_counts(self):
        store = BoundStore(np.zeros(1), np.ones(1))
        store.set_pre(1, [1.0, -3.0], [2.0, 0.0])
        counts = compute_metrics(store).layer_counts[1]
        assert counts == {"inactive": 1, "active": 1, "stabilized": 2, "unstabilized": 0}
        assert compute_metrics(store).range_unstabilized is None

    def test_counts_sum_to_width(self):
        for seed in range(10):
            net = random_network(seed)
            lo, hi = random_box(net, seed)
            report = compute_metrics(ibp_forward(net, lo, hi))
            for i, counts in report.layer_counts.items():
                assert counts["stabilized"] == counts["inactive"] + counts["active"]
                total = counts["stabilized"] + counts["unstabilized"]
                assert total == net.widths[i]

    def test_tightening_shrinks_the_range_metric(self):
        for seed in range(10):
            net = random_network(seed)
            lo, hi = random_box(net, seed)
            loose = compute_metrics(ibp_forward(net, lo, hi))
            tight = compute_metrics(obbt_rh(net, lo, hi, ObbtConfig(H=2)))
            assert tight.range_all <= loose.range_all + 1e-12
