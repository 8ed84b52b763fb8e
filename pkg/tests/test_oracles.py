"""Enumeration and GA baselines against brute-force recomputation."""

import itertools
import math

import numpy as np
import pytest

from eocsearch import cases
from eocsearch.fault import tail_fault_current
from eocsearch.grid import TopologyState
from eocsearch.oracles import (
    GAConfig,
    ga_search,
    gen_dataset,
    global_enumerate,
    local_enumerate,
    read_dataset,
    write_dataset,
)

from helpers import make_case, random_state


def brute_force_best(case, initial_status, relay, k):
    """Independently coded exhaustive maximizer (nested loops, same tie-break)."""
    candidates = [
        i for i in range(case.m)
        if i != relay.line_id and initial_status.in_service(i)
    ]
    best_current = -math.inf
    best_trips = None
    for size in range(0, k + 1):
        for trips in itertools.combinations(candidates, size):
            bits = list(initial_status.status)
            for t in trips:
                bits[t] = 0
            current = tail_fault_current(case, TopologyState(status=tuple(bits)), relay)
            if current > best_current or (current == best_current and trips < best_trips):
                best_current, best_trips = current, trips
    return best_current, best_trips


class TestGlobalEnumerate:
    def test_k_zero_returns_initial(self):
        case = cases.toy6()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(0, "from")
        result = global_enumerate(case, status, relay, 0)
        assert result.eoc_status == status
        assert result.i_max == tail_fault_current(case, status, relay)
        assert result.evaluated_count == 1

    def test_ieee39_count_is_binomial_sum(self):
        case = cases.ieee39()
        status = TopologyState.all_in_service(case.m)
        result = global_enumerate(case, status, relay=case.relay(0, "from"), k=3)
        assert result.evaluated_count == 1 + 33 + 528 + 5456  # C(33, 0..3)
        assert result.evaluated_count == 6018

    def test_matches_independent_brute_force(self):
        case = cases.toy6()
        rng = np.random.default_rng(61)
        for _ in range(6):
            relay = case.relays[int(rng.integers(0, len(case.relays)))]
            status = random_state(case, rng, max_out=2, keep_in=(relay.line_id,))
            result = global_enumerate(case, status, relay, 2)
            best_current, best_trips = brute_force_best(case, status, relay, 2)
            assert result.i_max == best_current
            got_trips = tuple(sorted(set(status.out_lines()) ^ set(result.eoc_status.out_lines())))
            assert got_trips == best_trips

    def test_workers_agree_with_serial(self):
        case = cases.toy9()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(2, "from")
        serial = global_enumerate(case, status, relay, 2, workers=1)
        parallel = global_enumerate(case, status, relay, 2, workers=4)
        assert serial.eoc_status == parallel.eoc_status
        assert serial.i_max == parallel.i_max

    def test_dominates_initial(self):
        case = cases.toy9()
        rng = np.random.default_rng(67)
        for _ in range(8):
            relay = case.relays[int(rng.integers(0, len(case.relays)))]
            status = random_state(case, rng, max_out=2, keep_in=(relay.line_id,))
            initial = tail_fault_current(case, status, relay)
            assert global_enumerate(case, status, relay, 2).i_max >= initial


class TestLocalEnumerate:
    def test_saturated_region_equals_global(self):
        case = cases.toy9()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(4, "from")
        local = local_enumerate(case, status, relay, k=2, r=case.n)
        globl = global_enumerate(case, status, relay, k=2)
        assert local.i_max == globl.i_max
        assert local.eoc_status == globl.eoc_status

    def test_radius_one_on_chain(self):
        case = make_case(
            "chain5", 5,
            [(0, 1, 0.1), (1, 2, 0.1), (2, 3, 0.1), (3, 4, 0.1)],
            [(0, 1.0, 0.1)],
        )
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(1, "from")  # protected 1-2; r=1 reaches buses 0..3
        result = local_enumerate(case, status, relay, k=2, r=1)
        # candidate lines: 0-1, 2-3 (endpoints within one hop), not 3-4
        assert result.evaluated_count == 1 + 2 + 1  # sizes 0,1,2 over 2 lines

    def test_never_beats_global(self):
        case = cases.toy9()
        rng = np.random.default_rng(71)
        for _ in range(10):
            relay = case.relays[int(rng.integers(0, len(case.relays)))]
            status = random_state(case, rng, max_out=2, keep_in=(relay.line_id,))
            local = local_enumerate(case, status, relay, k=2, r=1)
            globl = global_enumerate(case, status, relay, k=2)
            assert local.i_max <= globl.i_max + 1e-15
            assert local.i_max >= tail_fault_current(case, status, relay)


class TestGaSearch:
    CFG = GAConfig(population=20, generations=25, crossover_rate=0.9, mutation_rate=0.08, penalty_weight=1000.0, seed=5)

    def test_never_worse_than_initial(self):
        case = cases.toy9()
        rng = np.random.default_rng(73)
        for _ in range(5):
            relay = case.relays[int(rng.integers(0, len(case.relays)))]
            status = random_state(case, rng, max_out=2, keep_in=(relay.line_id,))
            initial = tail_fault_current(case, status, relay)
            result = ga_search(case, status, relay, 2, self.CFG)
            assert result.i_max >= initial

    def test_finds_single_trip_optimum(self):
        # toy6 is small enough that a modest budget must find the best trip
        case = cases.toy6()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(2, "from")
        best = global_enumerate(case, status, relay, 1)
        result = ga_search(case, status, relay, 1, self.CFG)
        assert result.i_max == pytest.approx(best.i_max, rel=1e-12)

    def test_respects_trip_budget(self):
        case = cases.toy9()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(0, "from")
        result = ga_search(case, status, relay, 2, self.CFG)
        assert len(result.eoc_status.out_lines()) <= 2

    def test_infeasible_genome_penalized_below_feasible(self):
        # fitness(popcount = k+2) < fitness(popcount <= k) at equal current
        case = cases.toy9()
        relay = case.relay(0, "from")
        status = TopologyState.all_in_service(case.m)
        current = tail_fault_current(case, status, relay)
        penalty = self.CFG.penalty_weight * 2
        assert current - penalty < current

    def test_deterministic_under_seed(self):
        case = cases.toy9()
        status = TopologyState.all_in_service(case.m)
        relay = case.relay(5, "from")
        a = ga_search(case, status, relay, 2, self.CFG)
        b = ga_search(case, status, relay, 2, self.CFG)
        assert a.eoc_status == b.eoc_status
        assert a.i_max == b.i_max


class TestGenDataset:
    def test_deterministic_bytes(self, tmp_path):
        case = cases.toy6()
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(gen_dataset(case, 20, 2, 2, seed=9), p1)
        write_dataset(gen_dataset(case, 20, 2, 2, seed=9), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_labels_within_budget_and_dominant(self):
        case = cases.toy6()
        samples = gen_dataset(case, 25, 2, 2, seed=10)
        for s in samples:
            initial_out = set(i for i, b in enumerate(s.status.status) if b == 0)
            label_out = set(i for i, b in enumerate(s.eoc_out) if b == 1)
            new_trips = label_out - initial_out
            assert initial_out <= label_out
            assert len(new_trips) <= 2
            assert s.i_max >= tail_fault_current(case, s.status, s.relay) - 1e-15

    def test_round_trip_through_file(self, tmp_path):
        case = cases.toy6()
        samples = gen_dataset(case, 10, 2, 2, seed=11)
        path = tmp_path / "d.jsonl"
        write_dataset(samples, path)
        back = read_dataset(path, case)
        assert back == samples

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError, match="sample_count"):
            gen_dataset(cases.toy6(), 0, 2, 2, seed=1)
