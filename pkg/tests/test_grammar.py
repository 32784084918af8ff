import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haggis.grammar import (Fragment, Pcfg, PriorParams, Production, estimate_pcfg, fragment_prior,
                            fragment_size, log_geometric, prior_size, sample_fragment_from_prior)
from haggis.symbols import SymbolTable
from haggis.synthetic import arith_corpus, arith_grammar
from haggis.trees import parse_bracketed

from oracles import ml_probs, rules_of


@pytest.fixture
def arith():
    g = arith_grammar()
    return g, g.pcfg()


def _extend(key, rule, path=()):
    """Replace the first frontier slot for ``rule.lhs`` with the bare rule."""
    for i, c in enumerate(key[1:], start=1):
        if type(c) is tuple:
            sub = _extend(c, rule)
            if sub is not None:
                return key[:i] + (sub,) + key[i + 1:]
        elif c == rule.lhs:
            return key[:i] + ((rule.lhs,) + rule.rhs,) + key[i + 1:]
    return None


class TestEstimation:
    def test_toy_ratios(self):
        trees, g = arith_corpus()
        pcfg = estimate_pcfg(trees)
        want = {("E", ("T", "+", "T")): 0.7, ("E", ("T",)): 0.3, ("T", ("F", "*", "F")): 0.6,
                ("T", ("F",)): 0.4, ("F", ("(", "E", ")")): 0.1, ("F", ("id",)): 0.9}
        for (lhs, rhs), p in want.items():
            rule = Production(g.sym(lhs).id, tuple(g.sym(s).id for s in rhs))
            assert pcfg.prob(rule) == pytest.approx(p, abs=1e-15)

    def test_single_tree_against_hand_count(self, table):
        tree = parse_bracketed("(A (B x) (B y) (A (B x)))", table)
        pcfg = estimate_pcfg([tree])
        probs = ml_probs(rules_of([tree]))
        assert len(pcfg.counts) == len(probs)
        for (lhs, rhs), p in probs.items():
            assert pcfg.prob(Production(lhs, rhs)) == float(p)
        b = table.by_text("B").id
        assert pcfg.prob(Production(b, (table.by_text('"x"').id,))) == pytest.approx(2 / 3)

    def test_one_rule_per_nonterminal(self, table):
        tree = parse_bracketed("(A (B x) (C y))", table)
        assert set(estimate_pcfg([tree]).probs.values()) == {1.0}

    def test_distributions_sum_to_one(self, demo_corpus):
        trees, _ = demo_corpus
        pcfg = estimate_pcfg(trees)
        sums = {}
        for r, p in pcfg.probs.items():
            sums[r.lhs] = sums.get(r.lhs, 0.0) + p
        assert all(s == pytest.approx(1.0, abs=1e-12) for s in sums.values())

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            estimate_pcfg([])

    def test_json_round_trip(self, demo_corpus):
        trees, table = demo_corpus
        pcfg = estimate_pcfg(trees, table)
        text = json.dumps(pcfg.to_json())
        assert json.dumps(Pcfg.from_json(json.loads(text), table).to_json()) == text
        fresh = Pcfg.from_json(json.loads(text), SymbolTable())
        by_text = {(fresh.symbols[r.lhs].text, tuple(fresh.symbols[s].text for s in r.rhs)): p
                   for r, p in fresh.probs.items()}
        assert by_text == {(table[r.lhs].text, tuple(table[s].text for s in r.rhs)): p
                           for r, p in pcfg.probs.items()}


class TestPrior:
    def test_single_production(self, arith):
        g, pcfg = arith
        lp = fragment_prior(g.key(("E", "T")), pcfg, PriorParams(p_stop=0.5))
        assert lp == pytest.approx(math.log(0.15), abs=1e-12)

    def test_degenerate_geometric(self, table):
        tree = parse_bracketed("(A x)", table)
        pcfg = estimate_pcfg([tree])
        assert fragment_prior(Fragment.from_tree(tree), pcfg, PriorParams(p_stop=1.0)) == 0.0

    def test_depth_two(self, arith):
        g, pcfg = arith
        key = g.key(("E", ("T", "F", "*", "F"), "+", "T"))
        lp = fragment_prior(key, pcfg, PriorParams(p_stop=0.5))
        assert lp == pytest.approx(math.log(0.25 * 0.7 * 0.6), abs=1e-12)

    def test_unknown_rule(self, arith):
        g, pcfg = arith
        with pytest.raises(KeyError):
            fragment_prior(g.key(("E", "F")), pcfg, PriorParams())

    def test_geometric_convention(self):
        assert log_geometric(1, 0.3) == pytest.approx(math.log(0.3))
        assert log_geometric(3, 0.3) == pytest.approx(math.log(0.3 * 0.7 ** 2))
        assert log_geometric(0, 0.3) == -math.inf

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
    def test_params_validated(self, bad):
        with pytest.raises(ValueError):
            PriorParams(p_stop=bad)

    def test_group_heads_do_not_add_size(self, table):
        tree = parse_bracketed("(A (B x) y)", table)
        group = table.intern("A::kids", role="group")
        from haggis.trees import TreeNode
        tree = TreeNode(table.by_text("A"), [TreeNode(group, tree.children)])
        key = Fragment.from_tree(tree).key
        assert fragment_size(key) == 3
        assert prior_size(key, table) == 2

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(["E", "T", "F"]))
    def test_extension_factorises(self, seed, root):
        g = arith_grammar()
        pcfg = g.pcfg()
        params = PriorParams(p_stop=0.4)
        rng = np.random.default_rng(seed)
        frag = sample_fragment_from_prior(g.sym(root).id, pcfg, params, rng)
        rules = sorted(pcfg.counts)
        rule = rules[int(rng.integers(len(rules)))]
        bigger = _extend(frag.key, rule)
        if bigger is None:
            return
        ratio = fragment_prior(bigger, pcfg, params) - fragment_prior(frag, pcfg, params)
        assert ratio == pytest.approx(math.log(1 - params.p_stop) + math.log(pcfg.prob(rule)), abs=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 10**6))
    def test_log_matches_direct(self, seed):
        g = arith_grammar()
        pcfg = g.pcfg()
        params = PriorParams(p_stop=0.3)
        rng = np.random.default_rng(seed)
        frag = sample_fragment_from_prior(g.sym("E").id, pcfg, params, rng)
        if frag.size > 6:
            return
        direct = params.p_stop * (1 - params.p_stop) ** (frag.size - 1)
        for r in frag.productions():
            direct *= pcfg.prob(r)
        assert math.exp(fragment_prior(frag, pcfg, params)) == pytest.approx(direct, rel=1e-12)


class TestPriorSampling:
    def test_p_stop_one_gives_single_rules(self, arith):
        g, pcfg = arith
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert sample_fragment_from_prior(g.sym("E").id, pcfg, PriorParams(p_stop=1.0), rng).size == 1

    def test_mean_size(self, arith):
        g, pcfg = arith
        rng = np.random.default_rng(1)
        sizes = [sample_fragment_from_prior(g.sym("E").id, pcfg, PriorParams(p_stop=0.5), rng).size
                 for _ in range(20000)]
        assert np.mean(sizes) == pytest.approx(2.0, rel=0.03)

    def test_fragments_use_grammar_rules(self, arith):
        g, pcfg = arith
        rng = np.random.default_rng(2)
        for _ in range(500):
            frag = sample_fragment_from_prior(g.sym("T").id, pcfg, PriorParams(p_stop=0.3), rng)
            assert frag.root == g.sym("T").id
            assert all(r in pcfg for r in frag.productions())

    def test_terminal_root_rejected(self, arith):
        g, pcfg = arith
        with pytest.raises(ValueError):
            sample_fragment_from_prior(g.sym("id").id, pcfg, PriorParams(), 0)


class TestPriorMass:
    """Enumerate fragments explicitly and compare with the oracle recurrence."""

    @staticmethod
    def enumerate(pcfg, sym, budget):
        out = []
        for rule in pcfg.by_lhs[sym]:
            partial = [((sym,), 1)]
            for c in rule.rhs:
                nxt = []
                for key, used in partial:
                    nxt.append((key + (c,), used))
                    if pcfg.is_nonterminal(c) and used < budget:
                        for sub, n in TestPriorMass.enumerate(pcfg, c, budget - used):
                            nxt.append((key + (sub,), used + n))
                partial = nxt
            out.extend(partial)
        return out

    @pytest.mark.parametrize("p_stop", [0.5, 0.7])
    @pytest.mark.parametrize("root", ["E", "T", "F"])
    def test_enumeration_matches_recurrence(self, arith, root, p_stop):
        from oracles import prior_mass_upto
        g, pcfg = arith
        frags = self.enumerate(pcfg, g.sym(root).id, 4)
        assert len({k for k, _ in frags}) == len(frags)
        total = sum(math.exp(fragment_prior(k, pcfg, PriorParams(p_stop=p_stop))) for k, _ in frags)
        probs = {(r.lhs, r.rhs): Fraction(c, pcfg.lhs_totals[r.lhs]) for r, c in pcfg.counts.items()}
        assert total == pytest.approx(float(prior_mass_upto(probs, g.sym(root).id, 4, Fraction(p_stop).limit_denominator())),
                                      abs=1e-9)
