from tensorsel import ir, rules
from tensorsel.egraph import CostModel, ematch, extract_best, run_schedule
from tensorsel.ir import Broadcast, Imm

from conftest import corpus_program


def i32(v):
    return Imm("i32", v)


MATMUL_BUFFERS = {"A": ("bf16", 512, "mem"), "B": ("bf16", 512, "mem"),
                "matmul": ("f32", 256, "amx"),
                "matmul_wrapper": ("f32", 256, "mem")}


def matmul_update_stmt():
    prog = corpus_program("matmul_standard")
    from tensorsel.selector import inject_data_movement
    return inject_data_movement(prog).body[2]


def saturate(stmt, rs, iterations=6, categories=None):
    g = rules.new_graph()
    root = rules.encode_stmt(g, stmt)
    rules.seed_facts(g, MATMUL_BUFFERS, rs.shapes)
    active = [r for r in rs.for_target("amx")
              if categories is None or r.category in categories]
    run_schedule(g, active, iterations)
    return g, root


class TestCatalog:
    def test_rule_census(self, default_ruleset):
        rs = default_ruleset
        assert len(rs.rules) >= 25
        for cat in ("axiomatic", "application", "lowering", "supporting"):
            assert rs.by_category(cat), cat

    def test_catalog_serializes(self, default_ruleset):
        text = default_ruleset.catalog_text()
        for name in ("broadcast-flatten", "amx-b-vnni", "amx-matmul",
                     "multiply-lanes", "conv-toeplitz"):
            assert name in text

    def test_target_filter(self, default_ruleset):
        amx = default_ruleset.for_target("amx")
        assert all(r.target in ("", "amx") for r in amx)
        assert any(r.target == "amx" for r in amx)
        assert len(default_ruleset.for_target("all")) == len(default_ruleset.rules)

    def test_semantic_rules_have_generators(self, default_ruleset):
        for r in default_ruleset:
            if r.semantic:
                assert r.fuzz is not None, r.name

    def test_application_rules_are_relational(self, default_ruleset):
        for r in default_ruleset.by_category("application"):
            assert not r.semantic, r.name
        for r in default_ruleset.by_category("supporting"):
            assert not r.semantic, r.name


class TestInstances:
    def test_broadcast_flatten_instance(self, default_ruleset):
        g = rules.new_graph()
        v = g.add(("var", "v"))
        nested = g.add(("bcast",), (g.add(("bcast",), (v, g.add_int(2))),
                                    g.add_int(3)))
        flat = g.add(("bcast",), (v, g.add_int(6)))
        run_schedule(g, default_ruleset.by_category("axiomatic")
                     + default_ruleset.by_category("supporting"), 2)
        assert g.find(nested) == g.find(flat)

    def test_movement_cancellation_instance(self, default_ruleset):
        g = rules.new_graph()
        t = g.add(("var", "t"))
        wrapped = g.add(("l2l", "mem", "amx"),
                        (g.add(("l2l", "amx", "mem"), (t,)),))
        run_schedule(g, default_ruleset.by_category("lowering"), 1)
        assert g.find(wrapped) == g.find(t)

    def test_application_rules_never_union(self, default_ruleset):
        # saturate with axioms+supporting, then fire application rules alone:
        # facts appear, the union-find stays put
        stmt = matmul_update_stmt()
        g, root = saturate(stmt, default_ruleset,
                           categories=("axiomatic", "supporting"))
        snapshot = {cid: g.find(cid) for cid in range(len(g._parent))}
        before_facts = sum(len(v) for v in g.facts.values())
        for rule in default_ruleset.by_category("application"):
            for env in ematch(g, rule.query):
                rule.action(g, env)
        assert any(g.facts.get(n) for n in ("amx-a-tile", "amx-b-tile"))
        for cid, rep in snapshot.items():
            assert g.find(cid) == g.find(rep)
        assert sum(len(v) for v in g.facts.values()) > before_facts

    def test_type_consistency_after_run(self, default_ruleset):
        g, _ = saturate(matmul_update_stmt(), default_ruleset)
        assert rules.check_type_consistency(g) is None

    def test_default_schedule_constructs_tile_matmul(self, default_ruleset):
        g, root = saturate(matmul_update_stmt(), default_ruleset)
        assert g.classes_with_op(("call", "tile_matmul"))
        # and the construction landed in the statement's own class via the
        # value union + movement cancellation
        term = extract_best(g, root, CostModel())
        assert "tile_matmul" in repr(term)

    def test_per_rule_enable_flag(self):
        from tensorsel import selector
        rs = rules.build_default_ruleset()
        rs.named("amx-b-standard").enabled = False
        prog = corpus_program("matmul_standard")
        _, rep = selector.select_program(
            prog, selector.SelectionConfig(target="amx"), ruleset=rs)
        assert not rep.ok  # the swizzle recognizer is gone
        assert rep.failed[0].index == 1


class TestAblation:
    def test_pattern_unmatched_without_axioms(self, default_ruleset):
        g, _ = saturate(matmul_update_stmt(), default_ruleset,
                        categories=("supporting",))
        assert ematch(g, rules.matmul_statement_query(16, 32, 16)) == []

    def test_pattern_matched_once_with_axioms(self, default_ruleset):
        g, _ = saturate(matmul_update_stmt(), default_ruleset)
        assert len(ematch(g, rules.matmul_statement_query(16, 32, 16))) == 1


class TestSoundness:
    def test_every_semantic_rule_fuzzes_clean(self, default_ruleset):
        # acceptance runs 500 trials; keep the unit suite quick
        for rule in default_ruleset:
            if not rule.semantic:
                continue
            rep = rules.check_rule_soundness(rule, trials=60, seed=0)
            assert rep.ok, (rule.name, rep.counterexample)
            assert rep.checked > 0, rule.name

    def test_corrupted_rule_is_caught(self):
        bad = rules.corrupted_ramp_rule()
        rep = rules.check_rule_soundness(bad, trials=200, seed=0)
        assert rep.counterexample is not None
        assert rep.checked <= 200

    def test_relational_rules_skipped(self, default_ruleset):
        rule = default_ruleset.named("amx-b-vnni")
        rep = rules.check_rule_soundness(rule, trials=10)
        assert rep.ok and rep.checked == 0


class TestEncodeDecode:
    def test_round_trip_matmul_update(self):
        stmt = matmul_update_stmt()
        g = rules.new_graph()
        root = rules.encode_stmt(g, stmt)
        term = extract_best(g, root, CostModel(movement_cost=1))
        assert rules.decode_term(term) == stmt

    def test_round_trip_shuffle_and_exprvar(self):
        e = ir.Shuffle(ir.ExprVar(Broadcast(Imm("f16", 0.5), 4)), (0, -1, 3))
        g = rules.new_graph()
        cid = rules.encode_expr(g, e)
        assert rules.decode_term(extract_best(g, cid)) == e


class TestCatalogFile:
    def test_committed_catalog_is_current(self, default_ruleset):
        from conftest import ROOT
        committed = (ROOT / "docs" / "rules_catalog.txt").read_text()
        assert committed == default_ruleset.catalog_text(), \
            "regenerate with tools/dump_rule_catalog.py"
