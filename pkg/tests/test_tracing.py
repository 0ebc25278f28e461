import random

import pytest

import builders as b
import generators
import oracle
from builders import K, Pipeline
from lineagekit import (
    EntityNotFound,
    PrunePredicate,
    TraceOptions,
    TracingProperties,
    ancestors,
    backward_trace,
    environment_closure,
    forward_trace,
    impacted_leaves,
    lineage_route,
)


def rev(value):
    return b.eid(K.DATASET_REVISION, value)


def ex(value):
    return b.eid(K.TRANSFORM_EXECUTION, value)


def values(ids):
    return sorted(e.value for e in ids)


# -- forward -----------------------------------------------------------------


def test_forward_fanout_reaches_both_levels(fanout):
    trace = forward_trace(fanout.store, rev("s1"))
    assert values(trace.reached_revisions()) == ["l1", "la1", "lb1", "r1", "ra1", "rb1", "s1"]
    assert values(trace.reached_executions()) == [
        "exec_expand_left",
        "exec_expand_right",
        "exec_left",
        "exec_right",
    ]


def test_forward_depths_count_executions(fanout):
    trace = forward_trace(fanout.store, rev("s1"))
    assert trace.reached[rev("s1")] == 0
    assert trace.reached[ex("exec_left")] == 1
    assert trace.reached[rev("l1")] == 1
    assert trace.reached[ex("exec_expand_left")] == 2
    assert trace.reached[rev("la1")] == 2


def test_forward_from_unconsumed_revision(fanout):
    trace = forward_trace(fanout.store, rev("la1"))
    assert trace.reached == {rev("la1"): 0}
    assert trace.edges == ()


def test_forward_unknown_origin(fanout):
    with pytest.raises(EntityNotFound):
        forward_trace(fanout.store, rev("nope"))


def test_pruning_cuts_downstream_but_keeps_execution():
    p = Pipeline()
    for ds in ("src", "mid", "out"):
        p.add_dataset(ds)
    p.import_revision("src", "s1")
    scrub = p.define_transform(
        "scrub", n_in=1, n_out=1, props=TracingProperties(privacy_preserving=True)
    )
    derive = p.define_transform("derive", n_in=1, n_out=1)
    p.run(scrub, ["s1"], [("mid", "m1")], exec_value="exec_scrub")
    p.run(derive, ["m1"], [("out", "o1")], exec_value="exec_derive")

    opts = TraceOptions(prune_on=(PrunePredicate("privacy_preserving", True),))
    trace = forward_trace(p.store, rev("s1"), opts)
    assert values(trace.reached) == ["exec_scrub", "s1"]
    assert trace.pruned_at == ((ex("exec_scrub"), "privacy_preserving"),)

    unpruned = forward_trace(p.store, rev("s1"))
    assert set(trace.reached) <= set(unpruned.reached)

    edges = oracle.raw_edges(p.store)
    expected = oracle.reach_with_pruned(edges, ("R", "s1"), {"exec_scrub"})
    assert oracle.as_trace_nodes(trace) == expected


def test_unknown_property_never_prunes():
    p = Pipeline()
    p.add_dataset("src")
    p.add_dataset("out")
    p.import_revision("src", "s1")
    trev = p.define_transform("anon", n_in=1, n_out=1)  # all properties unknown
    p.run(trev, ["s1"], [("out", "o1")])
    opts = TraceOptions(prune_on=(PrunePredicate("privacy_preserving", True),))
    trace = forward_trace(p.store, rev("s1"), opts)
    assert rev("o1") in trace.reached
    assert trace.pruned_at == ()


def test_extension_property_pruning():
    p = Pipeline()
    p.add_dataset("src")
    p.add_dataset("out")
    p.import_revision("src", "s1")
    trev = p.define_transform(
        "tagged", n_in=1, n_out=1, props=TracingProperties(extensions={"boundary": "team-x"})
    )
    p.run(trev, ["s1"], [("out", "o1")], exec_value="exec_tagged")
    opts = TraceOptions(prune_on=(PrunePredicate("boundary", "team-x"),))
    trace = forward_trace(p.store, rev("s1"), opts)
    assert rev("o1") not in trace.reached
    assert trace.pruned_at == ((ex("exec_tagged"), "boundary"),)


def test_empty_prune_set_equals_unpruned(fanout):
    a = forward_trace(fanout.store, rev("s1"))
    b_ = forward_trace(fanout.store, rev("s1"), TraceOptions(prune_on=()))
    assert a.reached == b_.reached and a.edges == b_.edges


def test_max_depth_truncates(two_stage):
    trace = backward_trace(two_stage.store, rev("q1"), TraceOptions(max_depth=1))
    assert values(trace.reached) == ["exec_eval", "m1", "q1"]
    assert trace.truncated_by_depth is True
    full = backward_trace(two_stage.store, rev("q1"), TraceOptions(max_depth=5))
    assert full.truncated_by_depth is False
    assert len(full.reached) == 5


def test_restrict_to_group(fanout):
    p = fanout
    p.commit(
        additions=[
            b.group(
                "left-side",
                [
                    b.eid(K.DATASET, "left"),
                    b.eid(K.DATASET, "left_a"),
                    b.eid(K.DATASET, "left_b"),
                    b.eid(K.TRANSFORM, "split"),
                    b.eid(K.TRANSFORM, "expand"),
                ],
            )
        ]
    )
    opts = TraceOptions(restrict_to_group=b.eid(K.GROUP, "left-side"))
    trace = forward_trace(p.store, rev("s1"), opts)
    reached_revisions = set(values(trace.reached_revisions()))
    assert reached_revisions == {"s1", "l1", "la1", "lb1"}


# -- backward ----------------------------------------------------------------


def test_backward_two_stage_chain(two_stage):
    trace = backward_trace(two_stage.store, rev("q1"))
    assert trace.reached == {
        rev("q1"): 0,
        ex("exec_eval"): 1,
        rev("m1"): 1,
        ex("exec_train"): 2,
        rev("p1"): 2,
    }


def test_backward_from_imported_revision(two_stage):
    trace = backward_trace(two_stage.store, rev("p1"))
    assert trace.reached == {rev("p1"): 0}


# -- ancestors ----------------------------------------------------------------


def test_ancestors_two_stage(two_stage):
    found = ancestors(two_stage.store, rev("q1"), b.eid(K.DATASET, "hyperparams"))
    assert found == [rev("p1")]


def test_revision_is_not_its_own_ancestor(two_stage):
    assert ancestors(two_stage.store, rev("p1"), b.eid(K.DATASET, "hyperparams")) == []


def test_ancestors_many_to_many():
    p = Pipeline()
    p.add_dataset("parts")
    p.add_dataset("merged")
    p.import_revision("parts", "part1")
    p.import_revision("parts", "part2")
    trev = p.define_transform("merge", n_in=2, n_out=1)
    p.run(trev, ["part1", "part2"], [("merged", "all1")])
    found = ancestors(p.store, rev("all1"), b.eid(K.DATASET, "parts"))
    assert found == [rev("part1"), rev("part2")]  # dataset sequence order


def test_every_ancestor_reaches_the_revision_through_a_route():
    for seed in (3, 8):
        store = generators.random_store(seed, max_entities=100)
        rng = random.Random(seed)
        datasets = sorted(store.entities[K.DATASET])
        for value in generators.sample_revision_values(store, rng, 3):
            for ds_value in datasets[:4]:
                for ancestor in ancestors(store, rev(value), b.eid(K.DATASET, ds_value)):
                    assert lineage_route(store, rev(value), ancestor, limit=1).routes


def test_ancestors_ordering_follows_sequence():
    p = Pipeline()
    p.add_dataset("src")
    p.add_dataset("out")
    newer = p.import_revision("src", "zz_newer")
    older = p.import_revision("src", "aa_older")
    trev = p.define_transform("merge2", n_in=2, n_out=1)
    p.run(trev, [older, newer], [("out", "o1")])
    found = ancestors(p.store, rev("o1"), b.eid(K.DATASET, "src"))
    assert [e.value for e in found] == ["zz_newer", "aa_older"]


# -- routes --------------------------------------------------------------------


def test_single_route_two_stage(two_stage):
    result = lineage_route(two_stage.store, rev("q1"), rev("p1"))
    assert [s.value for r in result.routes for s in r.steps] == ["exec_train", "m1", "exec_eval"]
    assert result.truncated is False


def test_route_endpoints_not_in_steps(two_stage):
    (route,) = lineage_route(two_stage.store, rev("q1"), rev("p1")).routes
    step_values = {s.value for s in route.steps}
    assert "q1" not in step_values and "p1" not in step_values
    assert len(route.steps) % 2 == 1


def test_no_route_between_unconnected_revisions(two_stage):
    p = two_stage
    p.add_dataset("island")
    p.import_revision("island", "iso1")
    assert lineage_route(p.store, rev("iso1"), rev("p1")).routes == ()


def diamond_pipeline() -> Pipeline:
    p = Pipeline()
    for ds in ("src", "mid_a", "mid_b", "out"):
        p.add_dataset(ds)
    p.import_revision("src", "s1")
    split = p.define_transform("split", n_in=1, n_out=1)
    merge = p.define_transform("merge", n_in=2, n_out=1)
    p.run(split, ["s1"], [("mid_a", "a1")], exec_value="exec_a")
    p.run(split, ["s1"], [("mid_b", "b1")], exec_value="exec_b")
    p.run(merge, ["a1", "b1"], [("out", "o1")], exec_value="exec_merge")
    return p


def test_diamond_has_two_routes():
    p = diamond_pipeline()
    result = lineage_route(p.store, rev("o1"), rev("s1"))
    got = [[s.value for s in r.steps] for r in result.routes]
    assert got == [
        ["exec_a", "a1", "exec_merge"],
        ["exec_b", "b1", "exec_merge"],
    ]
    edges = oracle.raw_edges(p.store)
    assert len(oracle.simple_paths(edges, ("R", "s1"), ("R", "o1"))) == 2


def test_route_limit_sets_truncation_flag():
    p = diamond_pipeline()
    result = lineage_route(p.store, rev("o1"), rev("s1"), limit=1)
    assert len(result.routes) == 1
    assert result.truncated is True


def test_route_same_endpoint_rejected(two_stage):
    with pytest.raises(ValueError):
        lineage_route(two_stage.store, rev("q1"), rev("q1"))


def test_route_steps_lie_inside_both_traces(two_stage):
    forward = forward_trace(two_stage.store, rev("p1")).reached
    backward = backward_trace(two_stage.store, rev("q1")).reached
    for route in lineage_route(two_stage.store, rev("q1"), rev("p1")).routes:
        for step in route.steps:
            assert step in forward and step in backward


# -- closure -------------------------------------------------------------------


def test_closure_two_stage(two_stage):
    closure = environment_closure(two_stage.store, rev("q1"))
    assert values(closure.dataset_revisions) == ["m1", "p1", "q1"]
    assert values(closure.transform_revisions) == ["evaluate-v1", "train-v1"]
    assert closure.external_refs.commit_ids == ("commit-evaluate-v1", "commit-train-v1")
    assert closure.external_refs.blob_ids == ("blob-m1", "blob-p1", "blob-q1")
    assert closure.external_refs.source_ids == ("import",)
    assert values(closure.type_revisions) == [two_stage.TYPE_REV]


def test_closure_of_imported_root(two_stage):
    closure = environment_closure(two_stage.store, rev("p1"))
    assert values(closure.dataset_revisions) == ["p1"]
    assert closure.transform_revisions == ()
    assert closure.external_refs.blob_ids == ("blob-p1",)
    assert closure.external_refs.source_ids == ("import",)


def test_closure_structural_recursion_on_random_stores():
    for seed in range(8):
        store = generators.random_store(seed, max_entities=120)
        for value in generators.sample_revision_values(store, random.Random(seed), 5):
            _assert_closure_recursion(store, value)


def _assert_closure_recursion(store, rev_value):
    closure = environment_closure(store, rev(rev_value))
    record = store.revision(rev_value)
    revisions = {rev_value}
    trevs = set()
    if record.producer_slot_id is not None:
        slot = store.execution_slot(record.producer_slot_id.value)
        exec_value = slot.transform_execution_id.value
        trevs.add(store.execution(exec_value).transform_revision_id.value)
        for _, input_value in store.execution_inputs(exec_value):
            sub = environment_closure(store, rev(input_value))
            revisions.update(e.value for e in sub.dataset_revisions)
            trevs.update(e.value for e in sub.transform_revisions)
    assert set(values(closure.dataset_revisions)) == revisions
    assert set(values(closure.transform_revisions)) == trevs


# -- leaves ---------------------------------------------------------------------


def test_impacted_leaves_fanout(fanout):
    leaves = impacted_leaves(fanout.store, rev("s1"))
    assert values(leaves) == ["la1", "lb1", "ra1", "rb1"]


def test_leaf_revision_is_its_own_leaf(fanout):
    assert impacted_leaves(fanout.store, rev("la1")) == [rev("la1")]


# -- oracle equivalence on random stores ------------------------------------------


def test_unpruned_traces_match_bruteforce():
    for seed in range(15):
        store = generators.random_store(seed, max_entities=150)
        edges = oracle.raw_edges(store)
        rng = random.Random(seed * 31)
        for value in generators.sample_revision_values(store, rng, 4):
            forward = forward_trace(store, rev(value))
            assert oracle.as_trace_nodes(forward) == oracle.bfs_reach(edges, ("R", value))
            backward = backward_trace(store, rev(value))
            assert oracle.as_trace_nodes(backward) == oracle.bfs_reach(
                edges, ("R", value), reverse=True
            )


def test_depths_match_bruteforce():
    for seed in (2, 9):
        store = generators.random_store(seed, max_entities=150)
        edges = oracle.raw_edges(store)
        rng = random.Random(seed)
        for value in generators.sample_revision_values(store, rng, 4):
            trace = forward_trace(store, rev(value))
            got = {
                ("R" if e.kind is K.DATASET_REVISION else "E", e.value): d
                for e, d in trace.reached.items()
            }
            assert got == oracle.depths(edges, ("R", value))


def test_duality_on_random_stores():
    for seed in range(6):
        store = generators.random_store(seed, max_entities=100)
        rng = random.Random(seed + 100)
        pool = generators.sample_revision_values(store, rng, 6)
        for a in pool[:3]:
            forward = forward_trace(store, rev(a)).reached
            for b_value in pool:
                in_forward = rev(b_value) in forward
                in_backward = rev(a) in backward_trace(store, rev(b_value)).reached
                assert in_forward == in_backward


def test_leaves_match_bruteforce():
    for seed in range(6):
        store = generators.random_store(seed, max_entities=120)
        edges = oracle.raw_edges(store)
        rng = random.Random(seed ^ 0xBEEF)
        for value in generators.sample_revision_values(store, rng, 4):
            got = {e.value for e in impacted_leaves(store, rev(value))}
            reached = oracle.bfs_reach(edges, ("R", value))
            assert got == oracle.sink_revisions(store, reached)


def test_route_counts_match_bruteforce():
    for seed in range(6):
        store = generators.random_store(seed, max_entities=100)
        edges = oracle.raw_edges(store)
        rng = random.Random(seed * 7)
        pool = generators.sample_revision_values(store, rng, 6)
        for source in pool[:2]:
            reachable = [
                v for (tag, v) in oracle.bfs_reach(edges, ("R", source)) if tag == "R" and v != source
            ]
            for target in sorted(reachable)[:3]:
                expected = oracle.simple_paths(edges, ("R", source), ("R", target))
                got = lineage_route(store, rev(target), rev(source))
                assert len(got.routes) == len(expected)
