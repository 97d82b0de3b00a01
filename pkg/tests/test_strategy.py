"""Strategy config parsing, data-parallel expansion, and overrides."""

import json

import pytest

from conftest import mk_graph, mk_node, mk_table

from dfsim.costmodel import SOURCE_OVERRIDE
from dfsim.errors import ConfigError, MissingDurationError, PatternWarning
from dfsim.graph import COLLECTIVE, TRANSFER, TensorShape, validate
from dfsim.strategy import (
    CollectiveConfig,
    StrategyConfig,
    apply_overrides,
    expand_data_parallel,
    match_pattern,
    parse_config,
    serialize_config,
)
from dfsim.synth import SynthSpec, gen_graph


class TestPatterns:
    def test_literal_and_glob(self):
        assert match_pattern("conv1", "conv1")
        assert not match_pattern("conv1", "conv10")
        assert match_pattern("conv1@*", "conv1@r3")
        assert match_pattern("*", "anything")

    def test_malformed_pattern_rejected(self):
        with pytest.raises(ConfigError, match="trailing"):
            parse_config(json.dumps({"replicas": 1, "overrides": {"a*b": 1.0}}))


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(json.dumps({"replicas": 1}))
        assert cfg == StrategyConfig()
        assert cfg.replicas == 1
        assert cfg.overrides == {}
        assert cfg.op_gap_us == 0.0
        assert cfg.collective == CollectiveConfig()

    def test_device_map_length_mismatch(self):
        with pytest.raises(ConfigError, match="device_map"):
            parse_config(json.dumps({"replicas": 2, "device_map": ["gpu0"]}))

    def test_replicas_require_device_map(self):
        with pytest.raises(ConfigError, match="device_map"):
            parse_config(json.dumps({"replicas": 2}))

    def test_duplicate_devices_rejected(self):
        with pytest.raises(ConfigError, match="distinct"):
            parse_config(json.dumps({"replicas": 2, "device_map": ["g", "g"]}))

    def test_bad_replicas(self):
        with pytest.raises(ConfigError, match="replicas"):
            parse_config(json.dumps({"replicas": 0}))

    def test_bad_algo(self):
        with pytest.raises(ConfigError, match="algo"):
            parse_config(json.dumps({"collective": {"algo": "Tree"}}))

    def test_negative_override_rejected(self):
        with pytest.raises(ConfigError, match="duration"):
            parse_config(json.dumps({"overrides": {"a": -1.0}}))

    def test_full_config_round_trips(self):
        cfg = StrategyConfig(
            replicas=4,
            device_map=("gpu0", "gpu1", "gpu2", "gpu3"),
            collective=CollectiveConfig(algo="RingAnalytic", path="QPI"),
            gradient_markers=("grad_*", "extra_grad"),
            overrides={"conv1@*": 120.0, "loss@r0": 3.5},
            hardware="V100-cuda10.0-cudnn7.5-tf1.13.1",
            op_gap_us=1.25,
        )
        assert parse_config(serialize_config(cfg)) == cfg


def chain_fwd_grad_apply():
    return mk_graph(
        [
            mk_node("fwd", op="Conv2D", shapes=(TensorShape((4, 4), 4),)),
            mk_node("grad", ["fwd"], op="Conv2DBackpropFilter", shapes=(TensorShape((3, 3, 2, 2), 4),)),
            mk_node("apply", ["grad"], op="ApplyGradientDescent"),
        ]
    )


class TestExpandDataParallel:
    def test_two_replica_chain_counts(self):
        cfg = StrategyConfig(replicas=2, device_map=("gpu0", "gpu1"), gradient_markers=("grad",))
        ex = expand_data_parallel(chain_fwd_grad_apply(), cfg)
        assert len(ex.graph.nodes) == 7  # 2 * 3 compute + 1 collective
        assert len(ex.collective_nodes) == 1
        assert validate(ex.graph).ok()

        ar = ex.graph.nodes[ex.collective_nodes[0]]
        assert ar.kind == COLLECTIVE
        assert ar.attrs["group"] == ["gpu0", "gpu1"]
        assert ar.attrs["bytes"] == 3 * 3 * 2 * 2 * 4
        assert ar.inputs == (("grad@r0", 0), ("grad@r1", 0))
        # both replicas' consumers now read from the collective
        assert ex.graph.nodes["apply@r0"].inputs == ((ar.id, 0),)
        assert ex.graph.nodes["apply@r1"].inputs == ((ar.id, 0),)

    def test_single_replica_isomorphic(self):
        g = chain_fwd_grad_apply()
        cfg = StrategyConfig(replicas=1, gradient_markers=("grad",))
        ex = expand_data_parallel(g, cfg)
        assert len(ex.graph.nodes) == 3
        assert ex.collective_nodes == []
        for nid, node in g.nodes.items():
            clone = ex.graph.nodes[f"{nid}@r0"]
            assert clone.op_type == node.op_type
            assert clone.device == node.device
            assert clone.inputs == tuple((f"{p}@r0", s) for p, s in node.inputs)

    def test_vgg_like_counts_and_groups(self):
        g = gen_graph(SynthSpec(kind="LayeredCNN", layers=16))
        n = len(g.nodes)
        cfg = StrategyConfig(
            replicas=4,
            device_map=("gpu0", "gpu1", "gpu2", "gpu3"),
            gradient_markers=("grad_conv_*",),
            hardware="synth-hw",
        )
        ex = expand_data_parallel(g, cfg)
        assert len(ex.graph.nodes) == 4 * n + 16
        assert len(ex.collective_nodes) == 16
        assert validate(ex.graph).ok()
        for cid in ex.collective_nodes:
            assert len(ex.graph.nodes[cid].attrs["group"]) == 4

    def test_replica_of_bijection_and_collective_kinds(self):
        g = gen_graph(SynthSpec(kind="LayeredCNN", layers=4))
        cfg = StrategyConfig(
            replicas=2, device_map=("gpu0", "gpu1"), gradient_markers=("grad_conv_*",)
        )
        ex = expand_data_parallel(g, cfg)
        expected_pairs = {(nid, k) for nid in g.nodes for k in range(2)}
        assert set(ex.replica_of.values()) == expected_pairs
        assert len(ex.replica_of) == len(expected_pairs)
        collective_kind_ids = sorted(
            nid for nid, node in ex.graph.nodes.items() if node.kind == COLLECTIVE
        )
        assert collective_kind_ids == sorted(ex.collective_nodes)

    def test_marker_on_transfer_node_rejected(self):
        t = mk_node(
            "move",
            kind=TRANSFER,
            device="link0",
            attrs={"src_device": "a", "dst_device": "b", "bytes": 4},
        )
        from dfsim.graph import DeviceSpec

        g = mk_graph([t], extra_devices=[DeviceSpec(id="link0", kind="Link", throughput_mbps=1.0)])
        cfg = StrategyConfig(replicas=2, device_map=("gpu0", "gpu1"), gradient_markers=("move",))
        with pytest.raises(ConfigError, match="Transfer"):
            expand_data_parallel(g, cfg)

    def test_unmatched_marker_warns(self):
        cfg = StrategyConfig(replicas=1, gradient_markers=("nothing_*",))
        with pytest.warns(PatternWarning, match="nothing_"):
            expand_data_parallel(chain_fwd_grad_apply(), cfg)

    @pytest.mark.parametrize("replicas", [1, 2, 4, 8])
    def test_expansion_preserves_acyclicity(self, replicas):
        for seed in range(8):
            g = gen_graph(SynthSpec(kind="RandomDAG", nodes=30, density=0.15, seed=seed))
            markers = tuple(sorted(g.nodes)[::7])
            cfg = StrategyConfig(
                replicas=replicas,
                device_map=tuple(f"gpu{i}" for i in range(replicas)),
                gradient_markers=markers,
            )
            ex = expand_data_parallel(g, cfg)
            assert validate(ex.graph).ok()
            assert len(ex.graph.nodes) == replicas * len(g.nodes) + (
                len(markers) if replicas > 1 else 0
            )


class TestApplyOverrides:
    def test_pattern_sets_all_replicas(self):
        g = mk_graph([mk_node(f"conv1@r{k}") for k in range(4)] + [mk_node("other")])
        table = mk_table({nid: 1.0 for nid in g.nodes}, source="ExactRecord")
        cfg = StrategyConfig(overrides={"conv1@*": 120.0})
        out = apply_overrides(table, cfg, g)
        for k in range(4):
            entry = out.entries[f"conv1@r{k}"]
            assert entry.duration_us == 120.0
            assert entry.source == SOURCE_OVERRIDE
        assert out.entries["other"].duration_us == 1.0

    def test_empty_overrides_identity(self):
        g = mk_graph([mk_node("a"), mk_node("b")])
        table = mk_table({"a": 1.0, "b": 2.0})
        out = apply_overrides(table, StrategyConfig(), g)
        assert out == table
        assert out is not table

    def test_overlapping_patterns_last_listed_wins(self):
        g = mk_graph([mk_node("conv_a"), mk_node("conv_b"), mk_node("conv_ax")])
        table = mk_table({nid: 0.0 for nid in g.nodes})
        overrides = {"conv_*": 10.0, "conv_a*": 20.0, "conv_ax": 30.0}
        cfg = StrategyConfig(overrides=overrides)
        out = apply_overrides(table, cfg, g)

        # sequential-application oracle over the same pattern order
        expected = {nid: 0.0 for nid in g.nodes}
        for pattern, value in overrides.items():
            for nid in expected:
                if match_pattern(pattern, nid):
                    expected[nid] = value
        assert {nid: e.duration_us for nid, e in out.entries.items()} == expected
        assert out.entries["conv_b"].duration_us == 10.0
        assert out.entries["conv_a"].duration_us == 20.0
        assert out.entries["conv_ax"].duration_us == 30.0

    def test_unmatched_pattern_warns(self):
        g = mk_graph([mk_node("a")])
        table = mk_table({"a": 1.0})
        with pytest.warns(PatternWarning, match="ghost"):
            apply_overrides(table, StrategyConfig(overrides={"ghost": 5.0}), g)

    def test_partial_table_rejected(self):
        g = mk_graph([mk_node("a"), mk_node("b")])
        with pytest.raises(MissingDurationError, match="b"):
            apply_overrides(mk_table({"a": 1.0}), StrategyConfig(), g)
