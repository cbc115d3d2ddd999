"""Case tables, grounding of lifted rows, and the per-action model losses."""

import numpy as np
import pytest
from fdcheck import fd_check

from liftfix import autodiff as ad
from liftfix.model import (
    CaseTable,
    GroundLink,
    bits_of_case,
    case_ce,
    case_of_bits,
    loss_app,
    loss_bias,
    loss_pred,
    model_loss,
    prob_successor,
    read_case_table,
    write_case_table,
)
from liftfix.strips import GroundModel, LiftedModel, random_walk


def test_case_bit_mapping_roundtrip():
    assert case_of_bits(False, False, False) == 1
    assert case_of_bits(False, True, False) == 2
    assert case_of_bits(True, False, False) == 3
    assert case_of_bits(True, False, True) == 4
    for c in (1, 2, 3, 4):
        assert case_of_bits(*bits_of_case(c)) == c
    with pytest.raises(ValueError):
        case_of_bits(True, True, False)
    with pytest.raises(ValueError):
        case_of_bits(False, False, True)
    with pytest.raises(ValueError):
        bits_of_case(5)


def test_zero_logits_decode_to_uniform_mixture(blocks_fx):
    table = CaseTable(blocks_fx.domain)
    for arr in table.decoded_arrays().values():
        np.testing.assert_allclose(arr[:, 0], 0.5, atol=1e-12)
        np.testing.assert_allclose(arr[:, 1], 0.25, atol=1e-12)
        np.testing.assert_allclose(arr[:, 2], 0.25, atol=1e-12)


def test_one_hot_cases_decode_to_their_bits(blocks_fx):
    table = CaseTable(blocks_fx.domain)
    logits = table.params["case/stack"]
    for case in (1, 2, 3, 4):
        logits[:] = 0.0
        logits[:, case - 1] = 40.0
        arr = table.decoded_arrays()["stack"]
        pre, add, delete = bits_of_case(case)
        np.testing.assert_allclose(arr[:, 0], float(pre), atol=1e-12)
        np.testing.assert_allclose(arr[:, 1], float(add), atol=1e-12)
        np.testing.assert_allclose(arr[:, 2], float(delete), atol=1e-12)


def test_decode_satisfies_validity_for_any_logits(domains):
    rng = np.random.default_rng(0)
    for key, (fx, _, _) in domains.items():
        table = CaseTable(fx.domain, rng=rng, scale=5.0)
        for name, arr in table.decoded_arrays().items():
            pre, add, delete = arr[:, 0], arr[:, 1], arr[:, 2]
            assert np.all(pre + add <= 1.0 + 1e-12), (key, name)
            assert np.all(delete <= pre + 1e-12), (key, name)
            assert np.all((arr >= -1e-15) & (arr <= 1.0 + 1e-15))


def test_from_action_model_reproduces_bits(domains):
    for key, (fx, _, _) in domains.items():
        table = CaseTable.from_action_model(fx.model)
        for name in table.schema_names:
            pre, add, delete = fx.model.sets_for(name)
            arr = table.decoded_arrays()[name]
            for r, pbp in enumerate(table.rows[name]):
                np.testing.assert_allclose(arr[r, 0], float(pbp in pre), atol=1e-12)
                np.testing.assert_allclose(arr[r, 1], float(pbp in add), atol=1e-12)
                np.testing.assert_allclose(arr[r, 2], float(pbp in delete), atol=1e-12)
        assert table.to_action_model() == fx.model, key


def test_threshold_export_is_always_valid(domains):
    rng = np.random.default_rng(1)
    for _, (fx, _, _) in domains.items():
        for _ in range(10):
            table = CaseTable(fx.domain, rng=rng, scale=3.0)
            exported = table.to_action_model()
            assert isinstance(exported, LiftedModel)


def test_random_init_is_near_uniform(blocks_fx):
    table = CaseTable(blocks_fx.domain, rng=np.random.default_rng(2), scale=0.01)
    for arr in table.decoded_arrays().values():
        np.testing.assert_allclose(arr[:, 0], 0.5, atol=0.02)


def test_ground_link_uses_every_lift_entry(domains):
    for key, (fx, _, idx) in domains.items():
        link = GroundLink(CaseTable(fx.domain), idx)
        expected = sum(len(m) for m in idx.lift_maps)
        assert len(link.src) == expected == len(link.dst), key
        # injective bindings: no two rows of one action share a proposition
        assert len(np.unique(link.dst)) == len(link.dst), key


def test_ground_link_matches_ground_action_model(domains):
    for key, (fx, _, idx) in domains.items():
        table = CaseTable.from_action_model(fx.model)
        link = GroundLink(table, idx)
        pre_g, add_g, del_g = link.ground_all(table.decode(table.leaves()))
        gm = GroundModel(fx.model, idx)
        np.testing.assert_allclose(pre_g.value, gm.pre.astype(float), atol=1e-12, err_msg=key)
        np.testing.assert_allclose(add_g.value, gm.add.astype(float), atol=1e-12, err_msg=key)
        np.testing.assert_allclose(del_g.value, gm.delete.astype(float), atol=1e-12, err_msg=key)


def test_ground_link_leaves_unbound_slots_at_zero(domains):
    fx, _, idx = domains["gripper"]
    table = CaseTable(fx.domain, rng=np.random.default_rng(3))
    link = GroundLink(table, idx)
    pre_g, _, _ = link.ground_all(table.decode(table.leaves()))
    covered = np.zeros(idx.n_acts * idx.n_props, dtype=bool)
    covered[link.dst] = True
    uncovered = ~covered.reshape(idx.n_acts, idx.n_props)
    assert uncovered.any()
    np.testing.assert_array_equal(pre_g.value[uncovered], 0.0)


def test_prob_successor_hand_example():
    ps = np.array([0.2, 0.8, 0.5])
    add = np.array([1.0, 0.0, 0.0])
    delete = np.array([0.0, 1.0, 0.0])
    out = prob_successor(ps, add, delete).value
    np.testing.assert_allclose(out, [0.2 + 0.8 * 1.0, 0.8 * 0.0, 0.5])


def test_prob_successor_equals_symbolic_successor(domains):
    """Binary beliefs + binarized tables reproduce the planning semantics."""
    rng = np.random.default_rng(4)
    for key, (fx, _, idx) in domains.items():
        table = CaseTable.from_action_model(fx.model)
        link = GroundLink(table, idx)
        _, add_g, del_g = link.ground_all(table.decode(table.leaves()))
        add_b = add_g.value > 0.5
        del_b = del_g.value > 0.5
        gm = GroundModel(fx.model, idx)
        tried = 0
        while tried < 40:
            s = fx.sample_state(idx, rng)
            acts = np.flatnonzero(gm.applicable_mask(s))
            if acts.size == 0:
                continue
            ai = int(rng.choice(acts))
            got = prob_successor(s.astype(float), add_b[ai].astype(float),
                                 del_b[ai].astype(float)).value
            np.testing.assert_array_equal(got > 0.5, gm.successor(s, ai), err_msg=key)
            tried += 1


def test_loss_values_hand_checked():
    ps_t = np.array([1.0, 0.0])
    ps_next = np.array([0.0, 0.0])
    zero = np.zeros(2)
    assert loss_pred(ps_t, ps_next, zero, zero).item() == pytest.approx(0.5)

    pre = np.array([1.0, 1.0, 0.0])
    held = np.array([1.0, 0.0, 0.5])
    assert loss_app(held, pre).item() == pytest.approx(1.0 / 3.0)

    assert loss_bias(np.array([1.0, 0.5, 0.0])).item() == pytest.approx(1.25 / 3.0)

    got = model_loss(ps_t, ps_next, np.array([1.0, 0.0]), zero, zero, lam=0.4).item()
    # pred 0.5, app 0 (the demanded precondition holds), bias mean([0,1])
    assert got == pytest.approx(0.5 + 0.0 + 0.4 * 0.5)


def test_perfect_model_on_true_transition_has_zero_pred_loss(domains):
    fx, _, idx = domains["blocksworld"]
    table = CaseTable.from_action_model(fx.model)
    link = GroundLink(table, idx)
    pre_g, add_g, del_g = link.ground_all(table.decode(table.leaves()))
    rng = np.random.default_rng(5)
    walk = random_walk(idx, fx.model, 1, rng, fx.sample_state(idx, rng))
    ai = walk.actions[0]
    s, s2 = walk.states[0].astype(float), walk.states[1].astype(float)
    assert loss_pred(s, s2, add_g.value[ai], del_g.value[ai]).item() == pytest.approx(0.0, abs=1e-20)
    assert loss_app(s, pre_g.value[ai]).item() == pytest.approx(0.0, abs=1e-20)


def test_losses_have_correct_gradients(toy_gripper):
    idx = toy_gripper
    from liftfix.strips.domains import fixture

    domain = fixture("gripper").domain
    table = CaseTable(domain, rng=np.random.default_rng(6))
    link = GroundLink(table, idx)
    rng = np.random.default_rng(7)
    ps_t = rng.random(idx.n_props)
    ps_next = rng.random(idx.n_props)
    ai = 3

    def build_total(v):
        decoded = table.decode(v)
        pre_g, add_g, del_g = link.ground_all(decoded)
        pre_a = ad.gather(pre_g, np.array([ai]))
        add_a = ad.gather(add_g, np.array([ai]))
        del_a = ad.gather(del_g, np.array([ai]))
        return ad.vmean(model_loss(ps_t, ps_next, pre_a, add_a, del_a, lam=0.4))

    fd_check(build_total, dict(table.params))


def test_case_ce_values(blocks_fx):
    table = CaseTable(blocks_fx.domain)
    leaves = table.leaves()
    probs = table.case_probs(leaves)
    targets = {name: np.ones(len(table.rows[name]), dtype=int) for name in table.schema_names}
    assert case_ce(probs, targets).item() == pytest.approx(np.log(4.0))

    hot = CaseTable.from_action_model(blocks_fx.model)
    hot_probs = hot.case_probs(hot.leaves())
    hot_targets = {}
    for name in hot.schema_names:
        pre, add, delete = blocks_fx.model.sets_for(name)
        hot_targets[name] = np.array(
            [case_of_bits(p in pre, p in add, p in delete) for p in hot.rows[name]]
        )
    assert case_ce(hot_probs, hot_targets).item() == pytest.approx(0.0, abs=1e-12)


def test_case_ce_gradients(blocks_fx):
    table = CaseTable(blocks_fx.domain, rng=np.random.default_rng(8))
    targets = {
        name: np.random.default_rng(9).integers(1, 5, len(table.rows[name]))
        for name in table.schema_names
    }

    def build(v):
        return case_ce(table.case_probs(v), targets)

    fd_check(build, dict(table.params))


def test_case_table_file_roundtrip(blocks_fx, tmp_path):
    table = CaseTable(blocks_fx.domain, rng=np.random.default_rng(10), scale=2.0)
    path = tmp_path / "table.jsonl"
    write_case_table(path, table)
    back = read_case_table(path, blocks_fx.domain)
    for name in table.schema_names:
        np.testing.assert_allclose(
            back.decoded_arrays()[name], table.decoded_arrays()[name], atol=1e-12
        )


def test_case_table_file_survives_saturation(blocks_fx, tmp_path):
    table = CaseTable.from_action_model(blocks_fx.model)
    path = tmp_path / "table.jsonl"
    write_case_table(path, table)
    assert read_case_table(path, blocks_fx.domain).to_action_model() == blocks_fx.model


def test_case_table_file_rejects_wrong_domain(blocks_fx, gripper_fx, tmp_path):
    path = tmp_path / "table.jsonl"
    write_case_table(path, CaseTable(gripper_fx.domain))
    with pytest.raises(ValueError, match="domain"):
        read_case_table(path, blocks_fx.domain)


def test_case_table_file_rejects_garbage(tmp_path, blocks_fx):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema": "something-else/9"}\n')
    with pytest.raises(ValueError, match="not a case table"):
        read_case_table(path, blocks_fx.domain)
