"""Training loop: config, label aging, losses, determinism, evaluation."""

import numpy as np
import pytest
from fdcheck import fd_check

from liftfix import autodiff as ad
from liftfix.actions import ActionPredictor, action_ce
from liftfix.fixer import PseudoLabelSet, model_from_bits, permute_model_bits, valid_permutations
from liftfix.model import CaseTable
from liftfix.percept import ChannelParams, observe_trace
from liftfix.strips import random_walk
from liftfix.training import (
    LabelStore,
    TrainConfig,
    Trainer,
    evaluate,
    label_weight,
    model_metrics,
    model_truth_bits,
    parse_config,
    state_bce,
)


def make_traces(fx, idx, n, k, rng, flip=0.05, sigma=0.1):
    ch = ChannelParams(flip_rate=flip, sigma=sigma, features=3)
    return [
        observe_trace(random_walk(idx, fx.model, k, rng, fx.sample_state), ch, rng)
        for _ in range(n)
    ]


# configuration


def test_parse_config_empty_text_gives_defaults():
    assert parse_config("") == TrainConfig()


def test_parse_config_reads_values_and_comments():
    text = """
    # a comment line
    epochs = 7
    lr = 0.5   # trailing comment
    mask = state+action
    """
    cfg = parse_config(text)
    assert cfg.epochs == 7 and cfg.lr == 0.5 and cfg.mask == "state+action"
    assert cfg.batch == TrainConfig().batch


def test_parse_config_rejects_unknown_and_duplicate_keys():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("learning_rate = 0.1")
    with pytest.raises(ValueError, match="duplicate"):
        parse_config("epochs = 1\nepochs = 2")


def test_parse_config_rejects_malformed_lines():
    with pytest.raises(ValueError, match="expected"):
        parse_config("epochs")
    with pytest.raises(ValueError, match="cannot parse"):
        parse_config("epochs = soon")
    with pytest.raises(ValueError, match="cannot parse"):
        parse_config("epochs = 1.5")


@pytest.mark.parametrize(
    "field,bad",
    [
        ("epochs", -1),
        ("batch", 0),
        ("lr", 0.0),
        ("lam", -0.1),
        ("gamma", 0.5),
        ("psi", 1.0),
        ("psi", 0.0),
        ("warmup", -1),
        ("fix_traces", -1),
        ("time_limit", -1.0),
        ("mask", "everything"),
        ("delta", 0.5),
    ],
)
def test_config_invariants(field, bad):
    with pytest.raises(ValueError):
        TrainConfig(**{field: bad})


# label aging and storage


def test_label_weight_is_one_at_birth():
    assert label_weight(5, 5, 0.9) == 1.0


def test_label_weight_decays_geometrically():
    assert label_weight(0, 3, 0.5) == pytest.approx(0.125)
    assert label_weight(10, 110, 0.99) == pytest.approx(0.99**100, abs=1e-15)


def test_label_weight_rejects_future_births():
    with pytest.raises(ValueError):
        label_weight(6, 5, 0.9)


def test_label_store_overwrites_per_trace_and_replaces_cases():
    store = LabelStore()
    first = PseudoLabelSet(
        birth_epoch=1,
        states={"t0": np.zeros((3, 2), dtype=np.int8), "t1": np.ones((3, 2), dtype=np.int8)},
        actions={"t0": np.array([0, 1]), "t1": np.array([1, 1])},
        cases={"pick": np.array([1, 2])},
    )
    second = PseudoLabelSet(
        birth_epoch=4,
        states={"t1": np.zeros((3, 2), dtype=np.int8)},
        actions={"t1": np.array([0, 0])},
        cases={"pick": np.array([3, 4])},
    )
    store.absorb(first)
    store.absorb(second)
    assert store.by_trace["t0"].birth == 1
    assert store.by_trace["t1"].birth == 4
    np.testing.assert_array_equal(store.by_trace["t1"].states, 0)
    np.testing.assert_array_equal(store.cases["pick"], [3, 4])
    assert store.cases_birth == 4


# loss pieces


def test_state_bce_hand_value():
    ps = ad.const(np.array([[0.9, 0.2]]))
    y = np.array([[1.0, 0.0]])
    w = np.array([2.0])
    want = -2.0 * (np.log(0.9) + np.log(0.8)) / 2.0
    assert state_bce(ps, y, w, delta=1e-3).item() == pytest.approx(want)


def test_state_bce_gradients():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 5))
    y = rng.integers(0, 2, (3, 5)).astype(float)
    w = rng.random(3) + 0.5

    def build(v):
        return state_bce(ad.sigmoid(v["x"]), y, w, delta=1e-3)

    fd_check(build, {"x": logits})


def test_weighted_action_ce_gradients(bw2):
    rng = np.random.default_rng(1)
    ps = rng.random((4, 2 * bw2.n_props))
    targets = rng.integers(0, bw2.n_acts, 4)
    weights = rng.random(4) + 0.1
    pred = ActionPredictor(bw2, rng=rng)

    def build(v):
        return action_ce(pred.forward(ps, v), targets, weights=weights)

    fd_check(build, dict(pred.params))


# the trainer


def trainer_with_labels(fx, idx, n_traces=3, k=2, seed=2, **cfg):
    rng = np.random.default_rng(seed)
    traces = make_traces(fx, idx, n_traces, k, rng)
    tr = Trainer(idx, traces, TrainConfig(**cfg))
    labels = PseudoLabelSet(
        birth_epoch=0,
        states={"t0": rng.integers(0, 2, (k + 1, idx.n_props)).astype(np.int8)},
        actions={"t0": rng.integers(0, idx.n_acts, k)},
        cases={
            name: rng.integers(1, 5, len(tr.table.rows[name])).astype(np.int8)
            for name in tr.table.schema_names
        },
    )
    tr.store.absorb(labels)
    return tr


def test_batch_loss_gradients_with_pseudo_labels(bw2, blocks_fx):
    """Central differences through the whole objective, labels included."""
    tr = trainer_with_labels(blocks_fx, bw2, warmup=0)
    indices = np.arange(len(tr.traces))

    def build(v):
        return tr.batch_loss(v, indices, epoch=3)

    fd_check(build, dict(tr.params))


def test_gamma_one_matches_unweighted_assembly(bw2, blocks_fx):
    """With gamma=1 the endpoint emphasis must vanish without residue."""
    from liftfix.actions import expected_model_loss, locally_best_action, step_losses
    from liftfix.percept import lift_endpoints

    rng = np.random.default_rng(3)
    traces = make_traces(blocks_fx, bw2, 3, 2, rng)
    cfg = TrainConfig(gamma=1.0, seed=5)
    tr = Trainer(bw2, traces, cfg)
    leaves = tr._leaves()
    got = tr.batch_loss(leaves, np.arange(3), epoch=0).item()

    leaves = tr._leaves()
    decoded = tr.table.decode(leaves)
    pre_g, add_g, del_g = tr.link.ground_all(decoded)
    ends = [lift_endpoints(t, cfg.delta) for t in traces]
    ps = [
        ad.const(np.stack([e[0] for e in ends])),
        tr.state_pred.forward(np.stack([t.obs[0] for t in traces]), leaves),
        ad.const(np.stack([e[1] for e in ends])),
    ]
    want = 0.0
    for t in range(2):
        grid = step_losses(ps[t], ps[t + 1], pre_g, add_g, del_g, cfg.lam)
        pr = tr.act_pred.forward(ad.concat([ps[t], ps[t + 1]], axis=1), leaves)
        targets = locally_best_action(
            ps[t].value, ps[t + 1].value, pre_g.value, add_g.value, del_g.value, cfg.delta
        )
        want += (ad.vmean(expected_model_loss(pr, grid)) + action_ce(pr, targets)).item()
    assert got == pytest.approx(want, rel=1e-12)


def test_warmup_epochs_do_not_fix(bw2, blocks_fx):
    rng = np.random.default_rng(4)
    traces = make_traces(blocks_fx, bw2, 4, 2, rng)
    tr = Trainer(bw2, traces, TrainConfig(warmup=2, fix_traces=2, time_limit=2.0))
    out = [tr.run_epoch(), tr.run_epoch()]
    assert all("fix_status" not in o for o in out)
    assert all(o["labeled"] == 0 for o in out)
    third = tr.run_epoch()
    assert "fix_status" in third and third["labeled"] > 0


def test_fix_traces_zero_disables_repairs(bw2, blocks_fx):
    rng = np.random.default_rng(5)
    traces = make_traces(blocks_fx, bw2, 3, 2, rng)
    tr = Trainer(bw2, traces, TrainConfig(warmup=0, fix_traces=0))
    out = tr.run_epoch()
    assert "fix_status" not in out and out["labeled"] == 0


def test_training_is_deterministic(bw2, blocks_fx):
    rng = np.random.default_rng(6)
    traces = make_traces(blocks_fx, bw2, 6, 2, rng)
    cfg = TrainConfig(batch=4, warmup=1, fix_traces=2, time_limit=2.0, seed=9)
    a = Trainer(bw2, traces, cfg)
    b = Trainer(bw2, traces, cfg)
    for _ in range(3):
        assert a.run_epoch() == b.run_epoch()


def test_checkpoint_resume_is_exact(bw2, blocks_fx, tmp_path):
    rng = np.random.default_rng(7)
    traces = make_traces(blocks_fx, bw2, 5, 2, rng)
    cfg = TrainConfig(batch=3, warmup=1, fix_traces=2, time_limit=2.0, seed=11)
    tr = Trainer(bw2, traces, cfg)
    for _ in range(2):
        tr.run_epoch()
    path = tmp_path / "ck.npz"
    tr.save(path)
    after = [tr.run_epoch(), tr.run_epoch()]

    fresh = Trainer(bw2, traces, cfg)
    fresh.load(path)
    assert fresh.epoch_index == 2
    resumed = [fresh.run_epoch(), fresh.run_epoch()]
    assert resumed == after


def test_warmup_training_reduces_loss(bw2, blocks_fx):
    """Self-supervised losses alone should trend down on clean traces."""
    rng = np.random.default_rng(8)
    traces = make_traces(blocks_fx, bw2, 10, 2, rng, flip=0.0, sigma=0.02)
    cfg = TrainConfig(lr=1e-2, batch=10, warmup=10_000, seed=13)
    tr = Trainer(bw2, traces, cfg)
    losses = [tr.run_epoch()["loss"] for _ in range(100)]
    assert np.mean(losses[50:]) < np.mean(losses[:50])


# evaluation


def test_model_metrics_zero_for_the_true_model(bw2, blocks_fx):
    table = CaseTable.from_action_model(blocks_fx.model)
    err, agree, perm = model_metrics(table, blocks_fx.model, blocks_fx.domain)
    assert err == 0
    assert agree > 0.999
    assert perm.schema_map == {n: n for n in perm.schema_map}


def _schema_logits(table):
    return {name: table.params[f"case/{name}"] for name in table.schema_names}


def _permuted_table(table, domain, sigma):
    # softmax is row-wise, so permuting logit rows permutes the probabilities
    out = CaseTable(domain)
    for name, logits in permute_model_bits(_schema_logits(table), domain, sigma).items():
        out.params[f"case/{name}"][...] = logits
    return out


def test_model_metrics_sees_through_renamings(bw2, blocks_fx):
    """A permuted copy of the truth still scores err 0 under alignment."""
    truth_table = CaseTable.from_action_model(blocks_fx.model)
    perms = list(valid_permutations(blocks_fx.domain))
    for sigma in perms[: min(4, len(perms))]:
        table = _permuted_table(truth_table, blocks_fx.domain, sigma)
        err, agree, _ = model_metrics(table, blocks_fx.model, blocks_fx.domain)
        assert err == 0
        assert agree > 0.999


def test_metrics_invariant_under_joint_renaming(bw2, blocks_fx):
    """Renaming learned and true model together changes no model metric."""
    rng = np.random.default_rng(14)
    traces = make_traces(blocks_fx, bw2, 3, 2, rng)
    tr = Trainer(bw2, traces, TrainConfig(seed=17))
    base = evaluate(tr.state_pred, tr.act_pred, tr.table, bw2, blocks_fx.model, traces)

    perms = list(valid_permutations(blocks_fx.domain))
    sigma = perms[min(3, len(perms) - 1)]
    table2 = _permuted_table(tr.table, blocks_fx.domain, sigma)
    truth_bits = model_truth_bits(tr.table, blocks_fx.model)
    moved_truth = permute_model_bits(truth_bits, blocks_fx.domain, sigma)
    truth2 = model_from_bits(blocks_fx.domain, {k: v.astype(np.int8) for k, v in moved_truth.items()})

    out = evaluate(tr.state_pred, tr.act_pred, table2, bw2, truth2, traces)
    assert out["err"] == base["err"]
    assert out["agree"] == pytest.approx(base["agree"], abs=1e-12)
    assert out["state_acc"] == base["state_acc"]


def test_evaluate_requires_hidden_traces(bw2, blocks_fx):
    rng = np.random.default_rng(15)
    ch = ChannelParams()
    walk = random_walk(bw2, blocks_fx.model, 2, rng, blocks_fx.sample_state)
    tr = observe_trace(walk, ch, rng, keep_hidden=False)
    trainer = Trainer(bw2, [tr], TrainConfig())
    with pytest.raises(ValueError, match="hidden"):
        evaluate(trainer.state_pred, trainer.act_pred, trainer.table, bw2, blocks_fx.model, [tr])


class _StateOracle:
    """Noiseless channel: the feature mean recovers each bit exactly."""

    def predict(self, obs):
        return (obs.mean(axis=-1) > 0.0).astype(float)


class _ActionOracle:
    """Scores transitions against the true grounded model."""

    def __init__(self, table, idx):
        from liftfix.model import GroundLink

        link = GroundLink(table, idx)
        pre, add, dele = link.ground_all(table.decode(table.leaves()))
        self.ground = (pre.value, add.value, dele.value)
        self.n_acts = idx.n_acts

    def predict(self, ps_t, ps_next):
        from liftfix.actions import locally_best_action

        best = locally_best_action(ps_t, ps_next, *self.ground)
        score = np.zeros((ps_t.shape[0], self.n_acts))
        score[np.arange(ps_t.shape[0]), best] = 1.0
        return score


def test_evaluate_perfect_predictors_score_perfectly(bw2, blocks_fx):
    """Feed the truth through the whole metric path; everything maxes out."""
    rng = np.random.default_rng(16)
    traces = make_traces(blocks_fx, bw2, 4, 3, rng, flip=0.0, sigma=0.0)
    table = CaseTable.from_action_model(blocks_fx.model)
    out = evaluate(_StateOracle(), _ActionOracle(table, bw2), table, bw2,
                   blocks_fx.model, traces)
    assert out["err"] == 0.0
    assert out["state_acc"] == 1.0
    assert out["action_acc"] == 1.0
