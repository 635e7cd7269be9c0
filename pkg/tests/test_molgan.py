import json

import numpy as np
import pytest

from molgen import checkpoint as ckpt
from molgen.diff import Tensor, grad, no_grad
from molgen.graphs import GraphSpec, featurize_batch
from molgen.molgan import (
    Discriminator,
    EmptyDatasetError,
    Generator,
    History,
    MolGAN,
    MolganConfig,
    NaNLossError,
    generate,
    gradient_penalty,
    interpolate,
    is_generator_step,
    relax,
    sample_latent,
    train,
    wgan_gp_loss,
)
from molgen.molgan.model import _symmetric_gumbel
from molgen.chem import parse_smiles
from molgan_checks import (
    SMALL_SPEC,
    gp_loss_gradcheck,
    gumbel_frequency_error,
    permutation_invariance,
    random_graphs,
)
from oracles import softmax

TINY = dict(
    spec=SMALL_SPEC, latent_dim=4, generator_hidden=(16,), conv_widths=(8, 4), aggregation_width=8,
    discriminator_hidden=(8,), batch_size=8,
)


def tiny_config(**kw) -> MolganConfig:
    return MolganConfig(**{**TINY, **kw})


def tiny_data(n=24):
    smiles = ["C", "CC", "CO", "C=O", "CN", "C#N", "CCO", "OCO", "CC=C", "C1CC1", "CCN", "NC=O"]
    mols = [parse_smiles(smiles[k % len(smiles)]) for k in range(n)]
    return featurize_batch(mols, SMALL_SPEC)


# ---------------------------------------------------------------- config


@pytest.mark.parametrize(
    "kw, field",
    [
        ({"sampling_mode": "argmax"}, "sampling_mode"),
        ({"temperature": 0.0}, "temperature"),
        ({"generator_steps_ratio": 0.0}, "generator_steps_ratio"),
        ({"generator_steps_ratio": 1.5}, "generator_steps_ratio"),
        ({"dropout": 1.0}, "dropout"),
        ({"conv_widths": ()}, "conv_widths"),
        ({"learning_rate": -1.0}, "learning_rate"),
        ({"batch_size": 0}, "batch_size"),
    ],
)
def test_config_validation_names_field(kw, field):
    with pytest.raises(ValueError, match=field):
        MolganConfig(**kw)


def test_config_dict_round_trip():
    cfg = tiny_config(lr_decay=(0.5, 100))
    back = MolganConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_default_architecture():
    cfg = MolganConfig()
    assert cfg.generator_hidden == (128, 256, 512) and cfg.latent_dim == 32
    assert cfg.conv_widths == (64, 32) and cfg.aggregation_width == 128
    assert cfg.penalty_coefficient == 10 and cfg.generator_steps_ratio == 0.2


# ---------------------------------------------------------------- generator and relaxations


def test_generator_shapes_and_symmetric_edges():
    cfg = tiny_config()
    G = Generator(cfg, np.random.default_rng(0))
    nodes, edges = G(sample_latent(np.random.default_rng(1), 3, cfg.latent_dim))
    assert nodes.shape == (3, 5, 5) and edges.shape == (3, 5, 5, 4)
    assert np.allclose(edges.data, edges.data.transpose(0, 2, 1, 3))


@pytest.mark.parametrize("mode", ["gumbel", "softmax", "straight_through"])
def test_generate_outputs_are_distributions(mode):
    cfg = tiny_config()
    G = Generator(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    X, A = generate(G, sample_latent(rng, 4, cfg.latent_dim), mode, 0.5, rng)
    assert np.allclose(X.data.sum(-1), 1) and np.allclose(A.data.sum(-1), 1)
    assert np.allclose(A.data, A.data.transpose(0, 2, 1, 3))


def test_symmetric_gumbel_noise():
    g = _symmetric_gumbel(np.random.default_rng(0), (2, 4, 4, 3))
    assert np.array_equal(g, g.transpose(0, 2, 1, 3))


def test_softmax_mode_ignores_temperature():
    logits = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    a = relax(logits, "softmax", 0.1).data
    b = relax(logits, "softmax", 5.0).data
    assert np.array_equal(a, b) and np.allclose(a, softmax(logits.data))


def test_straight_through_is_one_hot_with_soft_gradient():
    logits = Tensor(np.random.default_rng(2).normal(size=(4, 5)), requires_grad=True)
    w = np.random.default_rng(3).normal(size=(4, 5))
    hard = relax(logits, "straight_through", 0.7)
    assert np.array_equal(hard.data, np.eye(5)[logits.data.argmax(-1)])
    (g_hard,) = grad((hard * w).sum(), [logits])
    (g_soft,) = grad((relax(logits * (1 / 0.7), "softmax", 1.0) * w).sum(), [logits])
    assert np.allclose(g_hard.data, g_soft.data)


def test_gumbel_mode_requires_noise():
    with pytest.raises(ValueError):
        relax(Tensor(np.zeros((2, 3))), "gumbel", 1.0)


def test_gumbel_frequencies_match_softmax():
    assert gumbel_frequency_error(20_000, seed=1) < 0.015


@pytest.mark.parametrize("tau", [0.2, 1.0, 3.0])
def test_gumbel_argmax_distribution_is_temperature_free(tau):
    assert gumbel_frequency_error(20_000, seed=2, temperature=tau) < 0.015


# ---------------------------------------------------------------- discriminator


def test_discriminator_permutation_invariance():
    assert permutation_invariance(200, seed=3) < 1e-9


def test_discriminator_permutation_invariance_small_spec():
    assert permutation_invariance(100, seed=4, config=tiny_config()) < 1e-9


def test_discriminator_ignores_no_bond_channel_and_diagonal():
    cfg = tiny_config()
    D = Discriminator(cfg, np.random.default_rng(0))
    X, A = random_graphs(np.random.default_rng(1), 3, cfg.spec)
    A2 = A.copy()
    A2[..., 0] = np.random.default_rng(2).random(A2.shape[:-1])
    idx = np.arange(cfg.spec.max_atoms)
    A2[:, idx, idx, 1:] = 7.0
    with no_grad():
        assert np.allclose(D(Tensor(X), Tensor(A)).data, D(Tensor(X), Tensor(A2)).data)


def test_discriminator_rejects_bad_shapes():
    from molgen.diff import ShapeMismatchError

    D = Discriminator(tiny_config(), np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        D(Tensor(np.zeros((2, 6, 5))), Tensor(np.zeros((2, 6, 6, 4))))


# ---------------------------------------------------------------- WGAN-GP


def test_interpolation_shares_eps_between_nodes_and_edges():
    rng = np.random.default_rng(0)
    real = random_graphs(rng, 3, SMALL_SPEC, soft=False)
    fake = random_graphs(rng, 3, SMALL_SPEC)
    eps = np.array([0.0, 0.5, 1.0])
    X, A = interpolate(real, fake, eps)
    assert np.allclose(X.data[0], fake[0][0]) and np.allclose(X.data[2], real[0][2])
    assert np.allclose(A.data[1], 0.5 * (real[1][1] + fake[1][1]))
    assert X.requires_grad and A.requires_grad


def test_gradient_penalty_uses_joint_norm():
    cfg = tiny_config()
    D = Discriminator(cfg, np.random.default_rng(0))
    X, A = random_graphs(np.random.default_rng(1), 2, cfg.spec)
    Xt, At = Tensor(X, requires_grad=True), Tensor(A, requires_grad=True)
    gx, ga = grad(D(Xt, At).sum(), [Xt, At])
    norms = np.sqrt((gx.data**2).sum((1, 2)) + (ga.data**2).sum((1, 2, 3)))
    pen = gradient_penalty(D, Tensor(X, requires_grad=True), Tensor(A, requires_grad=True)).data
    assert np.allclose(pen, (norms - 1) ** 2)


def test_wgan_gp_loss_composition():
    cfg = tiny_config()
    D = Discriminator(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    real, fake = random_graphs(rng, 4, cfg.spec, soft=False), random_graphs(rng, 4, cfg.spec)
    eps = rng.random(4)
    loss = wgan_gp_loss(D, real, fake, 10.0, eps)
    with no_grad():
        dr = D(Tensor(real[0]), Tensor(real[1])).data
        df = D(Tensor(fake[0]), Tensor(fake[1])).data
    assert loss.wasserstein == pytest.approx(dr.mean() - df.mean())
    assert float(loss.d_loss.data) == pytest.approx(-dr.mean() + df.mean() + 10 * loss.penalty)
    assert float(loss.g_loss.data) == pytest.approx(-df.mean())


def test_gp_loss_gradient_matches_finite_differences():
    assert gp_loss_gradcheck(seed=0) < 1e-4


# ---------------------------------------------------------------- schedule and training


@pytest.mark.parametrize("ratio, steps, expected", [(0.2, 100, 20), (1.0, 7, 7), (0.5, 9, 4), (1 / 3, 30, 10)])
def test_generator_step_schedule(ratio, steps, expected):
    assert sum(is_generator_step(s, ratio) for s in range(steps)) == expected


def test_training_history_and_determinism():
    X, A = tiny_data()
    a, b = MolGAN(tiny_config(), seed=5), MolGAN(tiny_config(), seed=5)
    ha, hb = a.fit(X, A, 10), b.fit(X, A, 10)
    assert ha.d_loss == hb.d_loss and ha.g_loss == hb.g_loss
    assert ha.steps == 10 and ha.generator_updates == 2
    assert all(np.isfinite(ha.d_loss))
    c = MolGAN(tiny_config(), seed=6)
    assert c.fit(X, A, 10).d_loss != ha.d_loss


def test_training_changes_parameters():
    X, A = tiny_data()
    m = MolGAN(tiny_config(generator_steps_ratio=1.0), seed=0)
    g0 = m.generator.state_dict()
    d0 = m.discriminator.state_dict()
    m.fit(X, A, 3)
    assert any(not np.array_equal(g0[k], v) for k, v in m.generator.state_dict().items())
    assert any(not np.array_equal(d0[k], v) for k, v in m.discriminator.state_dict().items())


def test_dropout_training_runs():
    X, A = tiny_data()
    h = MolGAN(tiny_config(dropout=0.2, generator_steps_ratio=1.0), seed=0).fit(X, A, 3)
    assert all(np.isfinite(h.d_loss)) and h.generator_updates == 3


def test_checkpoint_resume_reproduces_losses(tmp_path):
    X, A = tiny_data()
    full = MolGAN(tiny_config(lr_decay=(0.9, 10)), seed=2)
    h_full = full.fit(X, A, 12)

    first = MolGAN(tiny_config(lr_decay=(0.9, 10)), seed=2)
    h1 = first.fit(X, A, 5)
    path = first.save(tmp_path / "m.npz")
    resumed = MolGAN.load(path)
    h2 = resumed.fit(X, A, 7)
    assert h1.d_loss + h2.d_loss == h_full.d_loss
    assert h1.g_loss + h2.g_loss == h_full.g_loss
    assert resumed.step == 12


def test_checkpoint_layout(tmp_path):
    m = MolGAN(tiny_config(), seed=1)
    path = m.save(tmp_path / "m.npz")
    meta, arrays = ckpt.load(path)
    assert meta["format"] == "molgen-checkpoint" and meta["version"] == 1
    assert meta["model"] == "molgan" and meta["seed"] == 1 and meta["step"] == 0
    assert "generator/nodes_head.weight" in arrays
    assert MolganConfig.from_dict(meta["config"]) == m.config


def test_loading_wrong_model_kind(tmp_path):
    path = ckpt.save(tmp_path / "x.npz", "nflow", {"config": {}, "seed": 0, "step": 0}, {})
    with pytest.raises(ckpt.CheckpointError):
        MolGAN.load(path)


def test_nan_loss_raises_with_state():
    X, A = tiny_data()
    m = MolGAN(tiny_config(), seed=0)
    m.discriminator.head.layers[-1].bias.data[:] = np.nan
    with pytest.raises(NaNLossError) as info:
        m.fit(X, A, 2)
    assert info.value.state["step"] == 0 and "param_norms" in info.value.state


def test_empty_dataset():
    with pytest.raises(EmptyDatasetError):
        MolGAN(tiny_config()).fit(np.zeros((0, 5, 5)), np.zeros((0, 5, 5, 4)), 1)
    with pytest.raises(EmptyDatasetError):
        train(tiny_config(), [], epochs=1)


def test_train_epochs_to_steps():
    X, A = tiny_data(20)
    _, h = train(tiny_config(), (X, A), epochs=2)
    assert h.steps == 2 * 3  # ceil(20 / 8) batches per epoch


def test_early_stop_on_uniqueness():
    X, A = tiny_data()
    cfg = tiny_config(min_uniqueness=101.0, uniqueness_check_interval=4, uniqueness_sample_size=16)
    h = MolGAN(cfg, seed=0).fit(X, A, 20)
    assert h.steps == 4 and h.events[-1] == {"step": 4, "early_stop": True}


def test_periodic_checkpoints(tmp_path):
    X, A = tiny_data()
    MolGAN(tiny_config(checkpoint_interval=3), seed=0).fit(X, A, 7, checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["molgan_step0000003.npz", "molgan_step0000006.npz"]


def test_sampling_is_seeded_and_discrete():
    m = MolGAN(tiny_config(), seed=0)
    a, b = m.predict(10, seed=3), m.predict(10, seed=3)
    assert a == b
    g = m.sample(6)
    assert set(np.unique(g.X)) <= {0.0, 1.0} and np.allclose(g.A.sum(-1), 1)


def test_history_serializes():
    h = History(d_loss=[1.0], g_loss=[None], wasserstein=[0.5], penalty=[0.1])
    assert json.loads(json.dumps(h.to_dict()))["g_loss"] == [None]
