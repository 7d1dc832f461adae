import numpy as np
import pytest

from ganbench import tensor as T
from ganbench import zoo
from ganbench.nn import make_optimizer
from ganbench.zoo import (Architecture, GanVariant, TrainConfig, build_model, discriminator_loss,
                          generate, generator_loss, gradient_penalty, info_lower_bound, train)

SMALL = Architecture(((8, "leaky_relu:0.2"),), ((8, "leaky_relu:0.2"),),
                     ((8, "leaky_relu:0.2"),), ((8, "leaky_relu:0.2"),))
LINEAR_D = Architecture(((4, "tanh"),), ((1, "linear"),), ((4, "tanh"),), ((4, "tanh"),))


def _constant_output(net, value):
    """Make ``net`` emit ``value`` for every input (last layer weights 0, bias ``value``)."""
    last = len(net.spec.layers) - 1
    net.params[f"{net.prefix}W{last}"].data = np.zeros(net.params[f"{net.prefix}W{last}"].shape)
    net.params[f"{net.prefix}b{last}"].data = np.full(net.params[f"{net.prefix}b{last}"].shape, value)


def _identity_critic(bundle, scale=1.0):
    """With LINEAR_D, make the critic F(x) = scale * x[:, 0]."""
    d = bundle.discriminator
    w0 = np.zeros(d.params["D.W0"].shape)
    w0[0, 0] = scale
    d.params["D.W0"].data = w0
    d.params["D.b0"].data = np.zeros(1)
    d.params["D.W1"].data = np.ones((1, 1))
    d.params["D.b1"].data = np.zeros(1)


def test_vanilla_shapes():
    b = build_model("VANILLA", 7, latent_dim=100)
    z = np.zeros((3, 100))
    assert b.generator(z).shape == (3, 7)
    assert b.discriminator(np.zeros((3, 7))).shape == (3, 1)
    assert b.encoder is None and b.aux is None


def test_cgan_concatenation_widths():
    b = build_model("CGAN", 7, n_classes=4, latent_dim=100)
    assert b.generator.input_dim == 104
    assert b.discriminator.input_dim == 11


def test_bigan_encoder_and_pair_discriminator():
    b = build_model("BIGAN", 7, latent_dim=100)
    assert b.encoder(np.zeros((2, 7))).shape == (2, 100)
    assert b.discriminator.input_dim == 107
    assert b.aux is None


@pytest.mark.parametrize("variant", zoo.SUPPORTED_VARIANTS)
def test_optional_networks_present_exactly_when_required(variant):
    b = build_model(variant, 3, n_classes=3, latent_dim=5, arch=SMALL)
    assert (b.encoder is not None) == (variant == "BIGAN")
    assert (b.aux is not None) == (variant in ("ACGAN", "INFOGAN"))


def test_conditioned_variant_needs_classes():
    with pytest.raises(ValueError):
        build_model("CGAN", 3, n_classes=1)
    with pytest.raises(ValueError):
        build_model("ACGAN", 3)


def test_unknown_variant_lists_supported():
    with pytest.raises(zoo.UnknownVariantError) as err:
        zoo.parse_variant("DCGAN")
    for name in zoo.SUPPORTED_VARIANTS:
        assert name in str(err.value)


def test_vanilla_losses_at_half():
    b = build_model("VANILLA", 2, latent_dim=3, arch=SMALL)
    _constant_output(b.discriminator, 0.0)  # sigmoid(0) = 0.5
    x, z = np.zeros((4, 2)), np.zeros((4, 3))
    assert discriminator_loss(b, x, z).item() == pytest.approx(2 * np.log(0.5), abs=1e-12)
    assert discriminator_loss(b, x, z).item() == pytest.approx(-1.38629, abs=1e-5)
    assert generator_loss(b, z).item() == pytest.approx(-0.69315, abs=1e-5)


def test_lsgan_perfect_discriminator_is_zero():
    b = build_model("LSGAN", 1, latent_dim=2, arch=LINEAR_D)
    _identity_critic(b)
    _constant_output(b.generator, 0.0)  # fake rows are exactly 0 so D(fake) = 0
    x, z = np.ones((5, 1)), np.ones((5, 2))
    assert discriminator_loss(b, x, z).item() == 0.0


def test_lsgan_generator_loss_values():
    b = build_model("LSGAN", 2, latent_dim=2, arch=SMALL)
    _constant_output(b.discriminator, 1.0)
    assert generator_loss(b, np.ones((3, 2))).item() == 0.0
    _constant_output(b.discriminator, 0.5)
    assert generator_loss(b, np.ones((3, 2))).item() == pytest.approx(0.125, abs=1e-15)


def test_wgan_identical_batches_cancel():
    b = build_model("WGAN", 1, latent_dim=2, arch=SMALL)
    _constant_output(b.generator, 0.0)
    assert discriminator_loss(b, np.zeros((6, 1)), np.ones((6, 2))).item() == 0.0


def test_batch_mismatch_is_an_error():
    b = build_model("VANILLA", 2, latent_dim=3, arch=SMALL)
    with pytest.raises(ValueError):
        discriminator_loss(b, np.zeros((4, 2)), np.zeros((5, 3)))


def test_gradient_penalty_unit_linear_critic_is_zero(rng):
    b = build_model("WGAN_GP", 1, latent_dim=2, arch=LINEAR_D)
    _identity_critic(b, 1.0)
    x, f = rng.normal(size=(5, 1)), rng.normal(size=(5, 1))
    assert gradient_penalty(b, x, f, 10.0, rng=rng).item() == pytest.approx(0.0, abs=1e-10)


def test_gradient_penalty_slope_two():
    b = build_model("WGAN_GP", 1, latent_dim=2, arch=LINEAR_D)
    _identity_critic(b, 2.0)
    p = gradient_penalty(b, np.zeros((3, 1)), np.ones((3, 1)), 10.0, rho=np.full(3, 0.3))
    assert p.item() == pytest.approx(10.0, abs=1e-9)


def test_gradient_penalty_rho_one_uses_fake_rows(rng):
    b = build_model("WGAN_GP", 2, latent_dim=2, arch=SMALL, seed=5)
    fake = rng.normal(size=(4, 2))
    p1 = gradient_penalty(b, rng.normal(size=(4, 2)), fake, 10.0, rho=np.ones(4))
    p2 = gradient_penalty(b, rng.normal(size=(4, 2)) * 7, fake, 10.0, rho=np.ones(4))
    assert p1.item() == p2.item()


def test_gradient_penalty_shape_mismatch():
    b = build_model("WGAN_GP", 2, latent_dim=2, arch=SMALL)
    with pytest.raises(ValueError):
        gradient_penalty(b, np.zeros((3, 2)), np.zeros((4, 2)))


def test_info_lower_bound_examples():
    codes = np.array([0, 1, 2, 3])
    perfect = np.eye(4)
    assert info_lower_bound(perfect, codes).item() == pytest.approx(np.log(4), abs=1e-6)
    assert np.log(4) == pytest.approx(1.38629, abs=1e-5)
    uniform = np.full((4, 4), 0.25)
    assert info_lower_bound(uniform, codes).item() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        info_lower_bound(np.full((2, 4), 0.3), codes[:2])


def test_acgan_literal_sign_convention(rng):
    b = build_model("ACGAN", 2, n_classes=3, latent_dim=4, arch=SMALL, seed=2)
    x, z, y = rng.normal(size=(5, 2)) * 0.3, rng.normal(size=(5, 4)), np.array([0, 1, 2, 0, 1])
    with T.no_grad():
        fake = zoo._fake(b, z, y)
        l_s = T.mean(T.log(b.discriminator(x))) + T.mean(T.log(1.0 - b.discriminator(fake)))
        l_c = zoo._class_log_prob(b.aux(x), y) + zoo._class_log_prob(b.aux(fake), y)
    literal = discriminator_loss(b, x, z, labels=y).item()
    original = discriminator_loss(b, x, z, labels=y,
                                  config=TrainConfig(acgan_signs="original")).item()
    assert literal == pytest.approx(l_s.item() - l_c.item(), abs=1e-12)
    assert original == pytest.approx(l_s.item() + l_c.item(), abs=1e-12)


@pytest.mark.parametrize("variant", zoo.SUPPORTED_VARIANTS)
def test_discriminator_step_sign_coherence(variant, rng):
    b = build_model(variant, 2, n_classes=3, latent_dim=4, arch=SMALL, seed=9)
    cfg = TrainConfig.for_variant(variant, latent_dim=4)
    x, z = rng.uniform(-1, 1, size=(8, 2)), rng.normal(size=(8, 4))
    y = rng.integers(0, 3, 8)
    rho = rng.uniform(size=(8, 1))
    labels = y if variant in ("CGAN", "ACGAN") else None
    codes = y if variant in ("CGAN", "ACGAN", "INFOGAN") else None
    params = b.discriminator_params()
    obj = discriminator_loss(b, x, z, labels, codes, cfg, rho=rho)
    grads = T.backward(obj, params)
    before = {k: p.data.copy() for k, p in params.items()}
    make_optimizer(cfg.optimizer_d, params, 1e-7).step(grads, zoo.DISCRIMINATOR_DIRECTION[GanVariant(variant)])
    directional = sum(float((grads[k].data * (params[k].data - before[k])).sum()) for k in params)
    sign = 1.0 if zoo.DISCRIMINATOR_DIRECTION[GanVariant(variant)] == "ascend" else -1.0
    assert sign * directional >= 0.0
    after = discriminator_loss(b, x, z, labels, codes, cfg, rho=rho).item()
    assert sign * (after - obj.item()) >= -1e-12


def test_train_counts_updates_per_epoch():
    b = build_model("WGAN", 1, latent_dim=3, arch=SMALL)
    data = np.linspace(-1, 1, 50)[:, None]
    seen = {"d": 0, "g": 0}
    clipped = []

    def cb(kind, epoch, bundle):
        seen[kind] += 1
        if kind == "d":
            clipped.append(max(np.abs(p.data).max() for p in bundle.discriminator.params.values()))

    _, hist = train(b, data, config=TrainConfig.for_variant("WGAN", epochs=10, critic_steps=5,
                                                           latent_dim=3, batch_size=8), callback=cb)
    assert (hist.d_updates, hist.g_updates) == (50, 10)
    assert seen == {"d": 50, "g": 10}
    assert max(clipped) <= 0.01


def test_zero_epochs_returns_unchanged_bundle():
    b = build_model("VANILLA", 2, latent_dim=3, arch=SMALL)
    before = {k: p.data.copy() for k, p in b.all_params().items()}
    out, hist = train(b, np.zeros((10, 2)), config=TrainConfig(epochs=0, latent_dim=3))
    assert out is b and len(hist) == 0
    assert all(np.array_equal(before[k], p.data) for k, p in b.all_params().items())


def test_training_is_deterministic():
    data = np.random.default_rng(0).uniform(-1, 1, size=(40, 2))
    digests = []
    for _ in range(2):
        b = build_model("WGAN_GP", 2, latent_dim=3, arch=SMALL, seed=4)
        _, hist = train(b, data, config=TrainConfig.for_variant("WGAN_GP", epochs=5, latent_dim=3,
                                                               batch_size=8, seed=11))
        digests.append(hist.digest())
    assert digests[0] == digests[1]


def test_empty_and_mismatched_data_rejected():
    b = build_model("VANILLA", 2, latent_dim=3, arch=SMALL)
    cfg = TrainConfig(epochs=1, latent_dim=3)
    with pytest.raises(ValueError):
        train(b, np.zeros((0, 2)), config=cfg)
    with pytest.raises(ValueError):
        train(b, np.zeros((5, 3)), config=cfg)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch_and_history():
    b = build_model("LSGAN", 1, latent_dim=2, arch=SMALL)
    cfg = TrainConfig(epochs=200, latent_dim=2, batch_size=8, lr_d=1e150, lr_g=1e150)
    with pytest.raises(zoo.TrainingError) as err:
        train(b, np.linspace(-1, 1, 20)[:, None], config=cfg)
    assert err.value.epoch >= 0
    assert len(err.value.history) == err.value.epoch


def test_generate_contracts():
    b = build_model("VANILLA", 3, latent_dim=4, arch=SMALL)
    assert generate(b, 0).shape == (0, 3)
    g = generate(b, 50, seed=3)
    assert np.all(np.abs(g) <= 1.0)
    assert np.array_equal(g, generate(b, 50, seed=3))
    c = build_model("CGAN", 3, n_classes=2, latent_dim=4, arch=SMALL)
    with pytest.raises(ValueError):
        generate(c, 5, seed=0)
    assert generate(c, 5, seed=0, labels=[0, 1, 0, 1, 1]).shape == (5, 3)


def test_encode_contracts(rng):
    b = build_model("BIGAN", 7, latent_dim=100)
    x = rng.normal(size=(5, 7))
    z = zoo.encode(b, x)
    assert z.shape == (5, 100)
    assert np.array_equal(z, zoo.encode(b, x))
    np.testing.assert_allclose(zoo.encode(b, x[2:3]), z[2:3], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        zoo.encode(build_model("VANILLA", 7), x)


@pytest.mark.parametrize("variant", ["VANILLA", "ACGAN", "BIGAN", "INFOGAN"])
def test_checkpoint_round_trip(variant, tmp_path):
    b = build_model(variant, 3, n_classes=3, latent_dim=4, arch=SMALL, seed=8)
    cfg = TrainConfig.for_variant(variant, latent_dim=4, epochs=3)
    path = tmp_path / "m.bin"
    zoo.save_checkpoint(path, b, cfg)
    b2, cfg2 = zoo.load_checkpoint(path)
    assert cfg2 == cfg and b2.variant == b.variant
    labels = [0, 1, 2, 0]
    assert np.array_equal(generate(b, 4, seed=1, labels=labels), generate(b2, 4, seed=1, labels=labels))
    header = zoo.read_checkpoint_header(path)
    assert header["version"] == zoo.CHECKPOINT_VERSION
    assert [p["name"] for p in header["params"]] == list(b.all_params())


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTACKPT" + b"\0" * 20)
    with pytest.raises(ValueError):
        zoo.load_checkpoint(path)


def test_vanilla_moves_generator_toward_data_mean():
    """Pilot from the training contract: 200 draws centred at 5, 2000 epochs, defaults."""
    rng = np.random.default_rng(0)
    raw = rng.normal(5.0, 1.0, size=(200, 1))
    lo, hi = raw.min(), raw.max()
    data = 2 * (raw - lo) / (hi - lo) - 1

    def gen_mean(bundle):
        g = generate(bundle, 2000, seed=1)
        return float(((g + 1) / 2 * (hi - lo) + lo).mean())

    b = build_model("VANILLA", 1, seed=0)
    before = abs(gen_mean(b) - 5.0)
    train(b, data, config=TrainConfig.for_variant("VANILLA", epochs=2000, seed=0))
    after = abs(gen_mean(b) - 5.0)
    assert after < before
