"""Conditional WGAN-GP training with information, downstream and conditional losses.

Each generator step runs ``n_critic`` critic updates, one generator update and
one update of the auxiliary classifier/regressor on real rows. With DP enabled
the real-data term of every critic update goes through per-sample clipping
and Gaussian noise, and training stops before the privacy ledger would exceed
the target epsilon.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .bundle import ModelBundle
from .conditioning import CondLayout, SamplerState, cond_matrix
from .dp import PrivacyLedger, clip_and_noise
from .encoder import TabularEncoder, encode_dataset, fit_encoders
from .errors import BudgetExhaustedBeforeFirstStep, InputError, NonFiniteLoss, OptionOutOfRange
from .network import MLP, Adam, generator_forward
from .schema import Dataset
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 500
    n_critic: int = 5
    gp_weight: float = 10.0
    w_info: float = 1.0
    w_down: float = 1.0
    w_gen: float = 1.0
    loss: str = "wgan-gp"  # "gan" selects the original minimax loss (no gradient penalty)
    noise_dim: int = 100
    hidden: tuple = (256, 256)
    aux_hidden: tuple = (256, 256, 256, 256)
    lr: float = 2e-4
    betas: tuple = (0.5, 0.9)
    gumbel_tau: float = 0.2
    k_max: int = 10
    long_tail_epsilon: float = 1.0
    dp_enabled: bool = False
    sigma: float = 1.0
    clip: float = 1.0
    eps_target: float | None = None
    delta: float = 1e-5
    dtype: str = "float32"  # network arithmetic during training and sampling
    seed: int = 0
    log_path: str | None = None

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.aux_hidden = tuple(self.aux_hidden)
        self.betas = tuple(self.betas)
        if self.n_critic < 1:
            raise InputError("n_critic must be at least 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise InputError("batch_size must be positive and epochs non-negative")
        if self.dtype not in ("float32", "float64"):
            raise InputError(f"unsupported dtype {self.dtype!r}")
        if self.loss not in ("wgan-gp", "gan"):
            raise InputError(f"unknown loss {self.loss!r}")
        if self.dp_enabled:
            if self.clip != 1.0:
                raise InputError("DP training uses the clipping bound C = 1")
            if self.eps_target is None:
                raise InputError("DP training needs eps_target")
            if self.sigma <= 0:
                raise InputError("DP noise multiplier must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("hidden", "aux_hidden", "betas"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# --------------------------------------------------------------- loss terms

def critic_output(D: MLP, x, leaves=None):
    return D.forward(x, leaves)


def gradient_penalty(D: MLP, real_in: np.ndarray, fake_in: np.ndarray, u: np.ndarray, leaves=None):
    """mean over rows of (||grad_x D(x_hat)||_2 - 1)^2 at x_hat = u real + (1 - u) fake."""
    x_hat = ad.leaf(u * real_in + (1.0 - u) * fake_in)
    score = D.forward(x_hat, leaves)
    g = ad.grad_as_graph(ad.sum_(score), x_hat)
    return ad.mean(ad.square(ad.sub(ad.norm2(g, axis=1), 1.0)))


def critic_loss(D: MLP, real_in: np.ndarray, fake_in: np.ndarray, u: np.ndarray,
                gp_weight: float = 10.0, leaves=None):
    """Wasserstein critic loss with gradient penalty; returns (loss, adversarial part, penalty)."""
    adv = ad.sub(ad.mean(D.forward(fake_in, leaves)), ad.mean(D.forward(real_in, leaves)))
    gp = gradient_penalty(D, real_in, fake_in, u, leaves)
    return ad.add(adv, ad.mul(gp, gp_weight)), adv, gp


def info_loss(real_features: np.ndarray, fake_features):
    """||mean_real - mean_fake||_2 + ||sd_real - sd_fake||_2 (population SD)."""
    ff = ad._as_node(fake_features)
    rf = np.asarray(real_features, dtype=ff.value.dtype)

    def moments(x):
        m = ad.mean(x, axis=0)
        return m, ad.mul(ad.norm2(ad.sub(x, m), axis=0), 1.0 / math.sqrt(x.shape[0]))

    f_mean, f_sd = moments(ff)
    with ad.no_grad():
        r_mean, r_sd = moments(ad.constant(rf))
    return ad.add(ad.norm2(ad.sub(r_mean, f_mean)), ad.norm2(ad.sub(r_sd, f_sd)))


def generator_cond_loss(raw, segments: np.ndarray, options: np.ndarray, layout: CondLayout):
    """Cross-entropy between each row's conditioned one-hot and the generated logits of that segment only."""
    raw = ad._as_node(raw)
    n = raw.shape[0]
    total = None
    for s, seg in enumerate(layout.segments):
        rows = np.flatnonzero(segments == s)
        if rows.size == 0:
            continue
        target = np.zeros((n, seg.option_count), dtype=raw.value.dtype)
        target[rows, options[rows]] = 1.0
        logits = raw[:, seg.source_offset:seg.source_offset + seg.option_count]
        term = ad.cross_entropy(logits, target)
        total = term if total is None else ad.add(total, term)
    return total if total is not None else ad.constant(0.0)


def _abs(x):
    return ad.add(ad.relu(x), ad.relu(ad.mul(x, -1.0)))


class AuxiliaryTask:
    """Splits encoded rows into (features, label) and scores the auxiliary model."""

    def __init__(self, encoder: TabularEncoder, target: str):
        block = encoder.block(target)
        self.target = target
        self.classification = block.variant == "onehot"
        self.label = (block.offset, block.offset + block.width)
        self.feature_slices = [(b.offset, b.offset + b.width) for b in encoder.layout if b.name != target]
        self.n_features = sum(b - a for a, b in self.feature_slices)
        self.n_out = block.width if self.classification else 1

    def split(self, rows):
        rows = ad._as_node(rows)
        feats = ad.concat([rows[:, a:b] for a, b in self.feature_slices], axis=1)
        return feats, rows[:, self.label[0]:self.label[1]]

    def split_array(self, rows: np.ndarray):
        feats = np.concatenate([rows[:, a:b] for a, b in self.feature_slices], axis=1)
        return feats, rows[:, self.label[0]:self.label[1]]

    def loss(self, prediction, label):
        if self.classification:
            return ad.cross_entropy(prediction, label)
        return ad.mean(_abs(ad.sub(label, prediction)))


def downstream_loss(fake_rows, aux: MLP, task: AuxiliaryTask, leaves=None):
    """Disagreement between a generated row's label and the auxiliary model's prediction from its features."""
    feats, label = task.split(fake_rows)
    return task.loss(aux.forward(feats, leaves), label)


# --------------------------------------------------------------- training state

@dataclass
class LossRecord:
    step: int
    epoch: int
    critic: float
    adv: float
    gp: float
    gen_adv: float
    info: float
    down: float
    gen: float
    aux: float
    epsilon: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _grads(root, leaves) -> list[np.ndarray]:
    return ad.grad(root, leaves)


class GanTrainer:
    def __init__(self, data: Dataset, config: TrainConfig):
        self.data = data
        self.config = cfg = config
        if data.row_count == 0:
            raise InputError("cannot train on an empty dataset")
        self.encoder = fit_encoders(data, derive_seed(cfg.seed, "encoder"), k_max=cfg.k_max,
                                    long_tail_epsilon=cfg.long_tail_epsilon)
        self.matrix = encode_dataset(data, self.encoder)
        self.dtype = np.dtype(cfg.dtype)
        self.rows = self.matrix.rows.astype(self.dtype)
        self.sampler = SamplerState.fit(self.encoder, self.matrix, derive_seed(cfg.seed, "sampler"))
        self.cond_layout = self.sampler.layout
        width, bits = self.encoder.total_width, self.cond_layout.total_bits
        init = rng_for(cfg.seed, "init")
        self.G = MLP((cfg.noise_dim + bits, *cfg.hidden, width), init, dtype=self.dtype)
        self.D = MLP((width + bits, *cfg.hidden, 1), init, dtype=self.dtype)
        target = data.schema.target
        self.task = AuxiliaryTask(self.encoder, target.name) if target is not None else None
        self.aux = (MLP((self.task.n_features, *cfg.aux_hidden, self.task.n_out), init, dtype=self.dtype)
                    if self.task else None)
        self.opt_g = Adam(self.G, cfg.lr, cfg.betas)
        self.opt_d = Adam(self.D, cfg.lr, cfg.betas)
        self.opt_a = Adam(self.aux, cfg.lr, cfg.betas) if self.aux else None
        self.rng = rng_for(cfg.seed, "train")
        self.dp_rng = rng_for(cfg.seed, "dp")
        self.ledger = None
        self.max_critic_updates = None
        n = data.row_count
        self.batch = min(cfg.batch_size, n)
        if cfg.dp_enabled:
            self.ledger = PrivacyLedger(cfg.sigma, self.batch, n, cfg.delta, cfg.clip)
            self.max_critic_updates = self.ledger.max_steps(cfg.eps_target)
            if self.max_critic_updates < 1:
                raise BudgetExhaustedBeforeFirstStep(
                    f"eps_target={cfg.eps_target} does not cover one critic update "
                    f"(one update costs eps={self.ledger.epsilon(1)[0]:.4g})")
        self.steps_done = 0
        self.critic_updates = 0
        self.history: list[LossRecord] = []

    # ---- batches

    def _conditions(self, n: int):
        if self.sampler.n_segments == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((n, 0), self.dtype)
        segs, opts = self.sampler.sample_conditions(n)
        return segs, opts, cond_matrix(self.cond_layout, segs, opts).astype(self.dtype)

    def _real_rows(self, segs, opts, n: int) -> np.ndarray:
        if self.sampler.n_segments == 0:
            return self.rows[self.rng.integers(len(self.rows), size=n)]
        return self.rows[self.sampler.draw_matching_rows(segs, opts)]

    def _fake(self, n: int, cond: np.ndarray, leaves=None):
        z = self.rng.normal(size=(n, self.config.noise_dim))
        return generator_forward(self.G, z, cond, self.encoder.layout, train=True, rng=self.rng,
                                 leaves=leaves, tau=self.config.gumbel_tau)

    # ---- updates

    def critic_step(self) -> tuple[float, float, float]:
        cfg, B = self.config, self.batch
        segs, opts, cond = self._conditions(B)
        real = self._real_rows(segs, opts, B)
        with ad.no_grad():
            fake = self._fake(B, cond)[0].value
        real_in = np.concatenate([real, cond], axis=1)
        fake_in = np.concatenate([fake, cond], axis=1)
        leaves = self.D.leaves()
        if cfg.loss == "wgan-gp":
            u = self.rng.random((B, 1)).astype(self.dtype)
            d_fake = ad.mean(self.D.forward(fake_in, leaves))
            gp = gradient_penalty(self.D, real_in, fake_in, u, leaves)
            rest = ad.add(d_fake, ad.mul(gp, cfg.gp_weight))
            gp_value = float(gp.value)
        else:
            d_out = self.D.forward(fake_in, leaves)
            rest = ad.bce_with_logits(d_out, np.zeros_like(d_out.value))
            gp_value = 0.0
        if cfg.dp_enabled:
            grads = [g for g in _grads(rest, leaves)]
            noisy = self._private_real_gradient(real_in)
            grads = [g + h for g, h in zip(grads, noisy)]
            with ad.no_grad():
                real_term = self._real_term(self.D.forward(real_in))
            total = float(rest.value) + float(real_term.value)
        else:
            real_term = self._real_term(self.D.forward(real_in, leaves))
            loss = ad.add(rest, real_term)
            grads = _grads(loss, leaves)
            total = float(loss.value)
        self.opt_d.step(grads)
        self.critic_updates += 1
        if self.ledger is not None:
            self.ledger.charge(1)
        adv = total - cfg.gp_weight * gp_value if cfg.loss == "wgan-gp" else total
        return total, adv, gp_value

    def _real_term(self, d_real):
        if self.config.loss == "wgan-gp":
            return ad.mul(ad.mean(d_real), -1.0)
        return ad.bce_with_logits(d_real, np.ones_like(d_real.value))

    def _private_real_gradient(self, real_in: np.ndarray) -> list[np.ndarray]:
        """Per-sample gradients of the real-data term, clipped, noised and averaged."""
        shapes = [p.shape for p in self.D.params]
        per_sample = []
        for i in range(len(real_in)):
            leaves = self.D.leaves()
            term = self._real_term(self.D.forward(real_in[i:i + 1], leaves))
            per_sample.append(np.concatenate([g.ravel() for g in _grads(term, leaves)]))
        flat = clip_and_noise(np.array(per_sample), self.config.clip, self.config.sigma, self.dp_rng)
        out, pos = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            out.append(flat[pos:pos + size].reshape(shp).astype(self.dtype))
            pos += size
        return out

    def generator_step(self) -> dict:
        cfg, B = self.config, self.batch
        segs, opts, cond = self._conditions(B)
        real = self._real_rows(segs, opts, B)
        g_leaves = self.G.leaves()
        fake, raw = self._fake(B, cond, g_leaves)
        fake_in = ad.concat([fake, ad.constant(cond)], axis=1)
        d_fake, fake_feat = self.D.forward(fake_in, return_features=True)
        if cfg.loss == "wgan-gp":
            adv = ad.mul(ad.mean(d_fake), -1.0)
        else:
            adv = ad.bce_with_logits(d_fake, np.ones_like(d_fake.value))
        parts = {"gen_adv": adv}
        total = adv
        if cfg.w_info:
            with ad.no_grad():
                real_feat = self.D.forward(np.concatenate([real, cond], axis=1), return_features=True)[1].value
            parts["info"] = info_loss(real_feat, fake_feat)
            total = ad.add(total, ad.mul(parts["info"], cfg.w_info))
        if cfg.w_gen and self.sampler.n_segments:
            parts["gen"] = generator_cond_loss(raw, segs, opts, self.cond_layout)
            total = ad.add(total, ad.mul(parts["gen"], cfg.w_gen))
        if cfg.w_down and self.aux is not None:
            parts["down"] = downstream_loss(fake, self.aux, self.task)
            total = ad.add(total, ad.mul(parts["down"], cfg.w_down))
        self.opt_g.step(_grads(total, g_leaves))
        return {k: float(v.value) for k, v in parts.items()}

    def aux_step(self) -> float:
        idx = self.rng.integers(len(self.rows), size=self.batch)
        feats, label = self.task.split_array(self.rows[idx])
        leaves = self.aux.leaves()
        loss = self.task.loss(self.aux.forward(feats, leaves), label)
        self.opt_a.step(_grads(loss, leaves))
        return float(loss.value)

    # ---- loop

    def _budget_left(self) -> int:
        if self.max_critic_updates is None:
            return self.config.n_critic
        return min(self.config.n_critic, self.max_critic_updates - self.critic_updates)

    def fit(self) -> "GanTrainer":
        cfg = self.config
        steps_per_epoch = math.ceil(self.data.row_count / self.batch)
        log_fh = open(cfg.log_path, "w") if cfg.log_path else None
        try:
            for epoch in range(cfg.epochs):
                for _ in range(steps_per_epoch):
                    n_updates = self._budget_left()
                    if n_updates < 1:
                        log.info("privacy budget reached after %d critic updates", self.critic_updates)
                        return self
                    for _ in range(n_updates):
                        critic, adv, gp = self.critic_step()
                    parts = self.generator_step()
                    aux = self.aux_step() if self.aux is not None else 0.0
                    rec = LossRecord(self.steps_done, epoch, critic, adv, gp, parts["gen_adv"],
                                     parts.get("info", 0.0), parts.get("down", 0.0), parts.get("gen", 0.0),
                                     aux, self.ledger.epsilon()[0] if self.ledger else None)
                    for name, value in rec.to_dict().items():
                        if value is not None and not math.isfinite(value):
                            raise NonFiniteLoss(self.steps_done, name)
                    self.history.append(rec)
                    if log_fh:
                        log_fh.write(json.dumps(rec.to_dict()) + "\n")
                    self.steps_done += 1
        finally:
            if log_fh:
                log_fh.close()
        return self

    def bundle(self) -> ModelBundle:
        return ModelBundle(
            schema=self.data.schema,
            encoder=self.encoder,
            sampler_counts=[c.copy() for c in self.sampler.counts],
            generator=[p.astype(np.float64) for p in self.G.params],
            discriminator=[p.astype(np.float64) for p in self.D.params],
            auxiliary=[p.astype(np.float64) for p in self.aux.params] if self.aux else [],
            config=self.config.to_dict(),
            ledger=self.ledger.snapshot() if self.ledger else None,
            seed=self.config.seed,
        )


def train(data: Dataset, config: TrainConfig) -> tuple[ModelBundle, list[LossRecord]]:
    trainer = GanTrainer(data, config).fit()
    return trainer.bundle(), trainer.history


# --------------------------------------------------------------- sampling

def _resolve_condition(encoder: TabularEncoder, layout: CondLayout, condition) -> tuple[int, int]:
    column, option = condition
    s = layout.index_of(column)
    seg = layout.segments[s]
    enc = encoder.encoders[seg.column]
    if isinstance(option, (int, np.integer)) and not isinstance(option, bool):
        idx = int(option)
    elif enc.variant == "onehot":
        cats = [None if c is None else str(c) for c in enc.categories]
        if option not in cats:
            raise OptionOutOfRange(f"{option!r} is not a class of column {seg.column!r}")
        idx = cats.index(option)
    elif enc.variant == "mixed":
        try:
            idx = enc.k + list(enc.categorical_values).index(float(option))
        except ValueError:
            raise OptionOutOfRange(f"{option!r} is not a declared value of column {seg.column!r}") from None
    else:
        raise OptionOutOfRange(f"column {seg.column!r} takes a mode index as condition")
    if not 0 <= idx < seg.option_count:
        raise OptionOutOfRange(f"option {idx} outside column {seg.column!r} ({seg.option_count} options)")
    return s, idx


def sample(bundle: ModelBundle, n_rows: int, seed: int = 0, condition=None, *,
           batch_size: int = 1000) -> Dataset:
    """Generate ``n_rows`` rows; ``condition`` is (column, option index or label)."""
    encoder = bundle.encoder
    layout = CondLayout.from_encoder(encoder)
    sampler = SamplerState(layout, bundle.sampler_counts)
    cfg = TrainConfig.from_dict(bundle.config)
    fixed = _resolve_condition(encoder, layout, condition) if condition is not None else None
    if n_rows <= 0:
        return Dataset.empty(bundle.schema)
    G = MLP(bundle.generator_sizes, params=bundle.generator, dtype=cfg.dtype)
    rng = rng_for(seed, "sample")
    chunks = []
    for start in range(0, n_rows, batch_size):
        n = min(batch_size, n_rows - start)
        if layout.segments:
            if fixed is None:
                segs, opts = sampler.sample_original(n, rng)
            else:
                segs, opts = np.full(n, fixed[0]), np.full(n, fixed[1])
            cond = cond_matrix(layout, segs, opts)
        else:
            cond = np.zeros((n, 0))
        z = rng.normal(size=(n, cfg.noise_dim))
        with ad.no_grad():
            rows, _ = generator_forward(G, z, cond, encoder.layout, train=False)
        chunks.append(rows.value)
    return encoder.decode(np.vstack(chunks))
