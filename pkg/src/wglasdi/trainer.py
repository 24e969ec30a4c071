"""Joint training of the autoencoder and per-sample latent ODE coefficients.

The composite loss is

    L = L_AE + beta1 * L_zdot + beta2 * L_udot  (+ beta3 * sum_i ||Xi_i||^2 in weak modes)

where the dynamics terms are pointwise (``strong``) or integrated against test
functions (``weakTypeI`` / ``weakTypeII``).  Gradients are assembled by hand
from the tangent-aware network passes in :mod:`wglasdi.net`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import latentdi as di
from . import net
from .data import Dataset, DataSource, assemble
from .errors import ConfigError, TrainingError
from .interp import interp_coeffs

log = logging.getLogger(__name__)

LOSS_TERMS = ("total", "ae", "zdot", "udot", "reg")


@dataclass
class TrainConfig:
    mode: str = di.TYPE_I
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1e-5
    epochs: int = 20000
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n_up: int = 1000
    budget: int | None = None  # None: no greedy sampling
    k: int = 4
    n_ts: int = 50
    candidate_subsample: int | None = None
    indicator_threshold: float | None = None
    support_steps: int | None = None
    stride: int | None = None
    p: int = 4
    q: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.mode not in di.MODES:
            raise ConfigError(f"mode must be one of {di.MODES}, got {self.mode!r}")
        if min(self.beta1, self.beta2, self.beta3) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.n_up < 1:
            raise ConfigError("n_up must be >= 1")
        if self.k < 1 or self.n_ts < 1:
            raise ConfigError("k and n_ts must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SampleEvent:
    event: int
    epoch: int
    index: int
    mu: tuple[float, float]
    indicator: float


@dataclass
class TrainState:
    encoder: net.NetParams
    decoder: net.NetParams
    coeffs: list[np.ndarray]
    adam: net.AdamState
    epoch: int = 0
    loss_history: list[tuple] = field(default_factory=list)
    trace: list[SampleEvent] = field(default_factory=list)
    sampling_done: bool = False

    def trainable(self) -> list[np.ndarray]:
        return self.encoder.arrays() + self.decoder.arrays() + self.coeffs


def init_state(encoder_spec: net.NetSpec, library: di.LibrarySpec, n_samples: int,
               config: TrainConfig) -> TrainState:
    rng = np.random.default_rng(config.seed)
    enc = net.init_params(encoder_spec, rng)
    dec = net.init_params(encoder_spec.mirrored(), rng)
    n_z = encoder_spec.n_out
    coeffs = [np.zeros((library.n_features(n_z), n_z)) for _ in range(n_samples)]
    adam = net.AdamState(lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2,
                         eps=config.adam_eps)
    state = TrainState(enc, dec, coeffs, adam)
    adam.register(state.trainable())
    return state


class Trainer:
    """Owns the training data, the loss graph, and the optimisation state."""

    def __init__(self, dataset: Dataset, config: TrainConfig, encoder_spec: net.NetSpec,
                 library: di.LibrarySpec = di.LibrarySpec(), state: TrainState | None = None):
        if len(dataset) == 0:
            raise ConfigError("training needs a non-empty dataset")
        n_u = dataset.problem.n_dof(dataset.grid)
        if encoder_spec.n_in != n_u:
            raise ConfigError(f"encoder input width {encoder_spec.n_in} != field size {n_u}")
        self.dataset = dataset
        self.config = config
        self.encoder_spec = encoder_spec
        self.library = library
        self.testfns = None
        if config.mode != di.STRONG:
            self.testfns = di.build_test_functions(dataset.time.n_t, dataset.time.dt,
                                                   config.support_steps, config.stride,
                                                   config.p, config.q)
        self.state = state or init_state(encoder_spec, library, len(dataset), config)
        if len(self.state.coeffs) != len(dataset):
            raise ConfigError("state holds a different number of coefficient matrices "
                              "than the dataset has trajectories")
        self._refresh_data()

    def _refresh_data(self):
        self.U = np.stack([e.noisy for e in self.dataset.entries])
        if self.config.mode == di.STRONG:
            self.Udot = di.central_difference(self.U.transpose(1, 0, 2),
                                              self.dataset.time.dt).transpose(1, 0, 2)
        else:
            self.D = -np.einsum("kr,iru->iku", self.testfns.dphi_w, self.U)

    # --- loss -----------------------------------------------------------------------------------

    def loss(self, state: TrainState | None = None, need_grad: bool = True):
        """Return (total, breakdown dict, gradient list aligned with state.trainable())."""
        state = state or self.state
        if self.config.mode == di.STRONG:
            out = self._strong(state, need_grad)
        else:
            out = self._weak(state, need_grad)
        terms = out[0]
        for name, value in terms.items():
            if not np.isfinite(value):
                raise TrainingError(f"loss term {name!r} is not finite at epoch {state.epoch}")
        if need_grad:
            for g in out[1]:
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient at epoch {state.epoch}")
        return terms["total"], terms, out[1]

    def _strong(self, state, need_grad):
        cfg, lib = self.config, self.library
        n_mu, R, n_u = self.U.shape
        Xi = np.stack(state.coeffs)
        Uf = self.U.reshape(-1, n_u)
        Udf = self.Udot.reshape(-1, n_u)
        Z, Zdot, c_enc = net.forward_tangent(state.encoder, Uf, Udf)
        theta = di.build_library(Z, lib).reshape(n_mu, R, -1)
        F = np.einsum("irl,ilz->irz", theta, Xi).reshape(n_mu * R, -1)
        U_hat, Udot_hat, c_dec = net.forward_tangent(state.decoder, Z, F)
        c = 1.0 / (n_mu * R)
        e_ae = Uf - U_hat
        e_z = Zdot - F
        e_u = Udf - Udot_hat
        terms = {"ae": c * np.sum(e_ae ** 2), "zdot": c * np.sum(e_z ** 2),
                 "udot": c * np.sum(e_u ** 2), "reg": 0.0}
        terms["total"] = terms["ae"] + cfg.beta1 * terms["zdot"] + cfg.beta2 * terms["udot"]
        if not need_grad:
            return terms, None
        g_dec, gZ, gF = net.backward_tangent(state.decoder, c_dec, -2 * c * e_ae,
                                             -2 * c * cfg.beta2 * e_u)
        gF = gF - 2 * c * cfg.beta1 * e_z
        gF3 = gF.reshape(n_mu, R, -1)
        g_xi = np.einsum("irl,irz->ilz", theta, gF3)
        g_theta = np.einsum("irz,ilz->irl", gF3, Xi).reshape(n_mu * R, -1)
        gZ = gZ + di.library_vjp(Z, g_theta, lib)
        g_enc, _, _ = net.backward_tangent(state.encoder, c_enc, gZ, 2 * c * cfg.beta1 * e_z,
                                           need_input_grad=False)
        return terms, g_enc.arrays() + g_dec.arrays() + list(g_xi)

    def _weak(self, state, need_grad):
        cfg, lib, tf = self.config, self.library, self.testfns
        n_mu, R, n_u = self.U.shape
        K = len(tf)
        Xi = np.stack(state.coeffs)
        Uf = self.U.reshape(-1, n_u)
        Z, _, c_enc = net.forward_tangent(state.encoder, Uf)
        n_z = Z.shape[1]
        theta = di.build_library(Z, lib).reshape(n_mu, R, -1)
        G = np.einsum("kr,irl->ikl", tf.phi_w, theta)
        rhs = np.einsum("ikl,ilz->ikz", G, Xi)
        U_hat, _, c_dec = net.forward_tangent(state.decoder, Z)
        Z3 = Z.reshape(n_mu, R, n_z)
        ctr = tf.centers

        if cfg.mode == di.TYPE_I:
            Uc = self.U[:, ctr].reshape(-1, n_u)
            _, lhs, c_encc = net.forward_tangent(state.encoder, Uc, self.D.reshape(-1, n_u))
            lhs = lhs.reshape(n_mu, K, n_z)
            Zc = Z3[:, ctr].reshape(-1, n_z)
            _, model, c_decc = net.forward_tangent(state.decoder, Zc, rhs.reshape(-1, n_z))
            model = model.reshape(n_mu, K, n_u)
        else:
            lhs = -np.einsum("kr,irz->ikz", tf.dphi_w, Z3)
            model = -np.einsum("kr,iru->iku", tf.dphi_w, U_hat.reshape(n_mu, R, n_u))
        r_z = lhs - rhs
        r_u = self.D - model

        c = 1.0 / (n_mu * R)
        cw = 1.0 / (n_mu * K)
        e_ae = Uf - U_hat
        terms = {"ae": c * np.sum(e_ae ** 2), "zdot": cw * np.sum(r_z ** 2),
                 "udot": cw * np.sum(r_u ** 2), "reg": float(np.sum(Xi ** 2))}
        terms["total"] = (terms["ae"] + cfg.beta1 * terms["zdot"] + cfg.beta2 * terms["udot"]
                          + cfg.beta3 * terms["reg"])
        if not need_grad:
            return terms, None

        g_lhs = 2 * cw * cfg.beta1 * r_z
        g_rhs = -g_lhs
        g_model = -2 * cw * cfg.beta2 * r_u
        gU_hat = -2 * c * e_ae
        gZ = np.zeros_like(Z)
        g_enc_extra = g_dec_extra = None
        if cfg.mode == di.TYPE_I:
            g_enc_extra, _, _ = net.backward_tangent(state.encoder, c_encc, None,
                                                     g_lhs.reshape(-1, n_z),
                                                     need_input_grad=False)
            g_dec_extra, _, g_tan = net.backward_tangent(state.decoder, c_decc, None,
                                                         g_model.reshape(-1, n_u))
            g_rhs = g_rhs + g_tan.reshape(n_mu, K, n_z)
        else:
            gZ += -np.einsum("kr,ikz->irz", tf.dphi_w, g_lhs).reshape(-1, n_z)
            gU_hat = gU_hat - np.einsum("kr,iku->iru", tf.dphi_w, g_model).reshape(-1, n_u)

        g_xi = np.einsum("ikl,ikz->ilz", G, g_rhs) + 2 * cfg.beta3 * Xi
        gG = np.einsum("ikz,ilz->ikl", g_rhs, Xi)
        g_theta = np.einsum("kr,ikl->irl", tf.phi_w, gG).reshape(n_mu * R, -1)
        gZ += di.library_vjp(Z, g_theta, lib)
        g_dec, gZ_dec, _ = net.backward_tangent(state.decoder, c_dec, gU_hat)
        gZ += gZ_dec
        g_enc, _, _ = net.backward_tangent(state.encoder, c_enc, gZ, need_input_grad=False)
        g_enc = g_enc.arrays()
        g_dec = g_dec.arrays()
        if g_enc_extra is not None:
            g_enc = [a + b for a, b in zip(g_enc, g_enc_extra.arrays())]
            g_dec = [a + b for a, b in zip(g_dec, g_dec_extra.arrays())]
        return terms, g_enc + g_dec + list(g_xi)

    # --- optimisation ---------------------------------------------------------------------------

    def step(self) -> dict:
        st = self.state
        total, terms, grads = self.loss(st)
        if total > 1e12:
            raise TrainingError(f"training diverged at epoch {st.epoch} (loss {total:.3e})")
        net.adam_step(st.trainable(), grads, st.adam)
        st.epoch += 1
        st.loss_history.append((st.epoch,) + tuple(float(terms[k]) for k in LOSS_TERMS))
        return terms

    def add_entry(self, entry) -> None:
        """Append a trajectory; its coefficients start from k-NN interpolation."""
        st = self.state
        xi = interp_coeffs(entry.mu, self.dataset.mus, st.coeffs, self.config.k,
                           self._scales())
        self.dataset.entries.append(entry)
        st.coeffs.append(xi)
        st.adam.register([xi])
        self._refresh_data()

    def _scales(self):
        sp = self.dataset.space
        return None if sp is None else sp.scales

    def model(self):
        from .rom import RomModel
        st = self.state
        return RomModel(encoder=st.encoder, decoder=st.decoder, mus=self.dataset.mus,
                        coeffs=list(st.coeffs), library=self.library, problem=self.dataset.problem,
                        grid=self.dataset.grid, time=self.dataset.time, k=self.config.k,
                        scales=self._scales(), indices=self.dataset.indices)

    def greedy_due(self) -> bool:
        cfg = self.config
        budget = cfg.budget if cfg.budget is not None else len(self.dataset)
        if self.state.sampling_done or len(self.dataset) >= budget:
            return False
        return self.state.epoch % cfg.n_up == 0

    def candidates(self) -> list[int]:
        space = self.dataset.space
        taken = set(self.dataset.indices)
        cand = [i for i in range(space.size) if i not in taken]
        m = self.config.candidate_subsample
        if m is not None and m < len(cand):
            rng = np.random.default_rng([self.config.seed, len(self.state.trace), 7])
            cand = sorted(rng.choice(cand, size=m, replace=False).tolist())
        return cand

    def sample(self, source: DataSource) -> SampleEvent | None:
        """Evaluate the residual indicator on all candidates and add the worst one."""
        from .rom import error_indicator
        cand = self.candidates()
        if not cand:
            self.state.sampling_done = True
            return None
        model = self.model()
        space = self.dataset.space
        values = [error_indicator(model, space.point(i), self.config.n_ts) for i in cand]
        best = int(np.argmax(values))
        threshold = self.config.indicator_threshold
        if threshold is not None and values[best] < threshold:
            self.state.sampling_done = True
            return None
        index = cand[best]
        entry = source.make_entry(index)
        ev = SampleEvent(event=len(self.state.trace) + 1, epoch=self.state.epoch, index=index,
                         mu=tuple(float(v) for v in entry.mu), indicator=float(values[best]))
        self.add_entry(entry)
        self.state.trace.append(ev)
        log.info("greedy event %d at epoch %d: added mu=%s (e_res=%.3e)",
                 ev.event, ev.epoch, ev.mu, ev.indicator)
        return ev

    def run(self, source: DataSource | None = None, epochs: int | None = None,
            callback=None, log_every: int = 0):
        """Train up to ``epochs`` total epochs (default: config.epochs).

        With a ``source`` the greedy sampler fires every ``n_up`` epochs until
        the sample budget is reached.
        """
        target = self.config.epochs if epochs is None else epochs
        while self.state.epoch < target:
            terms = self.step()
            if log_every and self.state.epoch % log_every == 0:
                log.info("epoch %d loss %.4e (ae %.3e zdot %.3e udot %.3e)", self.state.epoch,
                         terms["total"], terms["ae"], terms["zdot"], terms["udot"])
            if source is not None and self.greedy_due():
                self.sample(source)
            if callback is not None:
                callback(self)
        return self.model()


def train(dataset: Dataset, config: TrainConfig, encoder_spec: net.NetSpec,
          library: di.LibrarySpec = di.LibrarySpec()):
    """Fixed-sample training; returns the RomModel."""
    trainer = Trainer(dataset, config, encoder_spec, library)
    return trainer.run()


def greedy_loop(source: DataSource, initial_indices, config: TrainConfig,
                encoder_spec: net.NetSpec, library: di.LibrarySpec = di.LibrarySpec(),
                callback=None, log_every: int = 0):
    """Train with greedy sampling; returns (RomModel, sampling trace, trainer)."""
    if not initial_indices:
        raise ConfigError("greedy sampling needs at least one initial sample")
    if config.budget is not None and config.budget < len(initial_indices):
        raise ConfigError("sample budget is smaller than the initial sample count")
    dataset = assemble(source, initial_indices)
    trainer = Trainer(dataset, config, encoder_spec, library)
    model = trainer.run(source, callback=callback, log_every=log_every)
    return model, list(trainer.state.trace), trainer
