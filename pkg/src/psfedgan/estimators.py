"""Scikit-learn style front ends.

``FederatedGANClassifier.fit`` partitions ``(X, y)`` across simulated users,
runs the federation and keeps the server's global classifier for
``predict``. ``ConditionalGANSampler`` trains one local cGAN, the same way a
single user does, and draws labelled samples from it.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import FederationConfig, GanSpec, RoundConfig
from .data import LabeledDataset, SplitSpec
from .gan import CGanConfig, ConditionalGAN, generate, sample_noise
from .nnkernel import Network, Rng, adam, derive_seed, forward, softmax
from .protocol import TAG_CLIENT, TAG_DISC, Federation


def _check_unit_range(X):
    if X.size and (X.min() < -1.0 or X.max() > 1.0):
        raise ValueError("features must be scaled to [-1, 1] (generators end in tanh)")


class FederatedGANClassifier(ClassifierMixin, BaseEstimator):
    """Global classifier trained by discriminator-only federated cGAN sharing."""

    def __init__(self, n_users=10, split="split1", assignment=(), rounds=1, steps_per_round=0,
                 synth_per_user=100, cloud_fraction=0.01, z_dim=8, gen_hidden=(32, 32),
                 disc_hidden=(32, 32), batch_size=32, g_lr=1e-3, d_lr=1e-3, classifier_hidden=(32,),
                 classifier_epochs=1, threads=1, random_state=0):
        self.n_users = n_users
        self.split = split
        self.assignment = assignment
        self.rounds = rounds
        self.steps_per_round = steps_per_round
        self.synth_per_user = synth_per_user
        self.cloud_fraction = cloud_fraction
        self.z_dim = z_dim
        self.gen_hidden = gen_hidden
        self.disc_hidden = disc_hidden
        self.batch_size = batch_size
        self.g_lr = g_lr
        self.d_lr = d_lr
        self.classifier_hidden = classifier_hidden
        self.classifier_epochs = classifier_epochs
        self.threads = threads
        self.random_state = random_state

    def _config(self):
        return FederationConfig(
            master_seed=int(self.random_state),
            rounds=self.rounds,
            split=SplitSpec(self.split, self.n_users, tuple(self.assignment)),
            gan=GanSpec(z_dim=self.z_dim, gen_hidden=tuple(self.gen_hidden), disc_hidden=tuple(self.disc_hidden),
                        batch_size=self.batch_size, g_lr=self.g_lr, d_lr=self.d_lr),
            round=RoundConfig(steps_per_round=self.steps_per_round, synth_per_user=self.synth_per_user,
                              cloud_fraction=self.cloud_fraction, classifier_hidden=tuple(self.classifier_hidden),
                              classifier_epochs_per_round=self.classifier_epochs),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        _check_unit_range(X)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        self.n_features_in_ = X.shape[1]
        train = LabeledDataset(X, self._encoder.transform(y), len(self.classes_))
        self.federation_ = Federation(self._config(), train=train)
        self.history_ = list(self.federation_.run(threads=self.threads))
        self.network_ = self.federation_.server.C_l
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float32)
        return softmax(forward(self.network_, X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


class ConditionalGANSampler(BaseEstimator):
    """One local conditional GAN, seeded like a federation user with seed ``random_state``."""

    def __init__(self, z_dim=8, gen_hidden=(32, 32), disc_hidden=(32, 32), batch_size=32, steps=1000,
                 g_lr=1e-3, d_lr=1e-3, beta1=0.5, random_state=0):
        self.z_dim = z_dim
        self.gen_hidden = gen_hidden
        self.disc_hidden = disc_hidden
        self.batch_size = batch_size
        self.steps = steps
        self.g_lr = g_lr
        self.d_lr = d_lr
        self.beta1 = beta1
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        _check_unit_range(X)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        self.n_features_in_ = X.shape[1]
        labels = self._encoder.transform(y).astype(np.int64)
        cfg = CGanConfig.build(self.z_dim, len(self.classes_), X.shape[1], tuple(self.gen_hidden),
                               tuple(self.disc_hidden), self.batch_size)
        seed = int(self.random_state)
        G = Network.initialize(cfg.gen_layers, Rng(seed))
        D = Network.initialize(cfg.disc_layers, Rng(derive_seed(seed, TAG_DISC)))
        gan = ConditionalGAN(cfg, G, D, adam(self.g_lr, self.beta1), adam(self.d_lr, self.beta1))
        rng = Rng(derive_seed(seed, TAG_CLIENT))
        allowed = sorted(set(labels.tolist()))
        self.loss_curve_ = []
        for _ in range(self.steps):
            d_loss, g_loss, _ = gan.step(rng, X, labels, allowed)
            self.loss_curve_.append((d_loss, g_loss))
        self.cgan_config_ = cfg
        self.generator_ = gan.G
        self.discriminator_ = gan.D
        return self

    def sample(self, n_samples, labels=None, random_state=None):
        """Return ``(X, y)``: ``n_samples`` generated rows with the labels they were drawn for."""
        check_is_fitted(self, "generator_")
        if labels is None:
            allowed = range(len(self.classes_))
        else:
            allowed = self._encoder.transform(np.atleast_1d(labels))
        seed = self.random_state if random_state is None else random_state
        noise = sample_noise(Rng(int(seed)), self.cgan_config_, allowed, batch_size=int(n_samples))
        return generate(self.generator_, noise), self.classes_[noise.labels]
