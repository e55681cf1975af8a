"""Client and server state machines and the federation loop.

Each client trains a local cGAN. After its discriminator update it publishes
the discriminator together with the noise batch it is about to use for its
generator update, then updates its generator with that batch. The server
keeps one twin generator per client, seeded identically, and applies the
same generator update to every message it receives. After every round it
samples its twin generators, mixes the synthetic data with its small real
"cloud" set and continues training the global classifier.

Seed derivation (``^`` is xor, all values unsigned 64-bit)::

    user seed        splitmix64(master ^ user_id)
    generator init   Rng(user seed)                  (the shared secret)
    discriminator    Rng(splitmix64(user seed ^ TAG_DISC))
    client sampling  Rng(splitmix64(user seed ^ TAG_CLIENT))
    everything else  Rng(splitmix64(master ^ TAG_*))
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import hashlib
import math
import struct

import numpy as np

from .attacker import attacker_init, evaluate_attack
from .channel import ChannelModel
from .classifier import accuracy, classifier_layers, train_classifier
from .data import LabeledDataset, SETUP1_CLASSES, load_idx, make_gaussian_mixture, make_glyphs, partition, \
    take_cloud_fraction
from .errors import ConfigurationError, DecodeError, DesyncError, ProtocolError
from .gan import CGanConfig, ConditionalGAN, generate, sample_noise, train_generator_step
from .metrics import MetricsRecord
from .nnkernel import Network, Rng, adam, arch_digest, derive_seed, splitmix64
from .nnkernel.rng import MASK64
from .wire import MpMessage, decode, encode

TAG_DISC = 0xD15C
TAG_CLIENT = 0xC11E
TAG_DATA = 0xDA7A
TAG_TEST = 0x7E57
TAG_SPLIT = 0x5B17
TAG_CLOUD = 0xC10D
TAG_SERVER = 0x5E4F
TAG_CLASSIFIER = 0xC1A5
TAG_JUDGE = 0x10D6
TAG_PROBE = 0x940B


def user_seed(master_seed, user_id):
    return splitmix64((int(master_seed) ^ int(user_id)) & MASK64)


class ClientState:
    """One local user: its shard, its cGAN, and its sampling stream."""

    def __init__(self, user_id, seed, cgan, shard, g_opt, d_opt, bias_range=0.0, classes=None):
        self.user_id = user_id
        self.seed = seed
        self.cgan = cgan
        self.shard = shard
        self.classes = tuple(sorted(classes if classes is not None else shard.classes))
        G = Network.initialize(cgan.gen_layers, Rng(seed), bias_range)
        D = Network.initialize(cgan.disc_layers, Rng(derive_seed(seed, TAG_DISC)))
        self.gan = ConditionalGAN(cgan, G, D, g_opt, d_opt)
        self.rng = Rng(derive_seed(seed, TAG_CLIENT))
        self.step = 0
        self.last_d_loss = None
        self.last_g_loss = None

    @property
    def G_u(self):
        return self.gan.G

    @property
    def D_u(self):
        return self.gan.D

    @property
    def steps_per_epoch(self):
        return math.ceil(len(self.shard) / self.cgan.batch_size)


def client_step(c, rng=None):
    """Discriminator update, publish, then generator update with the published noise.

    Returns ``(c, msg)``; ``c`` is advanced in place.
    """
    if c.gan is None or len(c.shard) == 0:
        raise ProtocolError(f"client {c.user_id} has no data or is not initialized")
    rng = c.rng if rng is None else rng
    c.last_d_loss = c.gan.discriminator_phase(rng, c.shard.samples, c.shard.labels, c.classes)
    noise = sample_noise(rng, c.cgan, c.classes)
    msg = MpMessage.build(c.user_id, c.step, c.gan.D.params, noise)
    c.last_g_loss = c.gan.generator_phase(noise)
    c.step += 1
    return c, msg


@dataclass
class _UserSlot:
    seed: int
    classes: tuple
    disc_digest: int
    G: Network
    opt: object
    next_step: int = 0
    steps_this_round: int = 0
    quota: int = None


class ServerState:
    """Twin generators (one per registered user) and the global classifier."""

    def __init__(self, cgan, g_opt_factory, bias_range=0.0):
        self.cgan = cgan
        self.g_opt_factory = g_opt_factory
        self.bias_range = bias_range
        self.users = {}
        self.C_l = None
        self.c_opt = None
        self.cloud = None
        self.round = 0

    def register(self, user_id, seed, classes, disc_digest=None, quota=None):
        if user_id in self.users:
            raise ProtocolError(f"user {user_id} registered twice")
        G = Network.initialize(self.cgan.gen_layers, Rng(seed), self.bias_range)
        digest = arch_digest(self.cgan.disc_layers) if disc_digest is None else disc_digest
        self.users[user_id] = _UserSlot(seed, tuple(sorted(classes)), digest, G, self.g_opt_factory(), quota=quota)

    def G_s(self, user_id):
        return self.users[user_id].G

    def generator_digests(self):
        return {uid: slot.G.params.digest() for uid, slot in sorted(self.users.items())}

    def init_classifier(self, net, opt, cloud, epochs, batch_size, rng):
        """Initial fit of the global classifier on the cloud data alone."""
        self.cloud = cloud
        self.C_l, self.c_opt = train_classifier(net, opt, cloud.samples, cloud.labels, epochs, batch_size, rng)


def server_ingest(s, msg):
    """Apply one generator update for ``msg.user_id``; validates before mutating."""
    slot = s.users.get(msg.user_id)
    if slot is None:
        raise ProtocolError(f"message from unregistered user {msg.user_id}")
    if msg.arch_digest != slot.disc_digest:
        raise ProtocolError(f"user {msg.user_id}: discriminator architecture differs from registration")
    if msg.step != slot.next_step:
        raise DesyncError(f"user {msg.user_id}: expected step {slot.next_step}, got {msg.step}")
    D = Network(msg.disc_params.layers, msg.disc_params)
    slot.G, slot.opt, _ = train_generator_step(slot.G, D, msg.noise, slot.opt)
    slot.next_step += 1
    slot.steps_this_round += 1
    return s


def synthetic_pool(s, per_user, rng):
    """``per_user`` labelled samples from every twin generator, users in id order."""
    xs, ys = [], []
    for uid in sorted(s.users):
        slot = s.users[uid]
        if per_user == 0 or not slot.classes:
            continue
        noise = sample_noise(rng, s.cgan, slot.classes, batch_size=per_user)
        xs.append(generate(slot.G, noise))
        ys.append(np.asarray(noise.labels))
    if not xs:
        return LabeledDataset(np.zeros((0, s.cgan.data_dim), np.float32), np.zeros(0, np.int64), s.cgan.num_classes)
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys), s.cgan.num_classes)


def server_round_update(s, cfg, rng, test=None):
    """Train the global classifier on cloud + synthetic data; returns ``(s, record)``."""
    for uid, slot in sorted(s.users.items()):
        if slot.quota is not None and slot.steps_this_round != slot.quota:
            raise ProtocolError(f"user {uid} contributed {slot.steps_this_round} of {slot.quota} steps this round")
    if s.C_l is None:
        raise ProtocolError("global classifier not initialized")
    pool = s.cloud.concat(synthetic_pool(s, cfg.synth_per_user, rng))
    s.C_l, s.c_opt = train_classifier(s.C_l, s.c_opt, pool.samples, pool.labels,
                                      cfg.classifier_epochs_per_round, cfg.classifier_batch, rng)
    for slot in s.users.values():
        slot.steps_this_round = 0
    s.round += 1
    acc = accuracy(s.C_l, test.samples, test.labels) if test is not None and len(test) else float("nan")
    return s, MetricsRecord(round=s.round, cl_accuracy=acc)


# ---------------------------------------------------------------------------
# Replay log

LOG_MAGIC = b"PSFL"
LOG_VERSION = 1
_RECORD = b"R"
_TRAILER = b"T"


class ReplayWriter:
    """Append-only log: header, one record per delivered message, trailer."""

    def __init__(self, path, cfg):
        self.fh = open(path, "wb")
        self.body = hashlib.sha256()
        text = cfg.to_text().encode()
        self._write(LOG_MAGIC + struct.pack("<HQ", LOG_VERSION, cfg.master_seed)
                    + cfg.digest() + struct.pack("<I", len(text)) + text)

    def _write(self, chunk):
        self.fh.write(chunk)
        self.body.update(chunk)

    def record(self, payload):
        self._write(_RECORD + struct.pack("<I", len(payload)) + payload)

    def close(self, server):
        digests = server.generator_digests()
        trailer = [_TRAILER, struct.pack("<I", len(digests))]
        for uid, digest in digests.items():
            trailer.append(struct.pack("<IQ", uid, server.users[uid].next_step) + bytes.fromhex(digest))
        trailer.append(self.body.digest())
        self.fh.write(b"".join(trailer))
        self.fh.close()


@dataclass
class ReplayLog:
    master_seed: int
    config_text: str
    records: list
    trailer: dict
    body_digest: bytes
    computed_body_digest: bytes


def read_replay_log(path):
    """Parse a replay log without decoding the message payloads."""
    from .config import from_text

    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise DecodeError(f"truncated replay log ({what})", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != LOG_MAGIC:
        raise DecodeError("not a replay log", 0)
    version, seed = struct.unpack("<HQ", take(10, "header"))
    if version != LOG_VERSION:
        raise DecodeError(f"unsupported replay log version {version}", 4)
    cfg_digest = take(32, "config digest")
    (n,) = struct.unpack("<I", take(4, "config length"))
    text = take(n, "config").decode("utf-8", errors="replace")
    if hashlib.sha256(text.encode()).digest() != cfg_digest:
        raise DecodeError("config digest mismatch", 14)
    from_text(text)  # validates
    records = []
    while True:
        tag = take(1, "record tag")
        if tag == _RECORD:
            (length,) = struct.unpack("<I", take(4, "record length"))
            records.append((pos, take(length, "record")))
        elif tag == _TRAILER:
            body_end = pos - 1
            break
        else:
            raise DecodeError(f"unknown record tag {tag!r}", pos - 1)
    (count,) = struct.unpack("<I", take(4, "trailer count"))
    trailer = {}
    for _ in range(count):
        uid, steps = struct.unpack("<IQ", take(12, "trailer entry"))
        trailer[uid] = (steps, take(16, "trailer digest").hex())
    body_digest = take(32, "body digest")
    if pos != len(buf):
        raise DecodeError("trailing bytes after trailer", pos)
    return ReplayLog(seed, text, records, trailer, body_digest, hashlib.sha256(buf[:body_end]).digest())


def replay(path):
    """Rebuild every twin generator from a replay log.

    Returns the rebuilt server. Raises :class:`DesyncError` on a step gap and
    :class:`ProtocolError` if the result does not match the log trailer.
    """
    from .config import from_text

    log = read_replay_log(path)
    if log.body_digest != log.computed_body_digest:
        raise ProtocolError("replay log body digest mismatch")
    cfg = from_text(log.config_text)
    fed = Federation(cfg)
    server = fed.server
    for offset, payload in log.records:
        msg, end = decode(payload)
        if end != len(payload):
            raise DecodeError("record length mismatch", offset)
        server_ingest(server, msg)
    rebuilt = {uid: (slot.next_step, slot.G.params.digest()) for uid, slot in sorted(server.users.items())}
    if rebuilt != log.trailer:
        raise ProtocolError("rebuilt generators do not match the log trailer")
    return server


# ---------------------------------------------------------------------------
# Full simulation


def build_dataset(spec, rng, test=False):
    per_class = spec.test_per_class if test else spec.per_class
    if spec.kind == "gaussian":
        return make_gaussian_mixture(spec.classes, per_class, spec.spread, rng)
    if spec.kind == "glyphs":
        return make_glyphs(spec.classes, per_class, rng, spec.glyph_noise, spec.glyph_shift)
    if test:
        if not spec.test_images:
            return LabeledDataset(np.zeros((0, 784), np.float32), np.zeros(0, np.int64), 10)
        return load_idx(spec.test_images, spec.test_labels)
    return load_idx(spec.images, spec.labels)


def cgan_config(cfg, data_dim, num_classes):
    g = cfg.gan
    return CGanConfig.build(g.z_dim, num_classes, data_dim, g.gen_hidden, g.disc_hidden, g.batch_size, g.d_steps)


@dataclass
class FederationResult:
    """Per-round metrics (the result is a sequence of them) plus run artefacts."""

    records: list
    attack_reports: list = field(default_factory=list)
    max_sync_diff: int = 0
    messages_per_user: dict = field(default_factory=dict)
    federation: object = None

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


class Federation:
    """Everything one run needs, built deterministically from a :class:`FederationConfig`.

    ``train`` and ``test`` replace the datasets described by ``cfg.data``;
    runs built that way cannot be replayed from their log alone.
    """

    def __init__(self, cfg, train=None, test=None):
        self.cfg = cfg
        master = cfg.master_seed
        self.train = build_dataset(cfg.data, Rng(derive_seed(master, TAG_DATA))) if train is None else train
        if test is None:
            test = build_dataset(cfg.data, Rng(derive_seed(master, TAG_TEST)), test=True) if train is None else \
                LabeledDataset(np.zeros((0, self.train.data_dim), np.float32), np.zeros(0, np.int64),
                               self.train.class_count)
        self.test = test
        self.cloud, rest = take_cloud_fraction(self.train, cfg.round.cloud_fraction,
                                               Rng(derive_seed(master, TAG_CLOUD)))
        self.shards = partition(rest, cfg.split, Rng(derive_seed(master ^ cfg.split.seed, TAG_SPLIT)))
        self.cgan = cgan_config(cfg, self.train.data_dim, self.train.class_count)
        g = cfg.gan
        self.g_opt = lambda: adam(g.g_lr, g.beta1, g.beta2)
        self.d_opt = lambda: adam(g.d_lr, g.beta1, g.beta2)
        bias = cfg.gen_bias_range
        self.server = ServerState(self.cgan, self.g_opt, bias)
        self.user_classes = self._user_classes()
        self.clients = []
        for uid in range(cfg.num_users):
            seed = user_seed(master, uid)
            client = ClientState(uid, seed, self.cgan, self.shards[uid], self.g_opt(), self.d_opt(), bias,
                                 self.user_classes[uid])
            self.clients.append(client)
            self.server.register(uid, seed, self.user_classes[uid], arch_digest(self.cgan.disc_layers),
                                 self.steps_for(client))
        self.channels = [ChannelModel(cfg.channel.kind, cfg.channel.bits, cfg.channel.clip)
                         for _ in range(cfg.num_users)]
        self.attackers = []
        for a in cfg.attackers:
            if not 0 <= a.user_id < cfg.num_users:
                raise ConfigurationError(f"attacker targets unknown user {a.user_id}")
            state = attacker_init(a, self.cgan.gen_layers, user_seed(master, a.user_id), self.g_opt(), bias)
            self.channels[a.user_id].attach(state)
            self.attackers.append(state)
        self.judge = None
        self.server_rng = Rng(derive_seed(master, TAG_SERVER))

    def _user_classes(self):
        split = self.cfg.split
        if split.kind in ("setup1", "custom"):
            return [tuple(sorted(c)) for c in (SETUP1_CLASSES if split.kind == "setup1" else split.assignment)]
        return [tuple(s.classes) for s in self.shards]

    def steps_for(self, client):
        n = self.cfg.round.steps_per_round
        if len(client.shard) == 0:
            return 0
        return n if n > 0 else client.steps_per_epoch

    def setup_classifier(self):
        r = self.cfg.round
        rng = Rng(derive_seed(self.cfg.master_seed, TAG_CLASSIFIER))
        net = Network.initialize(classifier_layers(self.cgan.data_dim, self.cgan.num_classes, r.classifier_hidden), rng)
        self.server.init_classifier(net, adam(r.classifier_lr), self.cloud, r.classifier_epochs_per_round,
                                    r.classifier_batch, self.server_rng)

    def setup_judge(self):
        r = self.cfg.round
        rng = Rng(derive_seed(self.cfg.master_seed, TAG_JUDGE))
        net = Network.initialize(classifier_layers(self.cgan.data_dim, self.cgan.num_classes, r.classifier_hidden), rng)
        self.judge, _ = train_classifier(net, adam(r.classifier_lr), self.train.samples, self.train.labels,
                                         r.judge_epochs, r.classifier_batch, rng)

    def run_user_round(self, client, writer_records, sync_diffs):
        channel = self.channels[client.user_id]
        for _ in range(self.steps_for(client)):
            _, msg = client_step(client)
            delivered = channel.transmit(msg)
            if writer_records is not None:
                writer_records.append(encode(delivered))
            server_ingest(self.server, delivered)
            if sync_diffs is not None:
                sync_diffs.append(client.G_u.params.bit_diff_count(self.server.G_s(client.user_id).params))

    def evaluate_attackers(self):
        reports = []
        for a in self.attackers:
            uid = a.cfg.user_id
            probe = sample_noise(Rng(derive_seed(self.cfg.master_seed, TAG_PROBE ^ (uid << 20))), self.cgan,
                                 self.user_classes[uid], batch_size=self.cfg.probe_size)
            reports.append(evaluate_attack(a, self.server.G_s(uid), probe, self.judge, self.user_classes[uid]))
        return reports

    def run(self, rounds=None, replay_path=None, check_sync=False, threads=1):
        rounds = self.cfg.rounds if rounds is None else rounds
        writer = None
        if replay_path is not None:
            writer = ReplayWriter(replay_path, self.cfg)
        self.setup_classifier()
        if self.attackers:
            self.setup_judge()
        records, reports, max_diff = [], [], 0
        try:
            for _ in range(rounds):
                buffers = [[] if writer else None for _ in self.clients]
                diffs = [[] if check_sync else None for _ in self.clients]
                jobs = list(zip(self.clients, buffers, diffs))
                if threads > 1:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        list(pool.map(lambda job: self.run_user_round(*job), jobs))
                else:
                    for job in jobs:
                        self.run_user_round(*job)
                if writer:
                    for buf in buffers:  # merged by (user_id, step)
                        for payload in buf:
                            writer.record(payload)
                if check_sync:
                    max_diff = max([max_diff] + [d for ds in diffs for d in ds])
                _, rec = server_round_update(self.server, self.cfg.round, self.server_rng, self.test)
                rec.bytes_cumulative = sum(ch.bytes_sent for ch in self.channels)
                if self.attackers:
                    reports = self.evaluate_attackers()
                    rec.attacker_acc = float(np.mean([r.attacker_acc for r in reports]))
                    rec.cloud_acc = float(np.mean([r.cloud_acc for r in reports]))
                    rec.nmse = float(np.mean([r.nmse for r in reports]))
                    rec.ssim = float(np.mean([r.ssim for r in reports]))
                    rec.param_distance = float(np.mean([r.param_l2 for r in reports]))
                records.append(rec)
        finally:
            if writer:
                writer.close(self.server)
        return FederationResult(records, reports, max_diff,
                                {c.user_id: c.step for c in self.clients}, self)


def run_federation(cfg, rounds=None, replay_path=None, check_sync=False, threads=1):
    """Simulate ``rounds`` communication rounds; see :class:`Federation`."""
    return Federation(cfg).run(rounds, replay_path, check_sync, threads)


def centralized_baseline(cfg, rounds=None):
    """Global classifier trained on all real training data with the server's schedule.

    Uses the same classifier init and server stream as :func:`run_federation`,
    so a run with ``cloud_fraction = 1`` and ``synth_per_user = 0`` matches it
    bit for bit.
    """
    rounds = cfg.rounds if rounds is None else rounds
    fed = Federation(cfg)
    fed.cloud = fed.train
    fed.setup_classifier()
    server = ServerState(fed.cgan, fed.g_opt)
    server.C_l, server.c_opt, server.cloud = fed.server.C_l, fed.server.c_opt, fed.train
    records = []
    for _ in range(rounds):
        _, rec = server_round_update(server, cfg.round, fed.server_rng, fed.test)
        records.append(rec)
    return records, server.C_l
