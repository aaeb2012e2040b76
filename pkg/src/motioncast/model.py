"""Motion prediction network: three-stream GRU encoder, multi-head
self-attention fusion, continuous + categorical latent heads, and an
autoregressive decoder with attention, GRU and a structured prediction
layer that emits joints in parent-before-child order along the skeleton.

All forward functions take row-major batched tensors: hidden states are
(B, d_h), poses are (B, N) with N = joints * dims. Unbatched (tau, N)
inputs to the sequence-level entry points are promoted to batch size 1.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import streams_from_positions
from .errors import CheckpointError, ConfigError
from .skeleton import SkeletonTree, default_skeleton

GROUPS = ("encoder", "latent", "decoder", "discriminators")

_DEFAULT_PARENTS = default_skeleton().parents


@dataclass(frozen=True)
class Hyper:
    """Architecture sizes plus the skeleton parent links (self-describing)."""

    joints: int = 20
    dims: int = 3
    hidden: int = 64
    latent: int = 32
    categories: int = 27
    heads: int = 4
    spl_hidden: int = 16
    disc_hidden: int = 32
    residual: bool = False
    parents: tuple = _DEFAULT_PARENTS

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if self.hidden % self.heads != 0:
            raise ConfigError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if len(self.parents) != self.joints:
            raise ConfigError(
                f"parents length {len(self.parents)} != joints {self.joints}"
            )
        for name in ("joints", "dims", "hidden", "latent", "categories", "heads",
                     "spl_hidden", "disc_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"hyper field {name} must be >= 1")

    @property
    def n_pose(self):
        return self.joints * self.dims

    @property
    def head_dim(self):
        return self.hidden // self.heads

    def to_dict(self):
        return {
            "joints": self.joints,
            "dims": self.dims,
            "hidden": self.hidden,
            "latent": self.latent,
            "categories": self.categories,
            "heads": self.heads,
            "spl_hidden": self.spl_hidden,
            "disc_hidden": self.disc_hidden,
            "residual": self.residual,
            "parents": list(self.parents),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["parents"] = tuple(d["parents"])
        return cls(**d)


def _gru_shapes(prefix, d_in, d_h):
    shapes = {}
    for gate in ("r", "u", "n"):
        shapes[f"{prefix}.W{gate}"] = (d_in, d_h)
        shapes[f"{prefix}.U{gate}"] = (d_h, d_h)
        shapes[f"{prefix}.b{gate}"] = (d_h,)
    return shapes


def _attention_shapes(prefix, hyper):
    d_h, d_k = hyper.hidden, hyper.head_dim
    shapes = {}
    for h in range(hyper.heads):
        shapes[f"{prefix}.h{h}.Wq"] = (d_h, d_k)
        shapes[f"{prefix}.h{h}.Wk"] = (d_h, d_k)
        shapes[f"{prefix}.h{h}.Wv"] = (d_h, d_k)
    shapes[f"{prefix}.Wo"] = (d_h, d_h)
    shapes[f"{prefix}.bo"] = (d_h,)
    shapes[f"{prefix}.Wf"] = (3 * d_h, d_h)
    shapes[f"{prefix}.bf"] = (d_h,)
    return shapes


def param_shapes(hyper):
    """Ordered {name: shape} map of every trainable tensor."""
    n = hyper.n_pose
    shapes = {}
    for stream in ("pos", "vel", "acc"):
        shapes.update(_gru_shapes(f"encoder.gru_{stream}", n, hyper.hidden))
    shapes.update(_attention_shapes("encoder.att", hyper))
    shapes["latent.Wz"] = (hyper.hidden, hyper.latent)
    shapes["latent.bz"] = (hyper.latent,)
    shapes["latent.Wc"] = (hyper.hidden, hyper.categories)
    shapes["latent.bc"] = (hyper.categories,)
    shapes["decoder.proj_z.W"] = (hyper.latent, hyper.hidden)
    shapes["decoder.proj_z.b"] = (hyper.hidden,)
    shapes["decoder.proj_c.W"] = (hyper.categories, hyper.hidden)
    shapes["decoder.proj_c.b"] = (hyper.hidden,)
    shapes["decoder.proj_h.W"] = (hyper.hidden, hyper.hidden)
    shapes["decoder.proj_h.b"] = (hyper.hidden,)
    shapes.update(_attention_shapes("decoder.att", hyper))
    shapes["decoder.ctx.W"] = (hyper.hidden, hyper.hidden)
    shapes["decoder.ctx.b"] = (hyper.hidden,)
    shapes.update(_gru_shapes("decoder.gru", n, hyper.hidden))
    for j, parent in enumerate(hyper.parents):
        d_in = hyper.hidden + (0 if parent == -1 else hyper.dims)
        shapes[f"decoder.spl.j{j:02d}.W1"] = (d_in, hyper.spl_hidden)
        shapes[f"decoder.spl.j{j:02d}.b1"] = (hyper.spl_hidden,)
        shapes[f"decoder.spl.j{j:02d}.W2"] = (hyper.spl_hidden, hyper.dims)
        shapes[f"decoder.spl.j{j:02d}.b2"] = (hyper.dims,)
    shapes["discriminators.dz.W1"] = (hyper.latent, hyper.disc_hidden)
    shapes["discriminators.dz.b1"] = (hyper.disc_hidden,)
    shapes["discriminators.dz.W2"] = (hyper.disc_hidden, 1)
    shapes["discriminators.dz.b2"] = (1,)
    shapes["discriminators.dc.W1"] = (hyper.categories, hyper.disc_hidden)
    shapes["discriminators.dc.b1"] = (hyper.disc_hidden,)
    shapes["discriminators.dc.W2"] = (hyper.disc_hidden, 1)
    shapes["discriminators.dc.b2"] = (1,)
    return shapes


class ModelParams:
    """Named parameter store partitioned into the four trainable groups."""

    def __init__(self, hyper, store):
        self.hyper = hyper
        self._store = dict(store)
        for name in self._store:
            if self.group_of(name) not in GROUPS:
                raise ConfigError(f"parameter {name} outside known groups {GROUPS}")
        self._tree = SkeletonTree(hyper.parents)

    @staticmethod
    def group_of(name):
        return name.split(".", 1)[0]

    @classmethod
    def init(cls, hyper, seed=0):
        """Seeded init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
        rng = np.random.default_rng([int(seed), 7])
        store = {}
        for name, shape in param_shapes(hyper).items():
            if len(shape) == 2:
                bound = 1.0 / np.sqrt(shape[0])
                data = rng.uniform(-bound, bound, size=shape)
            else:
                data = np.zeros(shape)
            store[name] = Tensor(data, requires_grad=True)
        return cls(hyper, store)

    @property
    def tree(self):
        return self._tree

    def __getitem__(self, name):
        return self._store[name]

    def __setitem__(self, name, tensor):
        old = self._store[name]
        if tensor.shape != old.shape:
            raise ConfigError(
                f"replacing {name}: shape {tensor.shape} != expected {old.shape}"
            )
        self._store[name] = tensor

    def __contains__(self, name):
        return name in self._store

    def names(self, group=None):
        if group is None:
            return list(self._store)
        return [n for n in self._store if self.group_of(n) == group]

    def tensors(self, group=None):
        return [self._store[n] for n in self.names(group)]

    def as_dict(self, groups=None):
        if groups is None:
            return dict(self._store)
        wanted = set(groups)
        return {n: t for n, t in self._store.items() if self.group_of(n) in wanted}

    def zero_grad(self):
        for t in self._store.values():
            t.grad = None

    def copy(self):
        return ModelParams(
            self.hyper,
            {n: Tensor(t.data.copy(), requires_grad=True) for n, t in self._store.items()},
        )

    def group_digest(self, group):
        """SHA-256 over the serialized tensors of one group (name+shape+bytes)."""
        import hashlib

        digest = hashlib.sha256()
        for name in self.names(group):
            t = self._store[name]
            digest.update(name.encode())
            digest.update(str(t.shape).encode())
            digest.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass
class LatentState:
    """Continuous summary z and categorical simplex vector c, both (B, d)."""

    z: Tensor
    c: Tensor


@dataclass
class EncoderState:
    h_pos: Tensor
    h_vel: Tensor
    h_acc: Tensor
    h_att: Tensor


def gru_step(h_prev, x, params, prefix):
    """One gated-recurrent-unit step: h_prev, x are (B, d) tensors.

    r = sigma(x Wr + h Ur + br), u = sigma(x Wu + h Uu + bu),
    n = tanh(x Wn + (r * h) Un + bn), h' = (1 - u) * n + u * h.
    """
    r = ad.sigmoid(x @ params[f"{prefix}.Wr"] + h_prev @ params[f"{prefix}.Ur"] + params[f"{prefix}.br"])
    u = ad.sigmoid(x @ params[f"{prefix}.Wu"] + h_prev @ params[f"{prefix}.Uu"] + params[f"{prefix}.bu"])
    n = ad.tanh(x @ params[f"{prefix}.Wn"] + (r * h_prev) @ params[f"{prefix}.Un"] + params[f"{prefix}.bn"])
    return (1.0 - u) * n + u * h_prev


def multihead_attention(tokens, params, prefix, sink=None):
    """Scaled dot-product self-attention over a small token set.

    Per head: softmax(q k^T / sqrt(d_k)) v with learned projections; heads are
    concatenated and output-projected per token, then the attended tokens are
    flattened and projected to a single (B, d_h) vector. ``sink`` collects the
    (B, n_tokens) attention rows of every head/query for inspection.
    """
    hyper = params.hyper
    scale = 1.0 / np.sqrt(hyper.head_dim)
    n_tok = len(tokens)
    per_token = [[] for _ in range(n_tok)]
    for h in range(hyper.heads):
        wq, wk, wv = (params[f"{prefix}.h{h}.W{m}"] for m in ("q", "k", "v"))
        q = [tok @ wq for tok in tokens]
        k = [tok @ wk for tok in tokens]
        v = [tok @ wv for tok in tokens]
        for i in range(n_tok):
            scores = [
                (q[i] * k[j]).sum(axis=1, keepdims=True) * scale for j in range(n_tok)
            ]
            w = ad.softmax(ad.concat(scores, axis=1), axis=1)
            if sink is not None:
                sink.append(w.data)
            att = w[:, 0:1] * v[0]
            for j in range(1, n_tok):
                att = att + w[:, j : j + 1] * v[j]
            per_token[i].append(att)
    attended = [
        ad.concat(heads, axis=1) @ params[f"{prefix}.Wo"] + params[f"{prefix}.bo"]
        for heads in per_token
    ]
    return ad.concat(attended, axis=1) @ params[f"{prefix}.Wf"] + params[f"{prefix}.bf"]


def attention_fuse(h_pos, h_vel, h_acc, params, sink=None):
    """Fuse the three stream states into one (B, d_h) vector."""
    return multihead_attention([h_pos, h_vel, h_acc], params, "encoder.att", sink)


def latent_heads(h_att, params):
    """Latent summary of a fused state: linear z, softmax simplex c."""
    z = h_att @ params["latent.Wz"] + params["latent.bz"]
    c = ad.softmax(h_att @ params["latent.Wc"] + params["latent.bc"], axis=1)
    return LatentState(z=z, c=c)


def _batched(arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None, :, :], True
    if arr.ndim == 3:
        return arr, False
    raise ConfigError(f"expected (tau, N) or (B, tau, N), got shape {arr.shape}")


def encode(streams, params, sink=None):
    """Run the three stream GRUs over t = 1..tau with per-step attention
    fusion; the latent state comes from the final fused vector.

    Returns (list of per-step EncoderState, LatentState).
    """
    pos, _ = _batched(streams.position)
    vel, _ = _batched(streams.velocity)
    acc, _ = _batched(streams.acceleration)
    if pos.shape != vel.shape or pos.shape != acc.shape:
        raise ConfigError("stream arrays must share one shape")
    batch, tau, _ = pos.shape
    h_pos = Tensor(np.zeros((batch, params.hyper.hidden)))
    h_vel = Tensor(np.zeros((batch, params.hyper.hidden)))
    h_acc = Tensor(np.zeros((batch, params.hyper.hidden)))
    trajectory = []
    for t in range(tau):
        h_pos = gru_step(h_pos, Tensor(pos[:, t, :]), params, "encoder.gru_pos")
        h_vel = gru_step(h_vel, Tensor(vel[:, t, :]), params, "encoder.gru_vel")
        h_acc = gru_step(h_acc, Tensor(acc[:, t, :]), params, "encoder.gru_acc")
        h_att = attention_fuse(h_pos, h_vel, h_acc, params, sink)
        trajectory.append(EncoderState(h_pos, h_vel, h_acc, h_att))
    return trajectory, latent_heads(trajectory[-1].h_att, params)


def spl_forward(h_dec, params, tree=None):
    """Structured prediction: per-joint two-layer perceptrons applied in
    parent-before-child order; children additionally see their parent's
    predicted coordinates. Returns the assembled (B, N) pose."""
    tree = tree if tree is not None else params.tree
    preds = {}
    for j in tree.topo_order():
        prefix = f"decoder.spl.j{j:02d}"
        parent = tree.parents[j]
        inp = h_dec if parent == -1 else ad.concat([h_dec, preds[parent]], axis=1)
        hidden = ad.tanh(inp @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"])
        preds[j] = hidden @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]
    return ad.concat([preds[j] for j in range(tree.n_joints)], axis=1)


def decode_step(S_prev, h_dec_prev, latent, params, sink=None):
    """One autoregressive decoder step.

    The latent pair and previous decoder state are projected to a common
    width and attended over; the attention output modulates the recurrent
    state (learned projection summed into h_dec_prev) while the previous
    pose is the GRU input. The new hidden state feeds the structured
    prediction layer. Returns (S_next, h_dec).
    """
    u_z = latent.z @ params["decoder.proj_z.W"] + params["decoder.proj_z.b"]
    u_c = latent.c @ params["decoder.proj_c.W"] + params["decoder.proj_c.b"]
    u_h = h_dec_prev @ params["decoder.proj_h.W"] + params["decoder.proj_h.b"]
    p_att = multihead_attention([u_z, u_c, u_h], params, "decoder.att", sink)
    h_state = h_dec_prev + (p_att @ params["decoder.ctx.W"] + params["decoder.ctx.b"])
    h_dec = gru_step(h_state, S_prev, params, "decoder.gru")
    pose = spl_forward(h_dec, params)
    if params.hyper.residual:
        pose = pose + S_prev
    return pose, h_dec


def rollout(params, observed, horizon, teacher=None, tf_ratio=0.0, rng=None, sink=None):
    """Encode an observation batch and decode ``horizon`` steps.

    The latent state is computed once at t = tau and held fixed. Decoding
    seeds from the last observed pose with a zero initial decoder state.
    ``teacher``/``tf_ratio`` optionally feed ground-truth poses back in
    during training (never in evaluation). Returns (list of (B, N) pose
    tensors, LatentState).
    """
    obs, _ = _batched(observed)
    batch = obs.shape[0]
    streams = streams_from_positions(obs)
    _, latent = encode(streams, params, sink)
    s_cur = Tensor(obs[:, -1, :])
    h_dec = Tensor(np.zeros((batch, params.hyper.hidden)))
    preds = []
    for k in range(horizon):
        s_next, h_dec = decode_step(s_cur, h_dec, latent, params, sink)
        preds.append(s_next)
        if teacher is not None and tf_ratio > 0.0 and rng is not None and rng.random() < tf_ratio:
            s_cur = Tensor(np.asarray(teacher)[:, k, :])
        else:
            s_cur = s_next
    return preds, latent


def predict_sequence(observed, params, horizon):
    """Autoregressive prediction as a plain array.

    (tau, N) input yields (horizon, N); (B, tau, N) yields (B, horizon, N).
    horizon = 0 yields an empty prediction.
    """
    obs, squeeze = _batched(observed)
    if horizon == 0:
        out = np.zeros((obs.shape[0], 0, obs.shape[2]))
        return out[0] if squeeze else out
    with ad.no_grad():
        preds, _ = rollout(params, obs, horizon)
    out = np.stack([p.data for p in preds], axis=1)
    return out[0] if squeeze else out


def save_checkpoint(path, params, stats=None):
    """Write the self-describing JSON container (hyper + groups + stats)."""
    groups = {g: {} for g in GROUPS}
    for name in params.names():
        group, rest = name.split(".", 1)
        t = params[name]
        groups[group][rest] = {"shape": list(t.shape), "data": t.data.ravel().tolist()}
    payload = {
        "format": "motioncast.checkpoint",
        "version": 1,
        "hyper": params.hyper.to_dict(),
        "stats": stats.to_dict() if stats is not None else None,
        "groups": groups,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_checkpoint(path):
    """Load and validate a checkpoint; returns (ModelParams, Stats or None)."""
    from .data import Stats

    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"not a valid checkpoint: {exc}") from None
    if payload.get("format") != "motioncast.checkpoint":
        raise CheckpointError("missing checkpoint format marker")
    if payload.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    try:
        hyper = Hyper.from_dict(payload["hyper"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"bad hyper block: {exc}") from None
    expected = param_shapes(hyper)
    groups = payload.get("groups", {})
    for group in groups:
        if group not in GROUPS:
            raise CheckpointError(f"unknown parameter group {group!r}")
    store = {}
    for group in GROUPS:
        for rest, entry in groups.get(group, {}).items():
            name = f"{group}.{rest}"
            if name not in expected:
                raise CheckpointError(f"unexpected parameter {name}")
            shape = tuple(entry["shape"])
            if shape != expected[name]:
                raise CheckpointError(
                    f"{name}: shape {shape} inconsistent with hyper (wants {expected[name]})"
                )
            data = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
            store[name] = Tensor(data, requires_grad=True)
    missing = [n for n in expected if n not in store]
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {missing[:3]}...")
    stats = Stats.from_dict(payload["stats"]) if payload.get("stats") else None
    return ModelParams(hyper, store), stats
