"""End-to-end model: forward pass, loss, training loop, checkpoints.

The prediction for a (user, anchor) pair is
``sigmoid(mlp([y_e, y_i, y_a]))`` over the three interaction signals.
Ablation variants replace one signal with a zero vector
(``no_item_aspect`` / ``no_anchor_aspect``) or run the item-aspect
attention over co-retrieved histories only (``with_co_retrieval``, both
in training and inference).

Training is plain mini-batch gradient descent with a geometric per-epoch
learning-rate decay, dense L2 on every parameter, global-norm gradient
clipping at 10, and inverted dropout on the MLP input.  Everything is
deterministic given the seed; see `liverec.seeding` for the stream split.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import Catalog, LabeledPair
from .encoders import (
    EncodedSequence,
    LstmParams,
    PnnEncoderParams,
    active_positions,
    encode_sequence,
    encode_sequences_batched,
    field_offsets,
    init_lstm_params,
    init_pnn_params,
    pnn_encode,
    pnn_encode_batch,
    stack_states,
)
from .interaction import (
    AttentionParams,
    InteractionStats,
    anchor_aspect_interaction,
    embed_similarity,
    item_aspect_interaction,
    svdpp_similarity,
)
from .metrics import EvalReport, make_report
from .retrieval import co_retrieve
from .seeding import stream_rng

VARIANTS = ("full", "no_item_aspect", "no_anchor_aspect", "with_co_retrieval")

CHECKPOINT_FORMAT = "liverec-checkpoint"
CHECKPOINT_VERSION = 1

GRAD_CLIP_NORM = 10.0
PRED_CLAMP = 1e-7


class UnknownIdError(KeyError):
    """A user or anchor id does not resolve in the catalog."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; names the offending batch."""

    def __init__(self, batch_index: int):
        self.batch_index = batch_index
        super().__init__(f"non-finite loss in batch {batch_index}; aborting")


class CheckpointError(ValueError):
    """Checkpoint file is unreadable or from an incompatible version."""


@dataclass
class TrainConfig:
    variant: str = "full"
    lr_start: float = 1e-2
    lr_end: float = 1e-6
    batch_size: int = 2000
    l2_weight: float = 4e-4
    dropout: float = 0.5  # drop probability on the MLP input concatenation
    dim: int = 64
    co_retrieval_k: int = 10
    epochs: int = 10
    seed: int = 0
    literal_eq4_product: bool = False
    optimizer: str = "sgd"
    svdpp_head: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must not exceed lr_start")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass
class MlpParams:
    w1: object  # (d, 3d)
    b1: object  # (d,)
    w2: object  # (d,)
    b2: object  # ()


@dataclass
class ModelParams:
    dim: int
    offsets: dict  # kind -> one-hot layout offsets
    pnn: PnnEncoderParams
    lstm: LstmParams
    attn: AttentionParams
    mlp: MlpParams

    def named_arrays(self):
        """Every trainable array exactly once, in a fixed order."""
        out = [
            ("pnn.user", self.pnn.user),
            ("pnn.anchor", self.pnn.anchor),
            ("pnn.item", self.pnn.item),
        ]
        for name in ("wi", "wf", "wo", "wc", "ui", "uf", "uo", "uc", "bi", "bf", "bo", "bc"):
            out.append((f"lstm.{name}", getattr(self.lstm, name)))
        out += [
            ("attn.item_w", self.attn.item_w),
            ("attn.item_b", self.attn.item_b),
            ("attn.anchor_w", self.attn.anchor_w),
            ("attn.anchor_b", self.attn.anchor_b),
            ("mlp.w1", self.mlp.w1),
            ("mlp.b1", self.mlp.b1),
            ("mlp.w2", self.mlp.w2),
            ("mlp.b2", self.mlp.b2),
        ]
        return out

    def bind(self, tape: Tape):
        """Watch every array on a tape; returns (bound params, leaf tensors)."""
        tensors = {name: tape.watch(arr) for name, arr in self.named_arrays()}
        bound = _params_from_arrays(self.dim, self.offsets, tensors)
        leaves = [tensors[name] for name, _ in self.named_arrays()]
        return bound, leaves


def _params_from_arrays(dim: int, offsets: dict, arrays: dict) -> ModelParams:
    lstm = LstmParams(*[arrays[f"lstm.{n}"] for n in ("wi", "wf", "wo", "wc", "ui", "uf", "uo", "uc", "bi", "bf", "bo", "bc")])
    return ModelParams(
        dim=dim,
        offsets=offsets,
        pnn=PnnEncoderParams(arrays["pnn.user"], arrays["pnn.anchor"], arrays["pnn.item"]),
        lstm=lstm,
        attn=AttentionParams(
            arrays["attn.item_w"], arrays["attn.item_b"], arrays["attn.anchor_w"], arrays["attn.anchor_b"]
        ),
        mlp=MlpParams(arrays["mlp.w1"], arrays["mlp.b1"], arrays["mlp.w2"], arrays["mlp.b2"]),
    )


def init_model_params(catalog: Catalog, config: TrainConfig, rng: np.random.Generator) -> ModelParams:
    d = config.dim
    bound = 1.0 / np.sqrt(d)
    pnn = init_pnn_params(catalog, d, rng)
    lstm = init_lstm_params(d, rng)
    attn = AttentionParams(
        item_w=rng.uniform(-bound, bound, size=4 * d),
        item_b=np.zeros(()),
        anchor_w=rng.uniform(-bound, bound, size=3 * d),
        anchor_b=np.zeros(()),
    )
    mlp = MlpParams(
        w1=rng.uniform(-bound, bound, size=(d, 3 * d)),
        b1=np.zeros(d),
        w2=rng.uniform(-bound, bound, size=d),
        b2=np.zeros(()),
    )
    offsets = {kind: field_offsets(catalog.vocab(kind)) for kind in ("user", "anchor", "item")}
    return ModelParams(dim=d, offsets=offsets, pnn=pnn, lstm=lstm, attn=attn, mlp=mlp)


class _PairContext:
    """Per-batch (or per-eval) memo of encodings shared across pairs.

    Static embeddings and full-history item states depend only on the
    object and the parameters, so within one tape they are computed once
    and reused by every pair that touches the object.  ``precompute``
    pushes whole groups of histories through the batched sequence encoder,
    which is much cheaper on the tape than owner-by-owner encoding.
    """

    def __init__(self, catalog: Catalog, params: ModelParams, config: TrainConfig):
        self.catalog = catalog
        self.params = params
        self.config = config
        self._static: dict[tuple[str, int], Tensor] = {}
        self._states: dict[tuple[str, int], EncodedSequence] = {}
        self._stacked: dict[tuple[str, int], Tensor | None] = {}
        self._browsed: dict[int, Tensor | None] = {}
        self._item_pieces = None
        self._anchor_pieces = None
        if config.variant == "with_co_retrieval":
            self.user_index, self.anchor_index = catalog.kkv_indices()

    def attention_pieces(self, aspect: str):
        from .interaction import _split

        if aspect == "item":
            if self._item_pieces is None:
                self._item_pieces = _split(self.params.attn.item_w, self.config.dim, 4)
            return self._item_pieces
        if self._anchor_pieces is None:
            self._anchor_pieces = _split(self.params.attn.anchor_w, self.config.dim, 3)
        return self._anchor_pieces

    def static(self, kind: str, obj_id: int) -> Tensor:
        key = (kind, obj_id)
        got = self._static.get(key)
        if got is None:
            obj = (self.catalog.users if kind == "user" else self.catalog.anchors)[obj_id]
            fields = [(p, 1.0) for p in active_positions(obj.features, self.params.offsets[kind])]
            got = pnn_encode(kind, fields, self.params.pnn)
            self._static[key] = got
        return got

    def _history(self, side: str, owner_id: int):
        if side == "user":
            return self.catalog.users[owner_id].browsed_items
        return self.catalog.anchors[owner_id].broadcast_items

    def _position_rows(self, item_ids):
        offsets = self.params.offsets["item"]
        return [active_positions(self.catalog.items[i].features, offsets) for i in item_ids]

    def precompute(self, user_ids, anchor_ids) -> None:
        """Encode all listed owners' item histories in one batched pass.

        Owners with a ragged or nonstandard per-item field layout fall back
        to the owner-by-owner path.
        """
        pending = [
            (side, oid)
            for side, ids in (("user", user_ids), ("anchor", anchor_ids))
            for oid in ids
            if (side, oid) not in self._states
        ]
        if not pending:
            return
        n_fields = len(self.params.offsets["item"])
        matrices = []
        regular = []
        for side, oid in pending:
            rows = self._position_rows(self._history(side, oid))
            if any(len(r) != n_fields for r in rows):
                self.item_states(side, oid)
                continue
            regular.append((side, oid))
            matrices.append(np.array(rows, dtype=np.intp).reshape(len(rows), n_fields))
        if regular:
            encoded = encode_sequences_batched(matrices, "item", self.params.pnn, self.params.lstm)
            for (side, oid), seq in zip(regular, encoded):
                self._states[(side, oid)] = seq

    def item_states(self, side: str, owner_id: int) -> EncodedSequence:
        key = (side, owner_id)
        got = self._states.get(key)
        if got is None:
            ids = self._history(side, owner_id)
            rows = self._position_rows(ids)
            widths = {len(r) for r in rows}
            if not rows:
                encoded = []
            elif len(widths) == 1:
                encoded = pnn_encode_batch("item", np.array(rows, dtype=np.intp), self.params.pnn)
            else:
                encoded = [pnn_encode("item", [(p, 1.0) for p in row], self.params.pnn) for row in rows]
            got = encode_sequence(encoded, self.params.lstm)
            self._states[key] = got
        return got

    def stacked_states(self, side: str, owner_id: int) -> Tensor | None:
        """(M, d) matrix of an owner's item states; None for empty history."""
        key = (side, owner_id)
        got = self._stacked.get(key, _MISSING)
        if got is _MISSING:
            states = self.item_states(side, owner_id).hidden_states
            got = stack_states(states) if states else None
            self._stacked[key] = got
        return got

    def browsed_anchor_matrix(self, user_id: int) -> Tensor | None:
        got = self._browsed.get(user_id, _MISSING)
        if got is _MISSING:
            hist = self.catalog.users[user_id].browsed_anchors
            got = stack_states([self.static("anchor", h) for h in hist]) if hist else None
            self._browsed[user_id] = got
        return got


_MISSING = object()


def _dropout_mask(config: TrainConfig, rng: np.random.Generator | None):
    if rng is None or config.dropout <= 0.0:
        return None
    keep = 1.0 - config.dropout
    return (rng.random(3 * config.dim) < keep) / keep


def _forward(ctx: _PairContext, user_id: int, anchor_id: int,
             dropout_mask: np.ndarray | None, stats: InteractionStats | None) -> Tensor:
    catalog, config = ctx.catalog, ctx.config
    if user_id not in catalog.users:
        raise UnknownIdError(f"unknown user id {user_id}")
    if anchor_id not in catalog.anchors:
        raise UnknownIdError(f"unknown anchor id {anchor_id}")
    user = catalog.users[user_id]
    d = config.dim
    e_u = ctx.static("user", user_id)
    e_a = ctx.static("anchor", anchor_id)

    if config.svdpp_head:
        score = svdpp_similarity(
            e_u, ctx.item_states("user", user_id), e_a, ctx.item_states("anchor", anchor_id)
        )
        return ad.sigmoid(score)

    y_e = embed_similarity(e_u, e_a)

    if config.variant == "no_item_aspect":
        y_i = Tensor(np.zeros(d))
        if stats is not None:
            stats.pair_budgets.append(0)
    else:
        if config.variant == "with_co_retrieval":
            full_u = ctx.item_states("user", user_id).hidden_states
            full_a = ctx.item_states("anchor", anchor_id).hidden_states
            ret = co_retrieve(ctx.user_index, ctx.anchor_index, user_id, anchor_id, config.co_retrieval_k)
            ustates = [full_u[p] for p in ret.user_positions]
            astates = [full_a[p] for p in ret.anchor_positions]
        else:
            ustates = ctx.stacked_states("user", user_id)
            astates = ctx.stacked_states("anchor", anchor_id)
        y_i = item_aspect_interaction(
            e_u, ustates, e_a, astates, ctx.params.attn,
            literal_square=config.literal_eq4_product, stats=stats,
            weight_pieces=ctx.attention_pieces("item"),
        )

    if config.variant == "no_anchor_aspect":
        y_a = Tensor(np.zeros(d))
    else:
        hist = ctx.browsed_anchor_matrix(user_id)
        y_a = anchor_aspect_interaction(e_u, hist, e_a, ctx.params.attn,
                                        weight_pieces=ctx.attention_pieces("anchor"))

    z = ad.concat([y_e, y_i, y_a])
    if dropout_mask is not None:
        z = ad.dropout_mask_apply(z, dropout_mask)
    hidden = ad.relu(ad.add(ad.matmul(ctx.params.mlp.w1, z), ctx.params.mlp.b1))
    score = ad.add(ad.dot(ctx.params.mlp.w2, hidden), ctx.params.mlp.b2)
    return ad.sigmoid(score)


def forward_pair(catalog: Catalog, params: ModelParams, config: TrainConfig,
                 user_id: int, anchor_id: int, mode: str = "eval",
                 stats: InteractionStats | None = None) -> float:
    """Predict the browse probability for one pair.

    In train mode dropout is active, drawing its mask from the config
    seed's dropout stream; eval mode is deterministic.
    """
    ctx = _PairContext(catalog, params, config)
    rng = stream_rng(config.seed, "dropout") if mode == "train" else None
    return float(_forward(ctx, user_id, anchor_id, _dropout_mask(config, rng), stats).data)


def batch_loss(predictions, labels) -> Tensor:
    """Summed log loss over a batch (the trainer adds the L2 term)."""
    if len(predictions) != len(labels):
        raise ValueError(f"batch_loss: {len(predictions)} predictions vs {len(labels)} labels")
    p = ad.clamp(ad.concat(predictions), PRED_CLAMP, 1.0 - PRED_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    pos = ad.dot(ad.log(p), y)
    neg = ad.dot(ad.log(ad.add(ad.multiply_elementwise(p, -1.0), 1.0)), 1.0 - y)
    return ad.multiply_elementwise(ad.add(pos, neg), -1.0)


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    """Geometric interpolation from lr_start to lr_end across the epochs."""
    if config.epochs <= 1 or config.lr_start == 0.0:
        return config.lr_start
    ratio = (config.lr_end / config.lr_start) ** (1.0 / (config.epochs - 1))
    return config.lr_start * ratio**epoch


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    val_auc: float | None
    val_acc: float | None
    val_logloss: float | None
    wall_seconds: float


def _l2_term(leaves) -> Tensor:
    total = None
    for t in leaves:
        sq = ad.reduce_sum(ad.multiply_elementwise(t, t))
        total = sq if total is None else ad.add(total, sq)
    return total


def _clip_gradients(grads) -> None:
    norm_sq = sum(float((g * g).sum()) for g in grads)
    norm = np.sqrt(norm_sq)
    if norm > GRAD_CLIP_NORM:
        scale = GRAD_CLIP_NORM / norm
        for i in range(len(grads)):
            grads[i] = grads[i] * scale


def _batch_gradients(catalog, params, config, chunk, dropout_rng):
    """Forward+backward over one batch on a shared tape."""
    tape = Tape()
    bound, leaves = params.bind(tape)
    ctx = _PairContext(catalog, bound, config)
    if config.svdpp_head or config.variant != "no_item_aspect":
        ctx.precompute(
            dict.fromkeys(p.user_id for p in chunk),
            dict.fromkeys(p.anchor_id for p in chunk),
        )
    preds = [
        _forward(ctx, p.user_id, p.anchor_id, _dropout_mask(config, dropout_rng), None)
        for p in chunk
    ]
    data = batch_loss(preds, [p.label for p in chunk])
    loss = data
    if config.l2_weight > 0.0:
        loss = ad.add(loss, ad.multiply_elementwise(_l2_term(leaves), config.l2_weight))
    loss_value = float(loss.data)
    data_value = float(data.data)
    if not np.isfinite(loss_value):
        return data_value, loss_value, None
    gmap = ad.backward(tape, loss)
    grads = [gmap[t.node_id] for t in leaves]
    return data_value, loss_value, grads


def _batch_gradients_threaded(catalog, params, config, chunk, dropout_rng):
    """Per-pair tapes on a worker pool; gradients summed in pair order.

    Dropout masks are drawn up front in pair order so scheduling cannot
    change the random stream.  The L2 gradient is added analytically.
    """
    masks = [_dropout_mask(config, dropout_rng) for _ in chunk]

    def one(i: int):
        pair = chunk[i]
        tape = Tape()
        bound, leaves = params.bind(tape)
        ctx = _PairContext(catalog, bound, config)
        pred = _forward(ctx, pair.user_id, pair.anchor_id, masks[i], None)
        loss = batch_loss([pred], [pair.label])
        gmap = ad.backward(tape, loss)
        return float(loss.data), [gmap[t.node_id] for t in leaves]

    with ThreadPoolExecutor(max_workers=config.threads) as ex:
        results = list(ex.map(one, range(len(chunk))))

    totals = [np.zeros_like(a) for _, a in params.named_arrays()]
    data_value = 0.0
    for loss_val, grads in results:  # fixed pair order
        data_value += loss_val
        for i, g in enumerate(grads):
            totals[i] = totals[i] + g
    loss_value = data_value
    if config.l2_weight > 0.0:
        for i, (_, arr) in enumerate(params.named_arrays()):
            totals[i] = totals[i] + 2.0 * config.l2_weight * arr
            loss_value += config.l2_weight * float((arr * arr).sum())
    if not np.isfinite(loss_value):
        return data_value, loss_value, None
    return data_value, loss_value, totals


def train(catalog: Catalog, pairs, config: TrainConfig, val_pairs=None):
    """Run the training loop; returns (params, per-epoch metrics rows).

    Batches are sampled without replacement, reshuffled each epoch from
    the seed's shuffle stream.  Two runs with the same inputs and config
    produce identical parameters and metrics.
    """
    if not pairs:
        raise ValueError("train: empty training split")
    rng_init = stream_rng(config.seed, "init")
    params = init_model_params(catalog, config, rng_init)
    rng_shuffle = stream_rng(config.seed, "shuffle")
    rng_dropout = stream_rng(config.seed, "dropout")

    adam_m = adam_v = None
    adam_t = 0
    if config.optimizer == "adam":
        adam_m = [np.zeros_like(a) for _, a in params.named_arrays()]
        adam_v = [np.zeros_like(a) for _, a in params.named_arrays()]

    rows: list[EpochMetrics] = []
    n = len(pairs)
    global_batch = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(config, epoch)
        order = rng_shuffle.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            chunk = [pairs[int(i)] for i in order[start : start + config.batch_size]]
            if config.threads > 1:
                data_value, loss_value, grads = _batch_gradients_threaded(
                    catalog, params, config, chunk, rng_dropout
                )
            else:
                data_value, loss_value, grads = _batch_gradients(
                    catalog, params, config, chunk, rng_dropout
                )
            if grads is None:
                raise TrainingDiverged(global_batch)
            _clip_gradients(grads)
            arrays = [a for _, a in params.named_arrays()]
            if config.optimizer == "sgd":
                for arr, g in zip(arrays, grads):
                    arr -= lr * g
            else:
                adam_t += 1
                b1, b2, eps = 0.9, 0.999, 1e-8
                for i, (arr, g) in enumerate(zip(arrays, grads)):
                    adam_m[i] = b1 * adam_m[i] + (1 - b1) * g
                    adam_v[i] = b2 * adam_v[i] + (1 - b2) * g * g
                    mhat = adam_m[i] / (1 - b1**adam_t)
                    vhat = adam_v[i] / (1 - b2**adam_t)
                    arr -= lr * mhat / (np.sqrt(vhat) + eps)
            loss_sum += data_value
            global_batch += 1
        train_loss = loss_sum / n
        val_auc = val_acc = val_ll = None
        if val_pairs:
            report = evaluate_pairs(catalog, params, config, val_pairs)
            val_auc, val_acc, val_ll = report.auc, report.acc, report.logloss
        rows.append(
            EpochMetrics(epoch, lr, train_loss, val_auc, val_acc, val_ll, time.perf_counter() - t0)
        )
    return params, rows


def evaluate_pairs(catalog: Catalog, params: ModelParams, config: TrainConfig, pairs,
                   stats: InteractionStats | None = None) -> EvalReport:
    """Score pairs in eval mode and compute the offline metrics.

    Pass an InteractionStats to capture attention pair budgets and the
    interaction stage's wall time.
    """
    if stats is None:
        stats = InteractionStats()
    t0 = time.perf_counter()
    ctx = _PairContext(catalog, params, config)
    if config.svdpp_head or config.variant != "no_item_aspect":
        ctx.precompute(
            dict.fromkeys(p.user_id for p in pairs),
            dict.fromkeys(p.anchor_id for p in pairs),
        )
    scores = [float(_forward(ctx, p.user_id, p.anchor_id, None, stats).data) for p in pairs]
    labels = [p.label for p in pairs]
    return make_report(
        scores, labels,
        mean_pair_budget=stats.mean_pair_budget(),
        wall_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(params: ModelParams, config: TrainConfig, path) -> None:
    """JSON header line, then raw little-endian float64 arrays in order."""
    named = params.named_arrays()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "dim": params.dim,
        "offsets": {k: list(v) for k, v in params.offsets.items()},
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for _, a in named:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, TrainConfig]:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise CheckpointError("no header line found")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a {CHECKPOINT_FORMAT} file")
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} does not match supported version {CHECKPOINT_VERSION}"
        )
    config = TrainConfig(**header["config"])
    offsets = {k: tuple(v) for k, v in header["offsets"].items()}
    body = blob[nl + 1 :]
    arrays = {}
    off = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 8
        if off + nbytes > len(body):
            raise CheckpointError(f"truncated checkpoint: array {spec['name']} is incomplete")
        arrays[spec["name"]] = np.frombuffer(body[off : off + nbytes], dtype="<f8").reshape(shape).copy()
        off += nbytes
    if off != len(body):
        raise CheckpointError(f"{len(body) - off} trailing bytes after arrays")
    params = _params_from_arrays(header["dim"], offsets, arrays)
    return params, config


def write_metrics_csv(rows, path, include_timing: bool = False) -> None:
    """Per-epoch metrics CSV.

    The wall_seconds column is written as 0.000 unless timing is opted in,
    so identical runs produce byte-identical files.
    """

    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,lr,train_loss,val_auc,val_acc,val_logloss,wall_seconds\n")
        for r in rows:
            wall = f"{r.wall_seconds:.3f}" if include_timing else "0.000"
            fh.write(
                f"{r.epoch},{fmt(r.lr)},{fmt(r.train_loss)},{fmt(r.val_auc)},"
                f"{fmt(r.val_acc)},{fmt(r.val_logloss)},{wall}\n"
            )
