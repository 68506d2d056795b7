"""The two model architectures.

* a dual-branch vote classifier that encodes the chair transcript and the
  member transcript separately and classifies on the difference of the
  pooled branch outputs, and
* a single-branch regressor that maps a minutes document to a dissent
  level in (0, 1).

Branch pipeline: input dense (linear) -> layer norm (learned affine) ->
dropout -> attention-block stack -> mean pool over real sentences. The
classification/regression head is dense(768 -> 128), ReLU, dense(128 -> 1)
and a sigmoid. Padded rows are sliced off before compute; because padding
rows are all-zero and excluded from attention and pooling, this is exactly
equivalent to running the full padded matrix with masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .errors import ConfigError, EmptyDocumentError
from .tensor import AttentionWeights, Tensor

D_MODEL = 768
D_HEAD_HIDDEN = 128

# hyperparameter search bounds
MODULES_RANGE = (1, 12)
HEAD_CHOICES = (4, 8, 12)
DROPOUT_RANGE = (0.4, 0.8)
DROPOUT_STEP = 0.005
LR_RANGE = (1e-6, 1e-3)

# tuned defaults for the minutes regressor
MINUTES_DEFAULTS = dict(n_mhsa=6, heads=4, dropout=0.46, lr0=4.57e-5)


@dataclass
class HyperConfig:
    """One point in the classifier hyperparameter search space."""

    n_mhsa_chair: int = 3
    n_mhsa_member: int = 3
    heads_chair: int = 8
    heads_member: int = 8
    dropout: float = 0.735
    lr0: float = 4.0e-5

    def validate(self) -> "HyperConfig":
        lo, hi = MODULES_RANGE
        for name in ("n_mhsa_chair", "n_mhsa_member"):
            v = getattr(self, name)
            if not (isinstance(v, int) and lo <= v <= hi):
                raise ConfigError(f"{name}={v} outside [{lo}, {hi}]")
        for name in ("heads_chair", "heads_member"):
            if getattr(self, name) not in HEAD_CHOICES:
                raise ConfigError(f"{name}={getattr(self, name)} not in {HEAD_CHOICES}")
        if not (DROPOUT_RANGE[0] - 1e-9 <= self.dropout <= DROPOUT_RANGE[1] + 1e-9):
            raise ConfigError(f"dropout={self.dropout} outside {DROPOUT_RANGE}")
        if not (LR_RANGE[0] <= self.lr0 <= LR_RANGE[1]):
            raise ConfigError(f"lr0={self.lr0} outside {LR_RANGE}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        return cls(**d).validate()


@dataclass
class Branch:
    """Parameters of one encoder branch."""

    dense_w: Tensor
    dense_b: Tensor
    norm_gamma: Tensor
    norm_beta: Tensor
    blocks: list[AttentionWeights] = field(default_factory=list)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.dense.w": self.dense_w,
            f"{prefix}.dense.b": self.dense_b,
            f"{prefix}.norm.gamma": self.norm_gamma,
            f"{prefix}.norm.beta": self.norm_beta,
        }
        for i, blk in enumerate(self.blocks):
            out[f"{prefix}.block{i}.wq"] = blk.wq
            out[f"{prefix}.block{i}.wk"] = blk.wk
            out[f"{prefix}.block{i}.wv"] = blk.wv
            out[f"{prefix}.block{i}.wo"] = blk.wo
        return out


@dataclass
class Head:
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    def named(self, prefix: str = "head") -> dict[str, Tensor]:
        return {
            f"{prefix}.fc1.w": self.fc1_w,
            f"{prefix}.fc1.b": self.fc1_b,
            f"{prefix}.fc2.w": self.fc2_w,
            f"{prefix}.fc2.b": self.fc2_b,
        }


@dataclass
class ClassifierParams:
    chair: Branch
    member: Branch
    head: Head

    def named(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.chair.named("chair"))
        out.update(self.member.named("member"))
        out.update(self.head.named("head"))
        return out


@dataclass
class MinutesParams:
    branch: Branch
    head: Head

    def named(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.branch.named("branch"))
        out.update(self.head.named("head"))
        return out


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def _init_attention(rng: np.random.Generator, heads: int, d_model: int = D_MODEL) -> AttentionWeights:
    dh = d_model // heads
    return AttentionWeights(
        wq=T.parameter(_glorot(rng, d_model, dh, (heads, d_model, dh))),
        wk=T.parameter(_glorot(rng, d_model, dh, (heads, d_model, dh))),
        wv=T.parameter(_glorot(rng, d_model, dh, (heads, d_model, dh))),
        wo=T.parameter(_glorot(rng, d_model, d_model, (d_model, d_model))),
    )


def _init_branch(rng: np.random.Generator, n_blocks: int, heads: int,
                 d_model: int = D_MODEL) -> Branch:
    return Branch(
        dense_w=T.parameter(_glorot(rng, d_model, d_model, (d_model, d_model))),
        dense_b=T.parameter(np.zeros(d_model)),
        norm_gamma=T.parameter(np.ones(d_model)),
        norm_beta=T.parameter(np.zeros(d_model)),
        blocks=[_init_attention(rng, heads, d_model) for _ in range(n_blocks)],
    )


def _init_head(rng: np.random.Generator, d_model: int = D_MODEL) -> Head:
    return Head(
        fc1_w=T.parameter(_glorot(rng, d_model, D_HEAD_HIDDEN, (d_model, D_HEAD_HIDDEN))),
        fc1_b=T.parameter(np.zeros(D_HEAD_HIDDEN)),
        fc2_w=T.parameter(_glorot(rng, D_HEAD_HIDDEN, 1, (D_HEAD_HIDDEN, 1))),
        fc2_b=T.parameter(np.zeros(1)),
    )


def init_classifier(hyper: HyperConfig, rng: np.random.Generator) -> ClassifierParams:
    hyper.validate()
    return ClassifierParams(
        chair=_init_branch(rng, hyper.n_mhsa_chair, hyper.heads_chair),
        member=_init_branch(rng, hyper.n_mhsa_member, hyper.heads_member),
        head=_init_head(rng),
    )


def init_minutes(rng: np.random.Generator, n_mhsa: int | None = None,
                 heads: int | None = None) -> MinutesParams:
    n_mhsa = MINUTES_DEFAULTS["n_mhsa"] if n_mhsa is None else n_mhsa
    heads = MINUTES_DEFAULTS["heads"] if heads is None else heads
    return MinutesParams(
        branch=_init_branch(rng, n_mhsa, heads),
        head=_init_head(rng),
    )


def _document_rows(embedding: np.ndarray, n_sentences: int) -> Tensor:
    if n_sentences <= 0:
        raise EmptyDocumentError("document has zero real sentences")
    return T.constant(embedding[:n_sentences])


def _run_branch(x: Tensor, branch: Branch, dropout_rate: float, train: bool,
                rng: np.random.Generator | None) -> Tensor:
    h = T.dense(x, branch.dense_w, branch.dense_b)
    h = T.layer_norm(h, branch.norm_gamma, branch.norm_beta)
    h = T.dropout(h, dropout_rate, train=train, rng=rng)
    for blk in branch.blocks:
        h = T.multi_head_block(h, blk)
    return T.mean_rows(h)


def _run_branch_batch(x: Tensor, batch: int, length: int, branch: Branch,
                      dropout_rate: float, train: bool,
                      rng: np.random.Generator | None) -> Tensor:
    """Same pipeline over ``batch`` stacked documents of equal length."""
    h = T.dense(x, branch.dense_w, branch.dense_b)
    h = T.layer_norm(h, branch.norm_gamma, branch.norm_beta)
    h = T.dropout(h, dropout_rate, train=train, rng=rng)
    for blk in branch.blocks:
        h = T.multi_head_block_batch(h, batch, length, blk)
    return T.mean_rows_grouped(h, batch, length)


def _stack_documents(docs) -> tuple[Tensor, int]:
    lengths = {d.n_sentences for d in docs}
    if len(lengths) != 1:
        raise ConfigError("batched forward requires equal document lengths")
    n = lengths.pop()
    if n <= 0:
        raise EmptyDocumentError("document has zero real sentences")
    stacked = np.concatenate([np.asarray(d.embedding[:n], dtype=np.float64) for d in docs])
    return T.constant(stacked), n


def _run_head(x: Tensor, head: Head) -> Tensor:
    h = T.relu(T.dense(x, head.fc1_w, head.fc1_b))
    h = T.dense(h, head.fc2_w, head.fc2_b)
    return T.sum_all(h)  # (1,1) -> scalar logit


def classifier_logit(chair, member, params: ClassifierParams, hyper: HyperConfig,
                     train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Scalar pre-sigmoid output of the dual-branch classifier.

    ``chair`` and ``member`` are embedded transcripts (``.embedding`` plus
    ``.n_sentences``). The head sees pooled(member) - pooled(chair).
    """
    xc = _document_rows(chair.embedding, chair.n_sentences)
    xm = _document_rows(member.embedding, member.n_sentences)
    pooled_c = _run_branch(xc, params.chair, hyper.dropout, train, rng)
    pooled_m = _run_branch(xm, params.member, hyper.dropout, train, rng)
    return _run_head(T.sub(pooled_m, pooled_c), params.head)


def forward_classifier(chair, member, params: ClassifierParams, hyper: HyperConfig,
                       train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    return T.sigmoid(classifier_logit(chair, member, params, hyper, train, rng))


def predict_vote(probability: float, threshold: float = 0.5) -> int:
    """Round a dissent probability to a vote; the tie at 0.5 rounds to 1."""
    return 1 if float(probability) >= threshold else 0


def classifier_logits_batch(chairs, members, params: ClassifierParams, hyper: HyperConfig,
                            train: bool = False,
                            rng: np.random.Generator | None = None) -> Tensor:
    """(B, 1) logits for aligned chair/member document lists.

    All chair documents must share one sentence count and all member
    documents another; the training loop groups its minibatches that way.
    """
    if len(chairs) != len(members) or not chairs:
        raise ConfigError("chair and member lists must be non-empty and aligned")
    b = len(chairs)
    xc, nc = _stack_documents(chairs)
    xm, nm = _stack_documents(members)
    pooled_c = _run_branch_batch(xc, b, nc, params.chair, hyper.dropout, train, rng)
    pooled_m = _run_branch_batch(xm, b, nm, params.member, hyper.dropout, train, rng)
    diff = T.sub(pooled_m, pooled_c)
    h = T.relu(T.dense(diff, params.head.fc1_w, params.head.fc1_b))
    return T.dense(h, params.head.fc2_w, params.head.fc2_b)


def minutes_logits_batch(docs, params: MinutesParams,
                         dropout_rate: float = MINUTES_DEFAULTS["dropout"],
                         train: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
    if not docs:
        raise ConfigError("empty document batch")
    x, n = _stack_documents(docs)
    pooled = _run_branch_batch(x, len(docs), n, params.branch, dropout_rate, train, rng)
    h = T.relu(T.dense(pooled, params.head.fc1_w, params.head.fc1_b))
    return T.dense(h, params.head.fc2_w, params.head.fc2_b)


def minutes_logit(doc, params: MinutesParams, dropout_rate: float = MINUTES_DEFAULTS["dropout"],
                  train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    x = _document_rows(doc.embedding, doc.n_sentences)
    pooled = _run_branch(x, params.branch, dropout_rate, train, rng)
    return _run_head(pooled, params.head)


def forward_minutes(doc, params: MinutesParams, dropout_rate: float = MINUTES_DEFAULTS["dropout"],
                    train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    return T.sigmoid(minutes_logit(doc, params, dropout_rate, train, rng))


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def save_params(path, params, hyper: HyperConfig | None = None,
                extra: dict | None = None) -> None:
    """Write parameters plus a JSON sidecar next to the checkpoint."""
    named = {name: t.values for name, t in params.named().items()}
    T.save_checkpoint(path, named)
    sidecar = {"kind": "classifier" if isinstance(params, ClassifierParams) else "minutes"}
    if hyper is not None:
        sidecar["hyper"] = asdict(hyper)
    if extra:
        sidecar.update(extra)
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _branch_from(named: dict[str, np.ndarray], prefix: str) -> Branch:
    blocks = []
    i = 0
    while f"{prefix}.block{i}.wq" in named:
        blocks.append(AttentionWeights(
            wq=T.parameter(named[f"{prefix}.block{i}.wq"]),
            wk=T.parameter(named[f"{prefix}.block{i}.wk"]),
            wv=T.parameter(named[f"{prefix}.block{i}.wv"]),
            wo=T.parameter(named[f"{prefix}.block{i}.wo"]),
        ))
        i += 1
    return Branch(
        dense_w=T.parameter(named[f"{prefix}.dense.w"]),
        dense_b=T.parameter(named[f"{prefix}.dense.b"]),
        norm_gamma=T.parameter(named[f"{prefix}.norm.gamma"]),
        norm_beta=T.parameter(named[f"{prefix}.norm.beta"]),
        blocks=blocks,
    )


def _head_from(named: dict[str, np.ndarray]) -> Head:
    return Head(
        fc1_w=T.parameter(named["head.fc1.w"]),
        fc1_b=T.parameter(named["head.fc1.b"]),
        fc2_w=T.parameter(named["head.fc2.w"]),
        fc2_b=T.parameter(named["head.fc2.b"]),
    )


def classifier_from_named(named: dict[str, np.ndarray]) -> ClassifierParams:
    return ClassifierParams(
        chair=_branch_from(named, "chair"),
        member=_branch_from(named, "member"),
        head=_head_from(named),
    )


def minutes_from_named(named: dict[str, np.ndarray]) -> MinutesParams:
    return MinutesParams(branch=_branch_from(named, "branch"), head=_head_from(named))


def load_classifier(path) -> tuple[ClassifierParams, HyperConfig | None]:
    named = T.load_checkpoint(path)
    params = classifier_from_named(named)
    hyper = None
    try:
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
        if "hyper" in sidecar:
            hyper = HyperConfig.from_dict(sidecar["hyper"])
    except FileNotFoundError:
        pass
    return params, hyper


def load_minutes(path) -> tuple[MinutesParams, dict]:
    named = T.load_checkpoint(path)
    params = minutes_from_named(named)
    sidecar = {}
    try:
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        pass
    return params, sidecar
