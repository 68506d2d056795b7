"""Training loop, imbalance handling, hyperparameter search, k-fold CV.

The class imbalance is handled by splitting first and then oversampling
the minority class with replacement inside each split independently, so
no observation can appear on both sides of the split. The learning rate
follows a step decay, lr(step) = lr0 * factor^(step // 10), the test set
is evaluated every ten steps, and early stopping returns the checkpoint
with the best test loss seen.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from . import tensor as T
from .errors import (
    ClassCoverageError,
    ConfigError,
    FoldError,
    TrainingDivergedError,
)

LR_DECAY_EVERY = 10
EVAL_EVERY = 10

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_steps: int = 1000
    lr_decay_every: int = LR_DECAY_EVERY
    lr_decay_factor: float = 0.9
    patience: int = 10
    split_frac: float = 0.8
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.lr_decay_every != LR_DECAY_EVERY:
            raise ConfigError(f"decay interval is fixed at {LR_DECAY_EVERY} steps")
        if not 0.0 < self.split_frac < 1.0:
            raise ConfigError(f"split_frac={self.split_frac} outside (0, 1)")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ConfigError(f"lr_decay_factor={self.lr_decay_factor} outside (0, 1)")
        if self.batch_size < 1 or self.max_steps < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_steps and patience must be positive")
        return self


@dataclass
class MinutesHyper:
    """Tuned defaults of the minutes regressor."""

    n_mhsa: int = nn.MINUTES_DEFAULTS["n_mhsa"]
    heads: int = nn.MINUTES_DEFAULTS["heads"]
    dropout: float = nn.MINUTES_DEFAULTS["dropout"]
    lr0: float = nn.MINUTES_DEFAULTS["lr0"]


@dataclass
class MinutesExample:
    """One regression example: an embedded document and its target level."""

    doc: object
    target: float


@dataclass
class SearchTrial:
    hyper: nn.HyperConfig
    train_accuracy: float
    test_accuracy: float
    best_test_loss: float
    steps_run: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper"] = asdict(self.hyper)
        return d


@dataclass
class SplitResult:
    """Index lists into the original dataset; train/test are class-balanced."""

    train: list[int]
    test: list[int]
    test_original: list[int]  # unbalanced test split, for headline metrics


def learning_rate(lr0: float, step: int, factor: float) -> float:
    return lr0 * factor ** (step // LR_DECAY_EVERY)


def split_and_oversample(labels, split_frac: float, seed: int) -> SplitResult:
    """Stratified split, then independent minority oversampling per split."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ClassCoverageError("dataset holds a single class; nothing to balance")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51]))
    train_by_class: dict[int, list[int]] = {}
    test_by_class: dict[int, list[int]] = {}
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(split_frac * idx.size))
        if cut == 0 or cut == idx.size:
            raise ClassCoverageError(
                f"class {cls} cannot cover both splits (count {idx.size})")
        train_by_class[int(cls)] = idx[:cut].tolist()
        test_by_class[int(cls)] = idx[cut:].tolist()

    def balance(by_class: dict[int, list[int]]) -> list[int]:
        target = max(len(v) for v in by_class.values())
        out: list[int] = []
        for cls in sorted(by_class):
            members = by_class[cls]
            out.extend(members)
            deficit = target - len(members)
            if deficit > 0:
                draws = rng.integers(0, len(members), size=deficit)
                out.extend(members[j] for j in draws)
        return out

    test_original = [i for cls in sorted(test_by_class) for i in test_by_class[cls]]
    return SplitResult(
        train=balance(train_by_class),
        test=balance(test_by_class),
        test_original=test_original,
    )


def split_plain(n: int, split_frac: float, seed: int) -> tuple[list[int], list[int]]:
    """Unstratified split used by the regression model."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x52]))
    perm = rng.permutation(n)
    cut = int(round(split_frac * n))
    cut = min(max(cut, 1), n - 1) if n > 1 else n
    return perm[:cut].tolist(), perm[cut:].tolist()


# --------------------------------------------------------------------------
# batched loss graphs and eval-mode metrics
# --------------------------------------------------------------------------

def _classifier_groups(items) -> list[list[int]]:
    """Indices grouped by (chair length, member length), key-sorted."""
    groups: dict[tuple[int, int], list[int]] = {}
    for i, obs in enumerate(items):
        groups.setdefault((obs.chair.n_sentences, obs.member.n_sentences), []).append(i)
    return [groups[k] for k in sorted(groups)]


def _minutes_groups(items) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i, ex in enumerate(items):
        groups.setdefault(ex.doc.n_sentences, []).append(i)
    return [groups[k] for k in sorted(groups)]


def _classifier_batch_loss(items, params, hyper, train, rng):
    """Mean BCE over a minibatch, built group-by-group in a fixed order."""
    parts = []
    total = len(items)
    for group in _classifier_groups(items):
        sub = [items[i] for i in group]
        logits = nn.classifier_logits_batch([o.chair for o in sub], [o.member for o in sub],
                                            params, hyper, train=train, rng=rng)
        loss = T.bce_with_logits_rows(logits, np.array([float(o.vote) for o in sub]))
        parts.append(T.mul_const(loss, len(sub) / total))
    return T.add_many(parts)


def _minutes_batch_loss(items, params, dropout, train, rng):
    """Mean absolute error over a minibatch of regression examples."""
    parts = []
    total = len(items)
    for group in _minutes_groups(items):
        sub = [items[i] for i in group]
        logits = nn.minutes_logits_batch([e.doc for e in sub], params,
                                         dropout_rate=dropout, train=train, rng=rng)
        targets = T.constant(np.array([[float(e.target)] for e in sub]))
        loss = T.mean_all(T.abs_t(T.sub(T.sigmoid(logits), targets)))
        parts.append(T.mul_const(loss, len(sub) / total))
    return T.add_many(parts)


def classifier_scores(params, hyper, items) -> np.ndarray:
    """Eval-mode logits for every observation, in input order."""
    out = np.empty(len(items))
    for group in _classifier_groups(items):
        sub = [items[i] for i in group]
        logits = nn.classifier_logits_batch([o.chair for o in sub], [o.member for o in sub],
                                            params, hyper, train=False)
        out[group] = logits.values[:, 0]
    return out


def minutes_predictions(params, dropout, items) -> np.ndarray:
    out = np.empty(len(items))
    for group in _minutes_groups(items):
        sub = [items[i] for i in group]
        logits = nn.minutes_logits_batch([e.doc for e in sub], params,
                                         dropout_rate=dropout, train=False)
        out[group] = logits.values[:, 0]
    return 1.0 / (1.0 + np.exp(-out))


def evaluate_classifier(params, hyper, items) -> tuple[float, float]:
    """Mean BCE loss and accuracy over ``items`` in eval mode."""
    z = classifier_scores(params, hyper, items)
    y = np.array([float(o.vote) for o in items])
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    votes = (z >= 0.0).astype(int)  # sigmoid(z) >= 0.5 iff z >= 0
    return float(losses.mean()), float((votes == y).mean())


def evaluate_minutes(params, dropout, items) -> tuple[float, float]:
    """Mean absolute error and R^2 (0 under a zero-variance target)."""
    preds = minutes_predictions(params, dropout, items)
    targets = np.array([float(e.target) for e in items])
    mae = float(np.mean(np.abs(preds - targets)))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot == 0.0:
        return mae, 0.0
    r2 = 1.0 - float(np.sum((preds - targets) ** 2)) / ss_tot
    return mae, r2


# --------------------------------------------------------------------------
# the loop
# --------------------------------------------------------------------------

class _Adam:
    def __init__(self, named_params: dict[str, T.Tensor]):
        self.params = named_params
        self.m = {k: np.zeros_like(t.values) for k, t in named_params.items()}
        self.v = {k: np.zeros_like(t.values) for k, t in named_params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            p.values -= lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class TrainResult:
    params: object
    trace: list[dict] = field(default_factory=list)
    best_test_loss: float = math.inf
    best_step: int = -1
    steps_run: int = 0


def train_on_split(kind: str, train_items, test_items, cfg: TrainConfig,
                   hyper: nn.HyperConfig | None = None,
                   minutes_hyper: MinutesHyper | None = None,
                   stop_at_accuracy: float | None = None,
                   stop_at_loss: float | None = None) -> TrainResult:
    """Run the optimizer on a prepared split.

    ``stop_at_accuracy`` / ``stop_at_loss`` add optional extra stop
    criteria on the test metrics, used by fast-convergence harnesses; the
    returned checkpoint is still the one with the best test loss.
    """
    cfg.validate()
    if not train_items or not test_items:
        raise ConfigError("empty train or test split")
    if kind == "classifier":
        hyper = (hyper or nn.HyperConfig()).validate()
        params = nn.init_classifier(hyper, np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 0x10])))
        lr0, dropout = hyper.lr0, hyper.dropout
    elif kind == "minutes":
        mh = minutes_hyper or MinutesHyper()
        params = nn.init_minutes(np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 0x11])), n_mhsa=mh.n_mhsa, heads=mh.heads)
        lr0, dropout = mh.lr0, mh.dropout
    else:
        raise ConfigError(f"unknown model kind {kind!r}")

    named = params.named()
    adam = _Adam(named)
    rng_batch = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x12]))
    rng_drop = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x13]))

    best_loss = math.inf
    best_snapshot = {k: t.values.copy() for k, t in named.items()}
    best_step = -1
    bad_evals = 0
    trace: list[dict] = []
    steps_run = 0

    for step in range(cfg.max_steps):
        steps_run = step + 1
        lr = learning_rate(lr0, step, cfg.lr_decay_factor)
        if cfg.batch_size >= len(train_items):
            batch = list(range(len(train_items)))
        else:
            batch = rng_batch.integers(0, len(train_items), size=cfg.batch_size).tolist()
        adam.zero_grad()
        picked = [train_items[i] for i in batch]
        if kind == "classifier":
            loss = _classifier_batch_loss(picked, params, hyper, train=True, rng=rng_drop)
        else:
            loss = _minutes_batch_loss(picked, params, dropout, train=True, rng=rng_drop)
        train_loss = float(loss.values)
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(
                f"non-finite training loss at step {step}", trace=trace)
        loss.backward()
        adam.step(lr)

        if (step + 1) % EVAL_EVERY == 0 or step + 1 == cfg.max_steps:
            if kind == "classifier":
                test_loss, test_acc = evaluate_classifier(params, hyper, test_items)
                _, train_acc = evaluate_classifier(params, hyper, train_items)
            else:
                test_loss, test_acc = evaluate_minutes(params, dropout, test_items)
                _, train_acc = evaluate_minutes(params, dropout, train_items)
            trace.append({
                "step": step + 1, "lr": lr, "train_loss": train_loss,
                "test_loss": test_loss, "train_acc": train_acc, "test_acc": test_acc,
            })
            if not math.isfinite(test_loss):
                raise TrainingDivergedError(
                    f"non-finite test loss at step {step}", trace=trace)
            if test_loss < best_loss:
                best_loss = test_loss
                best_snapshot = {k: t.values.copy() for k, t in named.items()}
                best_step = step + 1
                bad_evals = 0
            else:
                bad_evals += 1
            if bad_evals >= cfg.patience:
                break
            if stop_at_accuracy is not None and kind == "classifier" and test_acc >= stop_at_accuracy:
                break
            if stop_at_loss is not None and test_loss <= stop_at_loss:
                break

    if kind == "classifier":
        final = nn.classifier_from_named(best_snapshot)
    else:
        final = nn.minutes_from_named(best_snapshot)
    return TrainResult(params=final, trace=trace, best_test_loss=best_loss,
                       best_step=best_step, steps_run=steps_run)


def train_model(kind: str, data, cfg: TrainConfig,
                hyper: nn.HyperConfig | None = None,
                minutes_hyper: MinutesHyper | None = None) -> TrainResult:
    """Split (with classifier-side oversampling) and train."""
    cfg.validate()
    if not data:
        raise ConfigError("empty dataset")
    if kind == "classifier":
        split = split_and_oversample([obs.vote for obs in data], cfg.split_frac, cfg.seed)
        train_items = [data[i] for i in split.train]
        test_items = [data[i] for i in split.test]
    else:
        tr, te = split_plain(len(data), cfg.split_frac, cfg.seed)
        train_items = [data[i] for i in tr]
        test_items = [data[i] for i in te]
    return train_on_split(kind, train_items, test_items, cfg, hyper=hyper,
                          minutes_hyper=minutes_hyper)


# --------------------------------------------------------------------------
# hyperparameter search
# --------------------------------------------------------------------------

def sample_hyper(rng: np.random.Generator) -> nn.HyperConfig:
    """One draw from the search space (lr sampled in the log domain)."""
    lo, hi = nn.MODULES_RANGE
    n_grid = int(round((nn.DROPOUT_RANGE[1] - nn.DROPOUT_RANGE[0]) / nn.DROPOUT_STEP))
    return nn.HyperConfig(
        n_mhsa_chair=int(rng.integers(lo, hi + 1)),
        n_mhsa_member=int(rng.integers(lo, hi + 1)),
        heads_chair=int(rng.choice(nn.HEAD_CHOICES)),
        heads_member=int(rng.choice(nn.HEAD_CHOICES)),
        dropout=round(nn.DROPOUT_RANGE[0] + nn.DROPOUT_STEP * int(rng.integers(0, n_grid + 1)), 3),
        lr0=float(np.exp(rng.uniform(np.log(nn.LR_RANGE[0]), np.log(nn.LR_RANGE[1])))),
    ).validate()


def _run_trial(args) -> tuple[int, dict]:
    index, data, cfg_dict, hyper_dict = args
    cfg = TrainConfig(**cfg_dict)
    hyper = nn.HyperConfig.from_dict(hyper_dict)
    cfg.seed = int(np.random.SeedSequence([cfg.seed, 0x7A, index]).generate_state(1)[0])
    result = train_model("classifier", data, cfg, hyper=hyper)
    last = result.trace[-1] if result.trace else {"train_acc": 0.0, "test_acc": 0.0}
    trial = SearchTrial(
        hyper=hyper,
        train_accuracy=last["train_acc"],
        test_accuracy=last["test_acc"],
        best_test_loss=result.best_test_loss,
        steps_run=result.steps_run,
    )
    return index, trial.to_dict()


def hyper_search(data, budget: int, seed: int, cfg: TrainConfig,
                 workers: int = 1) -> list[SearchTrial]:
    """Seeded random search over the hyperparameter space, ranked by loss.

    Trials use RNG streams derived from (seed, trial index), so results do
    not depend on the worker count.
    """
    if budget < 1:
        raise ConfigError("search budget must be >= 1")
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7B]))
    configs = [sample_hyper(rng) for _ in range(budget)]
    cfg_dict = asdict(cfg)
    cfg_dict["seed"] = seed
    jobs = [(i, data, cfg_dict, asdict(h)) for i, h in enumerate(configs)]
    results: dict[int, dict] = {}
    if workers > 1 and budget > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, trial in pool.map(_run_trial, jobs):
                results[index] = trial
    else:
        for job in jobs:
            index, trial = _run_trial(job)
            results[index] = trial
    trials = [
        SearchTrial(hyper=nn.HyperConfig.from_dict(results[i]["hyper"]),
                    train_accuracy=results[i]["train_accuracy"],
                    test_accuracy=results[i]["test_accuracy"],
                    best_test_loss=results[i]["best_test_loss"],
                    steps_run=results[i]["steps_run"])
        for i in range(budget)
    ]
    return sorted(trials, key=lambda t: (t.best_test_loss, t.hyper.to_json()))


# --------------------------------------------------------------------------
# k-fold cross-validation
# --------------------------------------------------------------------------

def _run_fold(args) -> dict:
    kind, data, heldout, i, cfg_dict, hyper_dict, minutes_dict = args
    cfg = TrainConfig(**cfg_dict)
    cfg.seed = int(np.random.SeedSequence([cfg.seed, 0x7D, i]).generate_state(1)[0])
    hyper = nn.HyperConfig.from_dict(hyper_dict) if hyper_dict else None
    mh = MinutesHyper(**minutes_dict) if minutes_dict else None
    held = set(heldout)
    train_items = [data[j] for j in range(len(data)) if j not in held]
    test_items = [data[j] for j in heldout]
    result = train_on_split(kind, train_items, test_items, cfg, hyper=hyper,
                            minutes_hyper=mh)
    if kind == "minutes":
        mae, r2 = evaluate_minutes(result.params, (mh or MinutesHyper()).dropout, test_items)
        return {"fold": i, "n": len(heldout), "mae": mae, "r2": r2}
    loss, acc = evaluate_classifier(result.params, hyper or nn.HyperConfig(), test_items)
    return {"fold": i, "n": len(heldout), "loss": loss, "accuracy": acc}


def kfold_cv(kind: str, data, k: int, cfg: TrainConfig,
             hyper: nn.HyperConfig | None = None,
             minutes_hyper: MinutesHyper | None = None,
             workers: int = 1) -> dict:
    """Disjoint k folds with deterministic assignment under the seed.

    Folds use RNG streams derived from (seed, fold index) and may run in
    parallel worker processes without changing the results.
    """
    n = len(data)
    if k < 2:
        raise FoldError("k must be >= 2")
    if k > n:
        raise FoldError(f"k={k} exceeds dataset size {n}")
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7C]))
    perm = rng.permutation(n)
    folds = [sorted(perm[i::k].tolist()) for i in range(k)]
    jobs = [(kind, data, folds[i], i, asdict(cfg),
             asdict(hyper) if hyper else None,
             asdict(minutes_hyper) if minutes_hyper else None)
            for i in range(k)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_fold = sorted(pool.map(_run_fold, jobs), key=lambda f: f["fold"])
    else:
        per_fold = [_run_fold(job) for job in jobs]
    keys = [k_ for k_ in per_fold[0] if k_ not in ("fold", "n")]
    means = {k_: float(np.mean([f[k_] for f in per_fold])) for k_ in keys}
    return {"folds": per_fold, "means": means, "fold_sizes": [len(f) for f in folds]}
