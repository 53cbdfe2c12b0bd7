"""Run configuration: one flat JSON object, every field a TrainConfig field."""

import dataclasses
import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Adaptation:
    """Which of the four context-adaptation mechanisms are active."""

    additive: bool = True        # F @ cvec added to the recurrent pre-activation
    multiplicative: bool = False  # (1 + C @ cvec) rescaling of the pre-activation blocks
    lowrank: bool = True         # G @ cvec added to the output logits
    hash_bias: bool = True       # gated per-(word, context) hashed bias on the logits

    def any(self) -> bool:
        return self.additive or self.multiplicative or self.lowrank or self.hash_bias


@dataclass
class TrainConfig:
    # context schema
    context_vars: list = field(default_factory=lambda: ["context"])
    context_dims: list = field(default_factory=lambda: [16])   # d_i per variable
    context_dim: int = 16                                      # k, combiner output width
    context_thresholds: list = field(default_factory=lambda: [0])  # min sentences per kept value
    # corpus handling
    tokenizer_mode: str = "word"
    min_count: int = 1
    max_sentence_len: int = 45
    # model dimensions (reference scale: word embedding 200, recurrent 240)
    embed_dim: int = 200
    lstm_dim: int = 240
    # adaptation switches
    additive: bool = True
    multiplicative: bool = False
    lowrank: bool = True
    hash_bias: bool = True
    # hashed-bias sizing (reference scale: 80M-entry table, 100M-bit filter)
    hash_size: int = 80_000_007
    bloom_bits: int = 100_000_000
    # optimization
    batch_size: int = 64
    dropout: float = 0.0
    negative_samples: int = 0    # 0 = exact softmax loss
    learning_rate: float = 0.001
    max_epochs: int = 10
    grad_clip: float = 0.0       # 0 = off
    seed: int = 0
    eval_every: int = 1          # heldout evaluations, in epochs
    patience: int = 3            # stop after this many evaluations without improvement

    def __post_init__(self):
        n = len(self.context_vars)
        if n < 1:
            raise ValueError("at least one context variable is required")
        if len(self.context_dims) != n:
            raise ValueError("context_dims must list one dimension per variable")
        if len(self.context_thresholds) != n:
            raise ValueError("context_thresholds must list one threshold per variable")
        if n == 1 and self.context_dims[0] != self.context_dim:
            raise ValueError("with one context variable context_dim must equal its "
                             "embedding dim (the embedding is used directly)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.tokenizer_mode not in ("word", "char"):
            raise ValueError("tokenizer_mode must be 'word' or 'char'")
        for name in ("batch_size", "embed_dim", "lstm_dim", "context_dim",
                     "max_sentence_len", "min_count", "hash_size", "bloom_bits",
                     "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.negative_samples < 0 or self.learning_rate < 0 or self.grad_clip < 0:
            raise ValueError("negative_samples, learning_rate and grad_clip must be >= 0")

    @property
    def adaptation(self) -> Adaptation:
        return Adaptation(self.additive, self.multiplicative, self.lowrank, self.hash_bias)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
