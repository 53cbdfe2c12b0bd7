"""Context-variable embeddings and the single-layer combiner.

Each categorical context variable i owns an embedding table E_i; with a
single variable the embedding row itself is the context vector, with
several the rows are mixed through one tanh layer,

    cvec = tanh(sum_i M_i @ E_i[c_i] + b_0)

so every downstream consumer sees one fixed-width vector per sentence.
"""

import numpy as np

INIT_SCALE = 0.05  # uniform [-0.05, 0.05] keeps tanh in its linear regime


class ContextSchema:
    def __init__(self, names, cardinalities, dims, k, embeddings, combiner_w, combiner_b):
        self.names = list(names)
        self.cardinalities = [int(c) for c in cardinalities]
        self.dims = [int(d) for d in dims]
        self.k = int(k)
        self.embeddings = embeddings    # E_i: (|C_i|, d_i) float64 each
        self.combiner_w = combiner_w    # M_i: (k, d_i) float64 each
        self.combiner_b = combiner_b    # b_0: (k,) float64
        if len({len(self.names), len(self.cardinalities), len(self.dims),
                len(embeddings), len(combiner_w)}) != 1:
            raise ValueError("per-variable field lengths disagree")
        if self.n == 1 and self.dims[0] != self.k:
            raise ValueError("with one context variable the embedding dim must equal k")
        for i, E in enumerate(embeddings):
            if E.shape != (self.cardinalities[i], self.dims[i]):
                raise ValueError(f"embedding table {i} has shape {E.shape}")

    @property
    def n(self) -> int:
        return len(self.names)

    @classmethod
    def init(cls, names, cardinalities, dims, k, rng) -> "ContextSchema":
        emb = [rng.uniform(-INIT_SCALE, INIT_SCALE, size=(c, d))
               for c, d in zip(cardinalities, dims)]
        mix = [rng.uniform(-INIT_SCALE, INIT_SCALE, size=(k, d)) for d in dims]
        return cls(names, cardinalities, dims, k, emb, mix, np.zeros(k))

    def tensors(self) -> dict:
        out = {}
        for i in range(self.n):
            out[f"E_{i}"] = self.embeddings[i]
            out[f"M_{i}"] = self.combiner_w[i]
        out["b_0"] = self.combiner_b
        return out

    def embed(self, context_ids) -> np.ndarray:
        """Context vector (k,) for one id tuple; the spec'd n=1 shortcut
        returns the raw embedding row with no combiner at all."""
        return self.embed_batch(np.asarray(context_ids, dtype=np.int64)[None, :])[0]

    def embed_batch(self, ctx: np.ndarray) -> np.ndarray:
        """(B, n) id rows -> (B, k) context vectors."""
        if ctx.shape[1] != self.n:
            raise ValueError(f"expected {self.n} context ids, got {ctx.shape[1]}")
        for i in range(self.n):
            col = ctx[:, i]
            if col.min(initial=0) < 0 or col.max(initial=0) >= self.cardinalities[i]:
                raise IndexError(f"context id out of range for variable {self.names[i]}")
        if self.n == 1:
            return self.embeddings[0][ctx[:, 0]].copy()
        u = np.broadcast_to(self.combiner_b, (ctx.shape[0], self.k)).copy()
        for i in range(self.n):
            u += self.embeddings[i][ctx[:, i]] @ self.combiner_w[i].T
        return np.tanh(u)

    def embed_backward(self, ctx, cvec, dcvec, grads) -> None:
        """Accumulate combiner/embedding grads for d(loss)/d(cvec) = dcvec.

        grads is a name->array dict matching tensors(); rows of E_i are
        scattered with duplicate context ids accumulated.
        """
        from . import kernels

        if self.n == 1:
            kernels.scatter_add_rows(grads["E_0"], ctx[:, 0], dcvec)
            return
        du = dcvec * (1.0 - cvec * cvec)
        grads["b_0"] += du.sum(axis=0)
        for i in range(self.n):
            rows = self.embeddings[i][ctx[:, i]]
            grads[f"M_{i}"] += du.T @ rows
            kernels.scatter_add_rows(grads[f"E_{i}"], ctx[:, i], du @ self.combiner_w[i])

    def nearest_neighbors(self, var: int, value_id: int, top_k: int):
        """(value_id, euclidean distance) pairs nearest the query row,
        ascending, query excluded, distance ties broken by lower id."""
        if not 0 <= var < self.n:
            raise IndexError(f"context variable index {var} out of range")
        E = self.embeddings[var]
        if not 0 <= value_id < E.shape[0]:
            raise IndexError(f"value id {value_id} out of range")
        d = np.sqrt(((E - E[value_id]) ** 2).sum(axis=1))
        ids = np.arange(E.shape[0])
        keep = ids != value_id
        order = np.lexsort((ids[keep], d[keep]))
        take = order[: max(0, top_k)]
        return [(int(ids[keep][j]), float(d[keep][j])) for j in take]
