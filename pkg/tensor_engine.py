"""
Moteur de tenseurs denses avec différentiation automatique en mode inverse

Chaque opération enregistre ses entrées et sa règle de rétropropagation ;
backward() parcourt ensuite le graphe de calcul en ordre topologique inverse.
Toutes les valeurs sont des matrices 2D en float64.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from errors import NumericError, ShapeError

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("tanh", "leaky_relu", "sigmoid")

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Matrice réelle 2D avec gradient optionnel"""

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None,
                 parents: Tuple["Tensor", ...] = (), backward_fn: Optional[BackwardFn] = None,
                 op: str = "leaf"):
        """
        Args:
            values: Scalaire, vecteur (devient une ligne 1×n) ou matrice
            requires_grad: Accumuler un gradient pour ce tenseur
            name: Nom du paramètre (utilisé dans les messages et checkpoints)
        """
        array = np.array(values, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim > 2:
            raise ShapeError(f"tenseur {array.ndim}D non supporté")
        self.values = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward_fn = backward_fn
        self.op = op

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() sur un tenseur de forme {self.shape}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)


def _make(values: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Crée le tenseur résultat d'une opération et vérifie qu'il est fini"""
    if not np.all(np.isfinite(values)):
        raise NumericError(op, f"forme {values.shape}")
    requires_grad = any(p.requires_grad for p in parents)
    if not requires_grad:
        return Tensor(values, op=op)
    return Tensor(values, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn, op=op)


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: formes {a.shape} et {b.shape} incompatibles")


# ---------------------------------------------------------------------------
# Opérations élémentaires
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Union[Tensor, float]) -> Tensor:
    """Somme ; b peut être un scalaire, un tenseur de même forme ou une ligne de biais"""
    if not isinstance(b, Tensor):
        c = float(b)
        return _make(a.values + c, (a,), lambda g: (g,), "add_scalar")

    if a.shape == b.shape:
        return _make(a.values + b.values, (a, b), lambda g: (g, g), "add")
    if b.shape == (1, a.shape[1]):
        return _make(a.values + b.values, (a, b),
                     lambda g: (g, g.sum(axis=0, keepdims=True)), "add_bias")
    raise ShapeError(f"add: formes {a.shape} et {b.shape} incompatibles")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.values * c, (a,), lambda g: (g * c,), "scale")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Produit élément par élément"""
    _check_same_shape(a, b, "mul")
    return _make(a.values * b.values, (a, b), lambda g: (g * b.values, g * a.values), "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: formes {a.shape} et {b.shape} incompatibles")
    return _make(a.values @ b.values, (a, b),
                 lambda g: (g @ b.values.T, a.values.T @ g), "matmul")


def linear(x, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    Transformation affine xWᵀ + b

    Args:
        x: Tenseur (n × in) ou matrice creuse scipy constante (n × in)
        W: Poids (out × in)
        b: Biais ligne (1 × out), optionnel
    """
    if sp.issparse(x):
        if x.shape[1] != W.shape[1]:
            raise ShapeError(f"linear: entrée {x.shape} et poids {W.shape} incompatibles")
        x_csr = sp.csr_matrix(x)
        out = np.asarray(x_csr @ W.values.T)
        y = _make(out, (W,), lambda g: (np.asarray(x_csr.T @ g).T,), "linear_sparse")
    else:
        if x.shape[1] != W.shape[1]:
            raise ShapeError(f"linear: entrée {x.shape} et poids {W.shape} incompatibles")
        y = _make(x.values @ W.values.T, (x, W),
                  lambda g: (g @ W.values, g.T @ x.values), "linear")
    if b is not None:
        if b.shape != (1, W.shape[0]):
            raise ShapeError(f"linear: biais {b.shape} attendu (1, {W.shape[0]})")
        y = add(y, b)
    return y


def sparse_matmul(A, X: Tensor) -> Tensor:
    """Produit A·X avec A creuse constante"""
    if A.shape[1] != X.shape[0]:
        raise ShapeError(f"sparse_matmul: formes {A.shape} et {X.shape} incompatibles")
    A_csr = sp.csr_matrix(A)
    return _make(np.asarray(A_csr @ X.values), (X,),
                 lambda g: (np.asarray(A_csr.T @ g),), "sparse_matmul")


def activation(x: Tensor, kind: str, slope: float = LEAKY_SLOPE) -> Tensor:
    """
    Activation élément par élément

    Args:
        kind: "tanh", "leaky_relu" ou "sigmoid"
        slope: Pente négative de leaky_relu
    """
    v = x.values
    if kind == "tanh":
        y = np.tanh(v)
        return _make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")
    if kind == "leaky_relu":
        y = np.where(v > 0, v, slope * v)
        return _make(y, (x,), lambda g: (g * np.where(v > 0, 1.0, slope),), "leaky_relu")
    if kind == "sigmoid":
        # forme stable pour les grandes valeurs négatives
        e = np.exp(-np.abs(v))
        y = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")
    raise ValueError(f"activation inconnue: {kind}")


def log(x: Tensor) -> Tensor:
    if np.any(x.values <= 0):
        raise NumericError("log", "argument non positif")
    return _make(np.log(x.values), (x,), lambda g: (g / x.values,), "log")


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Écrêtage ; gradient nul hors de [low, high]"""
    inside = (x.values >= low) & (x.values <= high)
    return _make(np.clip(x.values, low, high), (x,), lambda g: (g * inside,), "clip")


def sum_all(x: Tensor) -> Tensor:
    return _make(np.array([[x.values.sum()]]), (x,),
                 lambda g: (np.full(x.shape, g[0, 0]),), "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.values.size
    return _make(np.array([[x.values.mean()]]), (x,),
                 lambda g: (np.full(x.shape, g[0, 0] / n),), "mean")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concaténation par colonnes, dans l'ordre des parties"""
    if not parts:
        raise ShapeError("concat: aucune partie")
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeError(f"concat: {p.shape[0]} lignes au lieu de {rows}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward_fn(g):
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(parts)))

    return _make(np.concatenate([p.values for p in parts], axis=1), parts, backward_fn, "concat")


def weighted_sum(parts: Sequence[Tensor], weights: Tensor) -> Tensor:
    """
    Somme pondérée Σ_k w_k · part_k

    Args:
        parts: P tenseurs de même forme (n × c)
        weights: (1 × P) pour des poids globaux, (n × P) pour des poids par ligne
    """
    if not parts:
        raise ShapeError("weighted_sum: aucune partie")
    shape = parts[0].shape
    for p in parts:
        _check_same_shape(parts[0], p, "weighted_sum")
    P = len(parts)
    if weights.shape not in ((1, P), (shape[0], P)):
        raise ShapeError(f"weighted_sum: poids {weights.shape} pour {P} parties de forme {shape}")

    w = weights.values
    per_row = weights.shape[0] != 1 or shape[0] == 1
    if per_row:
        out = sum(w[:, k:k + 1] * parts[k].values for k in range(P))
    else:
        out = sum(w[0, k] * parts[k].values for k in range(P))

    def backward_fn(g):
        if per_row:
            grads_parts = tuple(g * w[:, k:k + 1] if parts[k].requires_grad else None for k in range(P))
            grad_w = np.stack([(g * parts[k].values).sum(axis=1) for k in range(P)], axis=1)
        else:
            grads_parts = tuple(g * w[0, k] if parts[k].requires_grad else None for k in range(P))
            grad_w = np.array([[float((g * parts[k].values).sum()) for k in range(P)]])
        return grads_parts + (grad_w,)

    return _make(np.asarray(out, dtype=np.float64), tuple(parts) + (weights,), backward_fn, "weighted_sum")


def masked_softmax(scores: Tensor, mask: Optional[Sequence[int]] = None) -> Tensor:
    """
    Softmax par ligne restreint aux colonnes du masque

    Les colonnes hors masque valent exactement 0 ; le maximum est soustrait
    avant l'exponentielle pour la stabilité.

    Args:
        scores: (n × c)
        mask: Indices de colonnes ; None = toutes les colonnes
    """
    cols = scores.shape[1]
    if mask is None:
        idx = np.arange(cols)
    else:
        idx = np.unique(np.asarray(list(mask), dtype=np.int64))
    if idx.size == 0:
        raise ValueError("masked_softmax: masque vide")
    if idx.min() < 0 or idx.max() >= cols:
        raise ShapeError(f"masked_softmax: indice de masque hors de [0, {cols})")

    s = scores.values[:, idx]
    e = np.exp(s - s.max(axis=1, keepdims=True))
    sub = e / e.sum(axis=1, keepdims=True)
    out = np.zeros_like(scores.values)
    out[:, idx] = sub

    def backward_fn(g):
        gs = g[:, idx]
        inner = (gs * sub).sum(axis=1, keepdims=True)
        grad = np.zeros_like(g)
        grad[:, idx] = sub * (gs - inner)
        return (grad,)

    return _make(out, (scores,), backward_fn, "masked_softmax")


def segment_softmax(scores: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """
    Softmax de chaque colonne à l'intérieur de chaque segment de lignes

    Args:
        scores: (E × K), une ligne par arête
        segment_ids: Segment de chaque ligne (E,)
        num_segments: Nombre total de segments
    """
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != scores.shape[0]:
        raise ShapeError("segment_softmax: segment_ids de mauvaise longueur")
    s = scores.values
    seg_max = np.full((num_segments, s.shape[1]), -np.inf)
    np.maximum.at(seg_max, seg, s)
    e = np.exp(s - seg_max[seg])
    seg_sum = np.zeros((num_segments, s.shape[1]))
    np.add.at(seg_sum, seg, e)
    y = e / seg_sum[seg]

    def backward_fn(g):
        inner = np.zeros((num_segments, s.shape[1]))
        np.add.at(inner, seg, g * y)
        return (y * (g - inner[seg]),)

    return _make(y, (scores,), backward_fn, "segment_softmax")


def segment_sum(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Somme des lignes de x par segment, en ordre de lignes fixe"""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != x.shape[0]:
        raise ShapeError("segment_sum: segment_ids de mauvaise longueur")
    out = np.zeros((num_segments, x.shape[1]))
    np.add.at(out, seg, x.values)
    return _make(out, (x,), lambda g: (g[seg],), "segment_sum")


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def backward_fn(g):
        grad = np.zeros((n, x.shape[1]))
        np.add.at(grad, idx, g)
        return (grad,)

    return _make(x.values[idx], (x,), backward_fn, "gather_rows")


def head_dot(x: Tensor, a: Tensor) -> Tensor:
    """
    Produit scalaire par tête : x (n × K·d) découpé en K blocs, a (K × d) → (n × K)
    """
    K, d = a.shape
    if x.shape[1] != K * d:
        raise ShapeError(f"head_dot: {x.shape[1]} colonnes pour {K} têtes de largeur {d}")
    xb = x.values.reshape(x.shape[0], K, d)
    out = np.einsum("nkd,kd->nk", xb, a.values)

    def backward_fn(g):
        grad_x = (g[:, :, None] * a.values[None, :, :]).reshape(x.shape)
        grad_a = np.einsum("nk,nkd->kd", g, xb)
        return grad_x, grad_a

    return _make(out, (x, a), backward_fn, "head_dot")


def head_scale(x: Tensor, w: Tensor) -> Tensor:
    """Multiplie chaque bloc de tête de x (n × K·d) par le coefficient w (n × K)"""
    n, K = w.shape
    if x.shape[0] != n or x.shape[1] % K != 0:
        raise ShapeError(f"head_scale: formes {x.shape} et {w.shape} incompatibles")
    d = x.shape[1] // K
    xb = x.values.reshape(n, K, d)
    out = (xb * w.values[:, :, None]).reshape(x.shape)

    def backward_fn(g):
        gb = g.reshape(n, K, d)
        return (gb * w.values[:, :, None]).reshape(x.shape), (gb * xb).sum(axis=2)

    return _make(out, (x, w), backward_fn, "head_scale")


# ---------------------------------------------------------------------------
# Rétropropagation
# ---------------------------------------------------------------------------

class ComputationRecord:
    """Nœuds du graphe de calcul en ordre topologique (entrées avant sorties)"""

    def __init__(self, output: Tensor):
        self.nodes: List[Tensor] = []
        seen = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor):
    """
    Accumule d/dloss dans .grad de toutes les feuilles requires_grad

    Des appels répétés sans remise à zéro s'additionnent.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward attend un scalaire, reçu {loss.shape}")
    if not loss.requires_grad:
        return

    record = ComputationRecord(loss)
    upstream: Dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(record.nodes):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            upstream[key] = pg if key not in upstream else upstream[key] + pg


# ---------------------------------------------------------------------------
# Initialisation et optimiseur
# ---------------------------------------------------------------------------

def xavier_uniform(rng: np.random.Generator, rows: int, cols: int,
                   fan_in: Optional[int] = None, fan_out: Optional[int] = None) -> np.ndarray:
    """Tirage Xavier uniforme, variance 2/(fan_in + fan_out)"""
    fan_in = cols if fan_in is None else fan_in
    fan_out = rows if fan_out is None else fan_out
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class AdamState:
    """Moments d'Adam par paramètre et compteur de pas"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """
    Un pas d'Adam avec correction de biais, appliqué en place sur params

    Args:
        params: Paramètres nommés
        grads: Gradients nommés (absents = gradient nul)
        state: Moments courants, mis à jour et renvoyés

    Returns:
        L'état mis à jour
    """
    if state.step < 0:
        raise ValueError("compteur de pas négatif")
    state.step += 1
    t = state.step
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(param.shape)
        if g.shape != param.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} pour '{name}' de forme {param.shape}")
        m = state.m.get(name, np.zeros(param.shape))
        v = state.v.get(name, np.zeros(param.shape))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        param.values = param.values - lr * m_hat / (np.sqrt(v_hat) + eps)
        state.m[name] = m
        state.v[name] = v
    return state
