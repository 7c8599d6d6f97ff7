"""Independent reference implementations used to check the real ones.

Everything here is deliberately written with plain Python lists, loops, and
the math module: no numpy, no shared code with the package. Slow and simple
beats fast and entangled, because these are the arbiters.
"""
import math


def rel_err(a, b, floor=1e-12):
    """Norm-based relative error between two same-shaped nested structures."""
    fa, fb = _flatten(a), _flatten(b)
    assert len(fa) == len(fb)
    diff = math.sqrt(sum((x - y) ** 2 for x, y in zip(fa, fb)))
    scale = math.sqrt(sum(x * x for x in fa)) + math.sqrt(sum(y * y for y in fb))
    return diff / max(scale, floor)


def _flatten(x):
    if isinstance(x, (int, float)):
        return [float(x)]
    out = []
    for item in x:
        out.extend(_flatten(item))
    return out


def _sigmoid(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def _column(matrix, j):
    return [row[j] for row in matrix]


def lstm_forward_oracle(layers, head_w, head_b, window):
    """Step-by-step stacked LSTM recurrence on one scaled window.

    layers: list of dicts {"w": {gate: rows}, "u": {...}, "b": {...}} with
    gates named input/forget/output/candidate; head_w is a column as a flat
    list. Returns tanh(h_last . head_w + head_b).
    """
    xs = [[float(v)] for v in window]
    for layer in layers:
        hidden = len(layer["b"]["input"])
        h = [0.0] * hidden
        c = [0.0] * hidden
        outputs = []
        for x in xs:
            gates = {}
            for name in ("input", "forget", "output", "candidate"):
                pre = [_dot(x, _column(layer["w"][name], j))
                       + _dot(h, _column(layer["u"][name], j))
                       + layer["b"][name][j]
                       for j in range(hidden)]
                if name == "candidate":
                    gates[name] = [math.tanh(p) for p in pre]
                else:
                    gates[name] = [_sigmoid(p) for p in pre]
            c = [gates["forget"][j] * c[j] + gates["input"][j] * gates["candidate"][j]
                 for j in range(hidden)]
            h = [gates["output"][j] * math.tanh(c[j]) for j in range(hidden)]
            outputs.append(h)
        xs = outputs
    z = _dot(xs[-1], head_w) + head_b
    return math.tanh(z)


def normalized_adjacency_oracle(a):
    """D^{-1/2} (A + I) D^{-1/2} computed with explicit loops."""
    n = len(a)
    a_tilde = [[a[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    degree = [sum(row) for row in a_tilde]
    return [[a_tilde[i][j] / math.sqrt(degree[i]) / math.sqrt(degree[j])
             for j in range(n)] for i in range(n)]


def _mat_mul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            aik = a[i][k]
            if aik == 0.0:
                continue
            for j in range(cols):
                out[i][j] += aik * b[k][j]
    return out


def _activate(m, kind):
    def f(v):
        if kind == "relu":
            return v if v > 0 else 0.0
        if kind == "tanh":
            return math.tanh(v)
        if kind == "sigmoid":
            return _sigmoid(v)
        if kind == "linear":
            return v
        raise AssertionError(f"oracle got unknown activation {kind}")
    return [[f(v) for v in row] for row in m]


def gcn_forward_oracle(a, weights, activations, x):
    """Layer-by-layer propagation H <- act(A_hat H W) with dense loops.

    a is the raw 0/1 adjacency (no self loops); normalization happens here so
    the oracle shares nothing with the implementation.
    """
    a_hat = normalized_adjacency_oracle(a)
    h = [list(map(float, row)) for row in x]
    for w, kind in zip(weights, activations):
        h = _activate(_mat_mul(a_hat, _mat_mul(h, w)), kind)
    return h


def windowed_max_oracle(series, k):
    """For every window of k consecutive values, its maximum; plain loops."""
    out = []
    for end in range(k - 1, len(series)):
        best = series[end - k + 1]
        for v in series[end - k + 2:end + 1]:
            if v > best:
                best = v
        out.append(best)
    return out
