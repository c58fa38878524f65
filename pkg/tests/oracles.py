"""Independent reference implementations used by the test suite.

Everything here is written with plain Python loops on purpose, so that it
shares no vectorised code path with the library.
"""

import math

import numpy as np

from cycnpf.autodiff import Tensor, ops


def mcd_loop(x, y):
    const = 10.0 * math.sqrt(2.0) / math.log(10.0)
    total = 0.0
    for t in range(len(x)):
        acc = 0.0
        for d in range(len(x[t])):
            acc += (float(x[t][d]) - float(y[t][d])) ** 2
        total += math.sqrt(acc)
    return const * total / len(x)


def lsd_loop(x, y, floor=1e-10):
    total = 0.0
    for t in range(len(x)):
        acc = 0.0
        for k in range(len(x[t])):
            r = 20.0 * math.log10(max(float(x[t][k]), floor) / max(float(y[t][k]), floor))
            acc += r * r
        total += math.sqrt(acc / len(x[t]))
    return total / len(x)


def _popvar(column):
    m = sum(column) / len(column)
    return sum((v - m) ** 2 for v in column) / len(column)


def lgd_loop(x, y, floor=1e-12):
    dims = len(x[0])
    acc = 0.0
    for d in range(dims):
        gx = max(_popvar([float(row[d]) for row in x]), floor)
        gy = max(_popvar([float(row[d]) for row in y]), floor)
        acc += (math.log(gx) - math.log(gy)) ** 2
    return math.sqrt(acc / dims)


def dtw_brute_force(x, y):
    """Minimum path cost over every monotone path with steps (1,1), (1,0), (0,1)."""
    tx, ty = len(x), len(y)
    # v * v rather than v ** 2: libm pow is not always correctly rounded
    local = [[sum((float(a) - float(b)) * (float(a) - float(b)) for a, b in zip(x[i], y[j])) for j in range(ty)]
             for i in range(tx)]
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc += local[i][j]
        if (i, j) == (tx - 1, ty - 1):
            best = min(best, acc)
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < tx and j + dj < ty:
                walk(i + di, j + dj, acc)

    walk(0, 0, 0.0)
    return best


def count_monotone_paths(tx, ty):
    """Delannoy number D(tx - 1, ty - 1)."""
    m, n = tx - 1, ty - 1
    return sum(math.comb(m, k) * math.comb(n, k) * 2**k for k in range(min(m, n) + 1))


def op_cases(rng):
    """(name, fn, params) triples for gradient checks at float64 and tiny shapes."""
    def leaf(*shape, positive=False):
        v = rng.normal(size=shape)
        if positive:
            v = np.abs(v) + 0.5
        return Tensor(v, requires_grad=True)

    def away_from_zero(*shape):
        v = rng.normal(size=shape)
        v = np.where(np.abs(v) < 0.1, v + 0.3 * np.sign(v + 1e-12), v)
        return Tensor(v, requires_grad=True)

    cases = []

    def case(name, build, **params):
        cases.append((name, lambda: build(**params), params))

    sq = lambda t: ops.sum(ops.square(t))  # noqa: E731
    case("add_broadcast", lambda a, b: ops.sum(ops.mul(ops.add(a, b), ops.add(a, b))), a=leaf(3, 4), b=leaf(4))
    case("mul_broadcast", lambda a, b: ops.sum(ops.mul(a, b)), a=leaf(2, 3), b=leaf(1, 3))
    case("neg_scale", lambda a: sq(ops.scale(ops.neg(a), 1.7)), a=leaf(5))
    for name, f in (("tanh", ops.tanh), ("sigmoid", ops.sigmoid), ("exp", ops.exp), ("square", ops.square)):
        case(name, lambda x, f=f: ops.sum(ops.mul(f(x), f(x))), x=leaf(2, 3))
    for name, f in (("log", ops.log), ("sqrt", ops.sqrt)):
        case(name, lambda x, f=f: sq(f(x)), x=leaf(2, 3, positive=True))
    for name, f in (("relu", ops.relu), ("abs", ops.absolute), ("leaky_relu", ops.leaky_relu)):
        case(name, lambda x, f=f: sq(f(x)), x=away_from_zero(2, 4))
    case("mean_axis", lambda a: sq(ops.mean(a, axis=0)), a=leaf(3, 4))
    case("reshape_getitem", lambda a: sq(ops.getitem(ops.reshape(a, (3, 4)), (slice(1, 3), 2))), a=leaf(2, 6))
    case("concat_split",
         lambda a, b: ops.sum(ops.mul(ops.split(ops.concat([a, b], axis=1), 1, axis=1)[0], ops.concat([b, a], axis=1))),
         a=leaf(2, 3), b=leaf(2, 2))
    case("linear", lambda x, w, b: sq(ops.linear(x, w, b)), x=leaf(2, 3, 4), w=leaf(4, 5), b=leaf(5))
    for causal in (False, True):
        for dil in (1, 3):
            case(f"conv1d_d{dil}_{'causal' if causal else 'same'}",
                 lambda x, w, b, d=dil, c=causal: sq(ops.conv1d(x, w, b, dilation=d, causal=c)),
                 x=leaf(2, 7, 3), w=leaf(3, 3, 2), b=leaf(2))
    case("conv1d_k2_causal", lambda x, w: sq(ops.conv1d(x, w, None, dilation=2, causal=True)),
         x=leaf(2, 6, 4), w=leaf(2, 4, 3))
    codes = rng.integers(0, 6, size=(2, 5))
    case("embedding", lambda table: sq(ops.embedding(codes, table)), table=leaf(6, 3))
    hid = 3
    gru = dict(h=leaf(2, hid), w_ih=leaf(4, 3 * hid), w_hh=leaf(hid, 3 * hid), b_ih=leaf(3 * hid), b_hh=leaf(3 * hid))
    case("gru_cell", lambda x, h, w_ih, w_hh, b_ih, b_hh: sq(ops.gru_cell(x, h, w_ih, w_hh, b_ih, b_hh)),
         x=leaf(2, 4), **gru)
    case("gru_sequence", lambda x, h, w_ih, w_hh, b_ih, b_hh: sq(ops.gru_sequence(x, h, w_ih, w_hh, b_ih, b_hh)),
         x=leaf(2, 4, 4), **gru)
    targets = rng.integers(0, 5, size=(2, 3))
    case("softmax_cross_entropy", lambda logits: ops.softmax_cross_entropy(logits, targets), logits=leaf(2, 3, 5))
    p = leaf(3, 4)
    # keep |p - q| away from the kink
    q = Tensor(p.data - np.where(rng.random((3, 4)) > 0.5, 1.0, -1.0) * (0.2 + rng.random((3, 4))), requires_grad=True)
    case("l1_loss", ops.l1_loss, x=p, y=q)
    case("l2_loss", ops.l2_loss, x=leaf(3, 4), y=leaf(3, 4))
    sig = leaf(2, 48)
    target = Tensor(rng.normal(size=ops.stft_mag(sig, 32, 8, 16).shape))
    case("stft_mag", lambda x: sq(ops.add(ops.stft_mag(x, 32, 8, 16), ops.neg(target))), x=sig)
    return cases

def cycle_loss_case(rng, rho=0.7, frames=5):
    """Float64 Cycle-VC objective on a tiny model, with its parameter map.

    Parameters (biases included) are redrawn at random so that no activation
    sits exactly on a leaky-ReLU kink, as zero-initialised biases can.
    """
    from cycnpf.cyclevc import ConversionModuleConfig, CycleVcModel

    cfg = ConversionModuleConfig(conv_channels=3, gru_hidden=3, out_hidden=3)
    model = CycleVcModel(cfg, rho=rho, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    for p in model.graph.params.values():
        p.data = rng.normal(scale=0.5, size=p.shape)
    a = rng.normal(size=(frames, 50))
    b = rng.normal(size=(frames, 50))
    return model, (lambda: model.cycle_loss(a, b)), dict(model.graph.params)
