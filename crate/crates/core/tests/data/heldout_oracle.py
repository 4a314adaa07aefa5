# Posterior-predictive held-out log-likelihood for the fixture in tests/assess.rs,
# at 50 digits.
from mpmath import mp, mpf, exp, log

mp.dps = 50
feat = {0: (1, 0), 1: (0, 1), 2: (mpf("0.6"), mpf("0.8")), 3: (mpf("-0.5"), mpf("0.3"))}
samples = [(mpf("0.6"), mpf("0.8")), (1, 0)]
beta, delta = mpf("1.5"), mpf("0.7")


def sig(x):
    return 1 / (1 + exp(-x))


def reward(w, i):
    return w[0] * feat[i][0] + w[1] * feat[i][1]


def pref(w, items, chosen):
    r = [beta * reward(w, i) for i in items]
    return exp(r[chosen]) / sum(exp(x) for x in r)


def weak(w, items, choice):
    x = beta * (reward(w, items[0]) - reward(w, items[1]))
    p1, p2 = sig(x - delta), sig(-x - delta)
    return {"first": p1, "second": p2, "equal": 1 - p1 - p2}[choice]


def rank(w, items, order):
    r = [beta * reward(w, items[k]) for k in order]
    p = mpf(1)
    for s in range(len(r)):
        p *= exp(r[s]) / sum(exp(x) for x in r[s:])
    return p


heldout = [
    lambda w: pref(w, [0, 1], 0),
    lambda w: pref(w, [2, 3], 1),
    lambda w: weak(w, [0, 2], "equal"),
    lambda w: weak(w, [1, 3], "second"),
    lambda w: rank(w, [0, 1, 3], [2, 0, 1]),
]
total = sum(log(sum(f(w) for w in samples) / len(samples)) for f in heldout)
print(mp.nstr(total / len(heldout), 30))
