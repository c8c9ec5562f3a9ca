"""Reference values frozen into the C++ unit tests.

Everything here is computed by brute force with mpmath at 50 digits, with no
shared code with the library. Run `python3 tests/oracle/oracle.py` to print
the values.
"""
import itertools

import mpmath as mp

mp.mp.dps = 50

# Fixed CRF instance used by test_crf.cpp.
EMISSIONS = [[0.5, -1.0, 0.25], [1.5, 0.0, -0.75], [-0.5, 2.0, 0.125]]
TRANSITIONS = [[0.2, -0.4, 0.0], [0.1, 0.3, -1.2], [-0.6, 0.8, 0.05]]


def path_score(path):
    s = mp.mpf(0)
    for j, y in enumerate(path):
        s += mp.mpf(EMISSIONS[j][y])
        if j:
            s += mp.mpf(TRANSITIONS[path[j - 1]][y])
    return s


def crf():
    L, Y = len(EMISSIONS), len(EMISSIONS[0])
    paths = list(itertools.product(range(Y), repeat=L))
    scores = {p: path_score(p) for p in paths}
    log_z = mp.log(mp.fsum(mp.exp(s) for s in scores.values()))
    best = max(paths, key=lambda p: (scores[p], [-y for y in p]))
    marg = [[mp.fsum(mp.exp(scores[p] - log_z) for p in paths if p[j] == c) for c in range(Y)] for j in range(L)]
    print("crf log_z", mp.nstr(log_z, 17))
    print("crf viterbi", best, mp.nstr(scores[best], 17))
    for j in range(L):
        print("crf marginal", j, [mp.nstr(v, 17) for v in marg[j]])


def phce(p, tau):
    p, tau = mp.mpf(p), mp.mpf(tau)
    return -tau * p + mp.log(tau) + 1 if p <= 1 / tau else -mp.log(p)


def numerics():
    print("kl [.75,.25]||[.5,.5]", mp.nstr(mp.mpf(0.75) * mp.log(1.5) + mp.mpf(0.25) * mp.log(0.5), 17))
    print("entropy [.2,.3,.5]", mp.nstr(-sum(mp.mpf(x) * mp.log(x) for x in ("0.2", "0.3", "0.5")), 17))
    print("lse [1,2,3]", mp.nstr(mp.log(mp.e + mp.e ** 2 + mp.e ** 3), 17))
    print("phce 0.05", mp.nstr(phce("0.05", 10), 17), "phce 0.5", mp.nstr(phce("0.5", 10), 17))
    print("msl {0.5,1}", mp.nstr((phce("0.5", 10) + phce(1, 10)) / 2, 17))
    # BALD of passes [0.9,0.1] and [0.3,0.7].
    h = lambda v: -sum(x * mp.log(x) for x in v if x > 0)
    a, b = [mp.mpf("0.9"), mp.mpf("0.1")], [mp.mpf("0.3"), mp.mpf("0.7")]
    m = [(x + y) / 2 for x, y in zip(a, b)]
    bald = h(m) - (h(a) + h(b)) / 2
    print("bald", mp.nstr(bald, 17), "certainty", mp.nstr(1 - bald / mp.log(2), 17))


if __name__ == "__main__":
    crf()
    numerics()
