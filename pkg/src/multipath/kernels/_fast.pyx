# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled candidate ranking/retention kernels.

Contract-identical to kernels.pure (which is also the tested reference);
ordering is descending value with ties broken by lower index.
"""

import math

from libc.math cimport exp, log
from libcpp.algorithm cimport sort as cpp_sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector

BACKEND = "fast"

MASS_SLACK = 1e-12

cdef double NEG_INF = float("-inf")


cdef vector[pair[double, long]] _keyed(object values):
    # Key is (-value, index): ascending std::sort yields descending values
    # with ties broken by lower index. -(-inf) = +inf sorts last.
    cdef vector[pair[double, long]] items
    cdef long i = 0
    cdef double v
    items.reserve(len(values))
    for x in values:
        v = x
        items.push_back(pair[double, long](-v, i))
        i += 1
    return items


def topk_indices(values, k):
    """Indices of the k largest values, descending, ties to the lower index."""
    cdef long kk = k
    if kk < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    cdef vector[pair[double, long]] items = _keyed(values)
    cpp_sort(items.begin(), items.end())
    cdef long n = items.size()
    cdef long take = kk if kk < n else n
    cdef long j
    out = []
    for j in range(take):
        out.append(items[j].second)
    return out


def prune_prefix(logprobs, mass_fraction, max_width, total_logprob=None):
    """Minimal high-probability prefix covering mass_fraction of the total.

    See kernels.pure.prune_prefix for the full contract.
    """
    cdef double frac = mass_fraction
    cdef long cap = max_width
    cdef vector[pair[double, long]] items = _keyed(logprobs)
    cdef long n = items.size()
    if n == 0:
        raise ValueError("candidate list is empty")
    if frac < 0.0 or frac > 1.0:
        raise ValueError(f"mass_fraction must be in [0, 1], got {mass_fraction}")
    if cap < 1:
        raise ValueError(f"max_width must be >= 1, got {max_width}")

    # Total over input order (pre-sort) to stay bitwise-identical to the
    # pure backend's log_sum_exp.
    cdef double total
    cdef double m, acc
    cdef long j
    if total_logprob is None:
        m = NEG_INF
        for j in range(n):
            if -items[j].first > m:
                m = -items[j].first
        if m == NEG_INF:
            raise ValueError("all candidates have zero probability")
        acc = 0.0
        for j in range(n):
            acc += exp((-items[j].first) - m)
        total = m + log(acc)
    else:
        total = total_logprob
        if total == NEG_INF:
            raise ValueError("all candidates have zero probability")

    cpp_sort(items.begin(), items.end())

    cdef long limit = n if n < cap else cap
    cdef long count = limit
    cdef double cum = 0.0, comp = 0.0, term, y, t
    for j in range(limit):
        term = exp((-items[j].first) - total)
        y = term - comp
        t = cum + y
        comp = (t - cum) - y
        cum = t
        if cum >= frac - MASS_SLACK:
            count = j + 1
            break

    out = []
    for j in range(count):
        out.append(items[j].second)
    return out, count


def nucleus_prefix(probs, top_p, top_k):
    """Support of combined top-k / top-p selection, descending-probability order.

    See kernels.pure.nucleus_prefix for the full contract.
    """
    cdef double p = top_p
    cdef long kk = top_k
    if p <= 0.0 or p > 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    if kk < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    cdef vector[pair[double, long]] items = _keyed(probs)
    cdef long n = items.size()
    if n == 0:
        raise ValueError("distribution is empty")
    cpp_sort(items.begin(), items.end())
    if -items[0].first <= 0.0:
        raise ValueError("all probabilities are zero")

    cdef long mass_count = n
    cdef double cum = 0.0, comp = 0.0, y, t
    cdef long j
    for j in range(n):
        y = (-items[j].first) - comp
        t = cum + y
        comp = (t - cum) - y
        cum = t
        if cum >= p - MASS_SLACK:
            mass_count = j + 1
            break

    cdef long take = mass_count if mass_count < kk else kk
    out = []
    for j in range(take):
        out.append(items[j].second)
    return out


def log_sum_exp(logprobs):
    """log(sum(exp(x))) of the entries, -inf for an all--inf input."""
    cdef vector[double] v
    cdef double x
    for item in logprobs:
        v.push_back(item)
    cdef long n = v.size(), j
    cdef double m = NEG_INF
    for j in range(n):
        if v[j] > m:
            m = v[j]
    if m == NEG_INF:
        return NEG_INF
    cdef double acc = 0.0
    for j in range(n):
        acc += exp(v[j] - m)
    return m + log(acc)
